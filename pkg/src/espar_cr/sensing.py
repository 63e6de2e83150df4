"""Multi-sector energy detection.

The detector averages the received energy over ``N`` samples in each of the
``M`` sectors (``N_eq = M*N`` samples in total) and compares the mean ``T``
with a threshold ``eta``.  Design uses Gaussian (CLT) approximations of ``T``
under both hypotheses; the exact chi-square law is only used by the Monte
Carlo oracle.

Under H1 the moments assume that the PU direction is uniform over the circle
and that the fading of the sensing samples is independent from sample to
sample, which is what makes ``var_T_H1`` carry the ``3*E_B`` term.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .antenna import SectorIntegrals
from .errors import DomainError

__all__ = [
    "Q",
    "Qinv",
    "FramePlan",
    "PriorModel",
    "DetectorDesign",
    "CLTWarning",
    "detector_statistics",
    "threshold_for_target_pd",
    "sensing_error_probabilities",
    "design_detector",
]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class CLTWarning(UserWarning):
    """Fewer than 30 samples back the Gaussian approximation of ``T``."""


def Q(x):
    """Gaussian tail probability ``Q(x) = 0.5*erfc(x/sqrt(2))``."""
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(float(x) / _SQRT2)
    from scipy.special import erfc
    return 0.5 * erfc(np.asarray(x, dtype=float) / _SQRT2)


def Qinv(p: float, tol: float = 1e-15, maxiter: int = 100) -> float:
    """Inverse of :func:`Q` on ``(0, 1)`` by bracketed Newton iteration.

    Newton steps that leave the current bracket are replaced by bisection, so
    the iteration is monotone in the bracket width.
    """
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"Qinv is defined on (0, 1), got {p}")
    lo, hi = -40.0, 40.0
    # Q is decreasing: Q(lo) > p > Q(hi)
    t = math.sqrt(-2.0 * math.log(min(p, 1.0 - p)))
    x = t - (2.515517 + 0.802853 * t + 0.010328 * t * t) / (
        1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t ** 3)
    if p > 0.5:
        x = -x
    for _ in range(maxiter):
        f = Q(x) - p
        if f > 0:
            lo = x
        else:
            hi = x
        dens = _INV_SQRT2PI * math.exp(-0.5 * x * x)
        step = f / dens if dens > 0 else math.inf
        x_new = x + step
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= tol * max(1.0, abs(x)):
            return x_new
        x = x_new
    return x


@dataclass(frozen=True)
class FramePlan:
    """Frame timing.

    ``T_f`` frame length, ``T_sen`` sensing time, ``T_train`` training time
    and ``T_s`` sampling period, all in seconds.  ``N`` samples are taken per
    sector.
    """

    T_f: float
    T_sen: float
    T_train: float
    T_s: float
    M: int

    def __post_init__(self):
        if not 0 < self.T_sen < self.T_f - self.T_train:
            raise DomainError(
                f"T_sen must lie in (0, T_f - T_train) = (0, {self.T_f - self.T_train}), "
                f"got {self.T_sen}")
        if self.T_s <= 0 or self.T_train < 0:
            raise DomainError("T_s must be positive and T_train non-negative")
        if self.N < 1:
            raise DomainError(
                f"T_sen={self.T_sen} gives no sample per sector (M={self.M}, T_s={self.T_s})")

    @classmethod
    def from_samples(cls, N: int, M: int, T_f: float, T_train: float, T_s: float):
        """Shortest sensing time that yields ``N`` samples per sector."""
        return cls(T_f=T_f, T_sen=N * M * T_s, T_train=T_train, T_s=T_s, M=M)

    @property
    def N(self) -> int:
        # the small offset absorbs round-off in T_sen = N*M*T_s
        return int(math.floor(self.T_sen / (self.M * self.T_s) * (1.0 + 1e-12)))

    @property
    def N_eq(self) -> int:
        return self.M * self.N

    @property
    def D_t(self) -> float:
        return (self.T_f - self.T_sen - self.T_train) / self.T_f


@dataclass(frozen=True)
class PriorModel:
    """PU activity prior and mean channel gains.

    ``gamma`` is the mean SU_Tx-PU gain, ``gamma_sp`` the mean SU_Rx-PU gain,
    ``P_p`` the PU power and ``sigma_w2`` the noise variance.
    """

    pi1: float = 0.3
    P_p: float = 1.0
    gamma: float = 1.0
    gamma_sp: float = 1.0
    sigma_w2: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.pi1 <= 1.0:
            raise DomainError(f"pi1 must be a probability, got {self.pi1}")
        for name in ("P_p", "gamma", "gamma_sp"):
            if not getattr(self, name) >= 0:
                raise DomainError(f"{name} must be non-negative")
        if not self.sigma_w2 > 0:
            raise DomainError("sigma_w2 must be positive")

    @property
    def pi0(self) -> float:
        return 1.0 - self.pi1

    @property
    def sigma_p2(self) -> float:
        return self.P_p * self.gamma_sp

    @property
    def snr_pu(self) -> float:
        return self.gamma * self.P_p / self.sigma_w2


@dataclass(frozen=True)
class DetectorDesign:
    """Detector statistics, threshold and sensing-outcome probabilities.

    Fields that depend on the threshold are ``nan`` until
    :func:`threshold_for_target_pd` has been applied.
    """

    zeta: float
    var_T_H0: float
    var_T_H1: float
    sigma_w2: float
    N_eq: int
    clt_warning: bool = False
    eta: float = math.nan
    P_fa: float = math.nan
    P_d: float = math.nan
    alpha0: float = math.nan
    beta0: float = math.nan
    pihat0: float = math.nan
    pihat1: float = math.nan

    @property
    def sigma_T_H0(self) -> float:
        return math.sqrt(self.var_T_H0)

    @property
    def sigma_T_H1(self) -> float:
        return math.sqrt(self.var_T_H1)

    def probabilities_at(self, eta):
        """``(P_fa, P_d)`` for an arbitrary threshold under the Gaussian model."""
        P_fa = Q((np.asarray(eta) - self.sigma_w2) / self.sigma_T_H0)
        P_d = Q((np.asarray(eta) - self.zeta) / self.sigma_T_H1)
        return P_fa, P_d


def detector_statistics(plan: FramePlan, prior: PriorModel,
                        integrals: SectorIntegrals) -> DetectorDesign:
    """Mean and variances of ``T`` under both hypotheses (threshold unset)."""
    M, N, N_eq = plan.M, plan.N, plan.N_eq
    if integrals.E_cross.shape != (M, M):
        raise DomainError(
            f"sector integrals are for M={integrals.E_cross.shape[0]}, plan has M={M}")
    s2 = prior.sigma_w2
    a = prior.gamma * prior.P_p
    E_A, E_B = integrals.E_A, integrals.E_B
    var0 = s2 * s2 / N_eq
    var1 = (s2 * s2 + 2.0 * a * E_A * s2 + a * a * (3.0 * E_B - M * N * E_A ** 2)) / N_eq \
        + a * a / M ** 2 * float(np.sum(integrals.E_cross))
    clt = N_eq < 30
    if clt:
        warnings.warn(f"N_eq={N_eq} < 30: Gaussian approximation of T is crude",
                      CLTWarning, stacklevel=2)
    return DetectorDesign(zeta=a * E_A + s2, var_T_H0=var0, var_T_H1=var1,
                          sigma_w2=s2, N_eq=N_eq, clt_warning=clt)


def sensing_error_probabilities(design: DetectorDesign, prior: PriorModel):
    """Joint probabilities ``(alpha0, beta0, pihat0, pihat1)`` of a sensed-idle channel."""
    if math.isnan(design.P_fa) or math.isnan(design.P_d):
        raise DomainError("P_fa and P_d must be set before computing sensing probabilities")
    alpha0 = prior.pi0 * (1.0 - design.P_fa)
    beta0 = prior.pi1 * (1.0 - design.P_d)
    pihat0 = alpha0 + beta0
    return alpha0, beta0, pihat0, 1.0 - pihat0


def threshold_for_target_pd(design: DetectorDesign, target_pd: float,
                            prior: PriorModel | None = None):
    """Threshold meeting ``P_d = target_pd`` and the resulting false-alarm rate.

    Returns ``(eta, P_fa)``.  When ``prior`` is given the returned design (as a
    third element) carries the sensing-outcome probabilities as well.
    """
    if not 0.0 < target_pd < 1.0:
        raise DomainError(f"target_pd must lie in (0, 1), got {target_pd}")
    q = Qinv(target_pd)
    eta = design.zeta + design.sigma_T_H1 * q
    P_fa = Q((design.sigma_T_H1 * q + design.zeta - design.sigma_w2) / design.sigma_T_H0)
    if prior is None:
        return eta, P_fa
    out = replace(design, eta=eta, P_fa=P_fa, P_d=float(target_pd))
    alpha0, beta0, pihat0, pihat1 = sensing_error_probabilities(out, prior)
    return eta, P_fa, replace(out, alpha0=alpha0, beta0=beta0, pihat0=pihat0, pihat1=pihat1)


def design_detector(plan: FramePlan, prior: PriorModel, integrals: SectorIntegrals,
                    target_pd: float) -> DetectorDesign:
    """Statistics, threshold and sensing probabilities in one call."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CLTWarning)
        stats = detector_statistics(plan, prior, integrals)
    return threshold_for_target_pd(stats, target_pd, prior)[2]
