"""Probability of selecting each beam as the PU direction.

During sensing the SU_Tx measures the average energy ``eps_m`` in every
sector and picks ``argmax_m eps_m`` as the PU beam.  Given the PU gain ``g``
and angle ``phi_PU`` the energies are independent gamma variables with shape
``N`` and scale ``sigma_e2[m] = (g*p_m(phi_PU)*P_p + sigma_w2)/N``.

``Omega_i`` is the selection probability for fixed ``(g, phi_PU)``,
``Delta_i`` averages it over Rayleigh fading and ``Delta_bar[i, m]``
further averages over ``phi_PU`` uniform in sector arc ``m``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special, stats

from .antenna import BeamPatternModel, TWO_PI
from .errors import DomainError, NumericalError
from .sensing import PriorModel

__all__ = [
    "PuSelectionContext",
    "PuErrorMatrix",
    "selection_prob_conditional",
    "selection_prob_series",
    "omega_matrix",
    "delta_profile",
    "average_error_matrix",
]

_TAIL = 1e-17
_G_LO, _G_HI = 1e-6, 45.0      # fading-gain range of the log-g rule (units of gamma)


@dataclass(frozen=True)
class PuSelectionContext:
    """Per-sector energy scales for one realisation of ``(g, phi_PU)``."""

    sigma_e2: tuple
    N: int

    def __post_init__(self):
        s = np.asarray(self.sigma_e2, dtype=float).ravel()
        if s.size < 1 or not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise DomainError("all sector energy scales must be finite and positive")
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "sigma_e2", tuple(float(v) for v in s))

    @classmethod
    def from_geometry(cls, model: BeamPatternModel, prior: PriorModel, N: int,
                      g: float, phi_PU: float):
        sig = g * model.gains(phi_PU) * prior.P_p
        return cls(tuple((sig + prior.sigma_w2) / N), N)

    @property
    def M(self) -> int:
        return len(self.sigma_e2)


@lru_cache(maxsize=64)
def _log_gauss_rule(N: int, K: int):
    """Nodes and weights for ``E[h(X)]``, ``X ~ Gamma(N, 1)``, by Gauss-Legendre in ``log x``."""
    lo = special.gammaincinv(N, _TAIL)
    hi = special.gammainccinv(N, _TAIL)
    t, w = special.roots_legendre(K)
    a, b = math.log(lo), math.log(hi)
    t = 0.5 * (b - a) * t + 0.5 * (a + b)
    w = 0.5 * (b - a) * w * np.exp(N * t - np.exp(t) - special.gammaln(N))
    return np.exp(t), w


def omega_matrix(scales, N: int, nodes: int = 96) -> np.ndarray:
    """Selection probabilities for a batch of scale vectors.

    Parameters
    ----------
    scales : array_like, shape (B, M)
        Per-sector energy scales; each row is one realisation.
    N : int
        Samples per sector (gamma shape).
    nodes : int
        Quadrature order.

    Returns
    -------
    ndarray, shape (B, M)
        ``out[b, i] = Pr{sector i has the largest energy}``.
    """
    s = np.atleast_2d(np.asarray(scales, dtype=float))
    B, M = s.shape
    if M == 1:
        return np.ones((B, 1))
    x, w = _log_gauss_rule(int(N), nodes)
    out = np.empty((B, M))
    for i in range(M):
        r = s[:, i, None] / np.delete(s, i, axis=1)          # (B, M-1)
        F = special.gammainc(N, x[None, :, None] * r[:, None, :])
        out[:, i] = np.prod(F, axis=-1) @ w
    return out


def _check_index(i, M):
    if int(i) != i or not 1 <= i <= M:
        raise DomainError(f"beam index must be in 1..{M}, got {i}")
    return int(i) - 1


def selection_prob_conditional(ctx: PuSelectionContext, i: int,
                               method: str = "gauss") -> float:
    """``Omega_i``: probability that beam ``i`` (1-based) has the largest energy.

    ``method="gauss"`` uses a fixed Gauss-Legendre rule in ``log x`` (accurate
    to about 1e-13 for ``N <= 200``); ``method="quad"`` integrates the gamma
    pdf times the product of the other CDFs with adaptive quadrature.
    """
    k = _check_index(i, ctx.M)
    s = np.asarray(ctx.sigma_e2)
    if method == "gauss":
        return float(omega_matrix(s[None, :], ctx.N)[0, k])
    if method != "quad":
        raise DomainError(f"unknown method {method!r}")
    r = s[k] / np.delete(s, k)
    N = ctx.N
    lo, hi = special.gammaincinv(N, _TAIL), special.gammainccinv(N, _TAIL)

    def integrand(x):
        return math.exp((N - 1) * math.log(x) - x - special.gammaln(N)) * \
            float(np.prod(special.gammainc(N, x * r)))

    val, err = integrate.quad(integrand, lo, hi, points=[N - 1.0],
                              epsabs=1e-13, epsrel=1e-11, limit=400)
    if err > 1e-9 or not -1e-12 <= val <= 1.0 + 1e-12:
        raise NumericalError(f"adaptive quadrature for Omega_{i} failed (value {val}, error {err:.2e})")
    return min(max(val, 0.0), 1.0)


def _log_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``log(conv(exp(a), exp(b)))`` truncated to ``len(a)``, evaluated in log space."""
    L = len(a)
    idx = np.arange(L)[:, None] - np.arange(L)[None, :]
    B = np.where(idx >= 0, b[np.clip(idx, 0, None)], -np.inf)
    return special.logsumexp(a[None, :] + B, axis=1)


def selection_prob_series(ctx: PuSelectionContext, i: int = 1, tol: float = 1e-8,
                          max_terms: int = 4000) -> float:
    """``Omega_i`` from the multiple-sum series of the gamma CDFs.

    Writing the lower incomplete gamma function as
    ``P(N, y) = exp(-y) * sum_{k >= N} y**k / k!`` turns ``Omega_1`` into a sum
    over ``k_2..k_M >= N`` of
    ``Gamma(N + K) / (Gamma(N) * G**(N+K)) * r_1**N * prod_m r_m**k_m / k_m!``
    with ``r_m = 1/sigma_e2[m]``, ``G = sum r_m`` and ``K = sum k_m``.  Terms
    are grouped by ``K``; the inner sums are log-space convolutions.  All
    terms are positive, and the neglected tail is bounded by the negative
    binomial tail in ``K``, which is pushed below ``tol``.  Other indices use
    the same series with the target sector moved to the front.

    Raises
    ------
    NumericalError
        If more than ``max_terms`` values of ``K`` would be needed; use
        :func:`selection_prob_conditional` instead.
    """
    k = _check_index(i, ctx.M)
    s = np.asarray(ctx.sigma_e2)
    r = 1.0 / np.concatenate(([s[k]], np.delete(s, k)))
    M, N = ctx.M, ctx.N
    if M == 1:
        return 1.0
    G = math.fsum(r)
    p1 = r[0] / G
    K_lo = (M - 1) * N
    K_hi = K_lo + 64
    while stats.nbinom.sf(K_hi, N, p1) > tol:
        K_hi = int(K_hi * 1.5) + 1
        if K_hi > max_terms:
            raise NumericalError(
                f"series for Omega_{i} needs more than {max_terms} terms; "
                "use the quadrature path (selection_prob_conditional)")
    kk = np.arange(K_hi + 1)
    logT = None
    for m in range(1, M):
        v = np.where(kk >= N, kk * math.log(r[m]) - special.gammaln(kk + 1.0), -np.inf)
        logT = v if logT is None else _log_convolve(logT, v)
    logw = special.gammaln(N + kk) - special.gammaln(N) + N * math.log(r[0]) \
        - (N + kk) * math.log(G)
    terms = logw[K_lo:] + logT[K_lo:]
    return float(min(math.exp(special.logsumexp(terms)), 1.0))


def delta_profile(model: BeamPatternModel, prior: PriorModel, N: int, i: int,
                  phi_PU, nodes_g: int = 48) -> float:
    """``Delta_i(phi_PU)``: selection probability averaged over ``g ~ Exp(gamma)``.

    The fading average uses ``nodes_g``-point Gauss-Legendre quadrature in
    ``log g``, which resolves the transition near ``g ~ 1/sqrt(N)`` much
    better than Gauss-Laguerre.  ``phi_PU`` may be an array, in which case an
    array of the same shape is returned.
    """
    k = _check_index(i, model.M)
    phi = np.atleast_1d(np.asarray(phi_PU, dtype=float))
    P = _delta_all(model, prior, N, phi.ravel(), nodes_g)[:, k]
    return float(P[0]) if np.ndim(phi_PU) == 0 else P.reshape(phi.shape)


@lru_cache(maxsize=16)
def _log_fading_rule(K: int):
    """Nodes and weights for ``E[h(g)]``, ``g ~ Exp(1)``, Gauss-Legendre in ``log g``.

    The mass below ``_G_LO`` is returned separately; there ``h`` is at its
    ``g = 0`` value ``1/M``.
    """
    t, w = special.roots_legendre(K)
    a, b = math.log(_G_LO), math.log(_G_HI)
    t = 0.5 * (b - a) * t + 0.5 * (a + b)
    g = np.exp(t)
    return g, 0.5 * (b - a) * w * g * np.exp(-g), -math.expm1(-_G_LO)


def _delta_all(model, prior, N, phis, nodes_g=48, nodes_x=64):
    """``Delta_i(phi)`` for all ``i``; shape ``(len(phis), M)``."""
    xg, wg, low_mass = _log_fading_rule(nodes_g)
    g = xg * prior.gamma
    sig = g[:, None, None] * prior.P_p * model.gains(phis)[None, :, :]
    scales = ((sig + prior.sigma_w2) / N).reshape(-1, model.M)
    om = omega_matrix(scales, N, nodes_x).reshape(nodes_g, len(phis), model.M)
    return np.einsum("g,gpm->pm", wg, om) + low_mass / model.M


@dataclass(frozen=True)
class PuErrorMatrix:
    """``Delta_bar[i, m]``: probability of selecting beam ``i`` when the PU lies in arc ``m``."""

    Delta_bar: np.ndarray
    N: int

    @property
    def M(self) -> int:
        return self.Delta_bar.shape[0]

    def column_sum_error(self) -> float:
        return float(np.max(np.abs(self.Delta_bar.sum(axis=0) - 1.0)))

    def symmetry_error(self) -> float:
        return float(np.max(np.abs(self.Delta_bar - self.Delta_bar.T)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i"] + [f"m{m + 1}" for m in range(self.M)])
            for i, row in enumerate(self.Delta_bar):
                w.writerow([i + 1] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, N: int):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        return cls(np.array([[float(v) for v in r[1:]] for r in rows]), N)


def _arc_column(model, prior, N, m, nodes_g, nodes_phi):
    """Column ``m`` of ``Delta_bar`` (0-based), PU angle uniform over arc ``m``.

    The pattern is symmetric about each boresight, so ``Delta(kappa_m - t)``
    is ``Delta(kappa_m + t)`` with beams reflected ``j -> 2m - j (mod M)``;
    only the nodes with ``t > 0`` are evaluated.
    """
    xp, wp = special.roots_legendre(2 * ((nodes_phi + 1) // 2))
    pos = xp > 0
    half = math.pi / model.M
    D = _delta_all(model, prior, N, model.kappa[m] + half * xp[pos], nodes_g)
    mirror = (2 * m - np.arange(model.M)) % model.M
    # the conditional density M/(2*pi) times half-width pi/M leaves weights w/2
    return 0.5 * wp[pos] @ (D + D[:, mirror])


def average_error_matrix(model: BeamPatternModel, prior: PriorModel, N: int,
                         full: bool = False, nodes_g: int = 48,
                         nodes_phi: int = 16) -> PuErrorMatrix:
    """Sector-averaged selection matrix with ``phi_PU`` uniform inside each arc.

    By rotational symmetry ``Delta_bar[i, m]`` depends only on ``(i - m) mod M``,
    so only the first column is integrated unless ``full`` is set, in which
    case every column is integrated over its own arc.
    """
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N}")
    M = model.M
    if M == 1:
        return PuErrorMatrix(np.ones((1, 1)), int(N))
    if full:
        D = np.column_stack([_arc_column(model, prior, int(N), m, nodes_g, nodes_phi)
                             for m in range(M)])
    else:
        col = _arc_column(model, prior, int(N), 0, nodes_g, nodes_phi)
        D = np.array([[col[(i - m) % M] for m in range(M)] for i in range(M)])
    return PuErrorMatrix(D, int(N))


def sector_arc(model: BeamPatternModel, m: int):
    """Bounds ``[2pi(m-3/2)/M, 2pi(m-1/2)/M)`` of arc ``m`` (1-based)."""
    k = _check_index(m, model.M)
    w = TWO_PI / model.M
    return (k - 0.5) * w, (k + 0.5) * w
