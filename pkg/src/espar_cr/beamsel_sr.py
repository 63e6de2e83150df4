"""Strongest-beam statistics at the secondary receiver.

The SU_Tx picks the beam with the largest gain ``nu* = max_m nu_m`` where the
``nu_m`` are independent exponentials with means ``delta_m``.  The CDF is the
product ``F(x) = prod_m (1 - exp(-x/delta_m))``; its inclusion-exclusion
expansion over the non-empty subsets ``S`` of beams reads
``F(x) = 1 + sum_S (-1)**|S| exp(-x*A_S)`` with ``A_S = sum_{j in S} 1/delta_j``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .antenna import BeamPatternModel
from .errors import DomainError

__all__ = [
    "SelectionDiversityDistribution",
    "SrSelectionProbabilities",
    "strongest_beam_cdf",
    "strongest_beam_pdf",
    "beam_probabilities",
    "sector_means_from_geometry",
]

_DEGENERATE_GAP = 1e-9
_LN2 = math.log(2.0)


def _log1mexp(t):
    """``log(1 - exp(-t))`` for ``t > 0`` without cancellation at either end."""
    if t < _LN2:
        return math.log(-math.expm1(-t))
    return math.log1p(-math.exp(-t))


def _log1mexp_array(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(t < _LN2, np.log(-np.expm1(-np.minimum(t, _LN2))),
                        np.log1p(-np.exp(-np.maximum(t, _LN2))))


def _subset_sums(inv: np.ndarray):
    """Signs ``(-1)**|S|`` and rate sums ``A_S`` over all non-empty subsets."""
    signs, sums = [], []
    idx = range(len(inv))
    for size in range(1, len(inv) + 1):
        for S in itertools.combinations(idx, size):
            signs.append(-1.0 if size % 2 else 1.0)
            sums.append(math.fsum(inv[j] for j in S))
    return np.array(signs), np.array(sums)


@dataclass(frozen=True)
class SelectionDiversityDistribution:
    """Law of the maximum of independent exponentials with means ``delta``."""

    delta: tuple
    signs: np.ndarray = field(init=False, repr=False, compare=False)
    A: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        d = np.asarray(self.delta, dtype=float).ravel()
        if d.size < 1 or not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise DomainError("all beam means delta_m must be finite and positive")
        object.__setattr__(self, "delta", tuple(float(v) for v in d))
        signs, A = _subset_sums(1.0 / d)
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "A", A)

    @property
    def M(self) -> int:
        return len(self.delta)

    @property
    def delta_array(self) -> np.ndarray:
        return np.asarray(self.delta)

    @property
    def degenerate(self) -> bool:
        """True when two subset coefficients nearly coincide."""
        A = np.sort(self.A)
        return bool(np.any(np.diff(A) < _DEGENERATE_GAP * np.maximum(1.0, A[1:])))

    # product forms, used by the solvers
    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return np.prod(-np.expm1(-x[..., None] / self.delta_array), axis=-1)

    def sf(self, x):
        """Survival ``1 - F(x)``, accurate in the upper tail."""
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        logF = np.sum(_log1mexp_array(x[..., None] / self.delta_array), axis=-1)
        return -np.expm1(logF)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        d = self.delta_array
        e = np.exp(-np.maximum(x, 0.0)[..., None] / d)
        one_minus = -np.expm1(-np.maximum(x, 0.0)[..., None] / d)
        out = np.zeros(x.shape)
        for m in range(self.M):
            others = np.delete(one_minus, m, axis=-1)
            out = out + e[..., m] / d[m] * np.prod(others, axis=-1)
        return np.where(x < 0, 0.0, out)

    # inclusion-exclusion forms
    def cdf_expansion(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return 1.0 + np.exp(-x[..., None] * self.A) @ self.signs

    def pdf_expansion(self, x):
        x = np.asarray(x, dtype=float)
        out = -np.exp(-np.maximum(x, 0.0)[..., None] * self.A) @ (self.signs * self.A)
        return np.where(x < 0, 0.0, out)

    def quantile(self, u: float, lo: float = 0.0) -> float:
        """Smallest ``x >= lo`` with ``F(x) = u`` for ``u`` in ``(0, 1)``.

        Newton steps on ``log F`` (lower half) or ``log(1 - F)`` (upper half)
        inside a maintained bracket, falling back to bisection.
        """
        if not 0.0 < u < 1.0:
            raise DomainError(f"quantile level must lie in (0, 1), got {u}")
        return _quantile(self.delta, u, lo)

    def quantile_sf(self, s: float, lo: float = 0.0) -> float:
        """Point where the survival function equals ``s`` in ``(0, 1)``."""
        if not 0.0 < s < 1.0:
            raise DomainError(f"survival level must lie in (0, 1), got {s}")
        return _quantile(self.delta, 1.0 - s, lo, s=s)


def _scalar_state(inv, x):
    """``(log F, log S, f, F, S)`` at a scalar ``x > 0``."""
    logF = 0.0
    hazard = 0.0
    for a in inv:
        e = math.exp(-x * a)
        logF += _log1mexp(x * a)
        hazard += a * e / -math.expm1(-x * a)
    F = math.exp(logF)
    S = -math.expm1(logF)
    logS = math.log(S) if S > 0 else -math.inf
    return logF, logS, F * hazard, F, S


def _quantile(delta, u, lo, s=None, rtol=1e-14, maxiter=200):
    inv = [1.0 / d for d in delta]
    if s is None:
        s = 1.0 - u
    upper = s < 0.5
    target = math.log(s) if upper else math.log(u)
    lo = max(lo, 0.0)
    hi = math.inf
    # log F is concave, so Newton started left of the root approaches it monotonically
    x = lo if lo > 0 else min(delta) * u
    for _ in range(maxiter):
        logF, logS, f, F, S = _scalar_state(inv, x)
        if upper:
            g = logS - target
            dg = -f / S if S > 0 else -math.inf
            if g > 0:
                lo = x
            else:
                hi = x
        else:
            g = logF - target
            dg = f / F if F > 0 else math.inf
            if g < 0:
                lo = x
            else:
                hi = x
        if g == 0.0:
            return x
        x_new = x - g / dg if math.isfinite(dg) and dg != 0.0 else math.nan
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * max(x, lo, min(delta))
        if abs(x_new - x) <= rtol * x_new:
            return x_new
        x = x_new
    return x


def strongest_beam_cdf(dist: SelectionDiversityDistribution, x):
    """CDF of ``nu*`` via the subset expansion.

    Negative arguments return 0.  If two subset coefficients nearly coincide
    the expansion loses accuracy and the product form is used instead.
    """
    out = dist.cdf(x) if dist.degenerate else dist.cdf_expansion(x)
    out = np.where(np.asarray(x) < 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def strongest_beam_pdf(dist: SelectionDiversityDistribution, x):
    """Density of ``nu*``, with the same fallback rule as :func:`strongest_beam_cdf`."""
    out = dist.pdf(x) if dist.degenerate else dist.pdf_expansion(x)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SrSelectionProbabilities:
    """``Psi[i]`` is the probability that beam ``i`` (0-based) is the strongest."""

    Psi: np.ndarray

    @property
    def M(self) -> int:
        return len(self.Psi)


def _psi_first(delta: np.ndarray) -> float:
    """Probability that the first beam wins; alternating sum over subsets of the others."""
    if len(delta) == 1:
        return 1.0
    signs, B = _subset_sums(1.0 / delta[1:])
    return 1.0 + math.fsum(signs / (1.0 + delta[0] * B))


def beam_probabilities(dist: SelectionDiversityDistribution) -> SrSelectionProbabilities:
    """Selection probabilities ``Psi_i`` of every beam.

    Each entry is the closed form for the first beam applied to ``delta``
    reordered so that the target beam leads.  Equal means give exactly ``1/M``.
    """
    d = dist.delta_array
    if np.all(d == d[0]):
        return SrSelectionProbabilities(Psi=np.full(dist.M, 1.0 / dist.M))
    psi = np.array([_psi_first(np.concatenate(([d[i]], np.delete(d, i))))
                    for i in range(dist.M)])
    return SrSelectionProbabilities(Psi=psi)


def sector_means_from_geometry(model: BeamPatternModel, gamma_ss: float,
                               phi_SR: float) -> SelectionDiversityDistribution:
    """Beam means ``delta_m = gamma_ss * p_m(phi_SR)`` for an SU_Rx at angle ``phi_SR``."""
    if not gamma_ss > 0:
        raise DomainError("gamma_ss must be positive")
    return SelectionDiversityDistribution(tuple(gamma_ss * model.gains(float(phi_SR))))
