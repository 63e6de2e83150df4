"""Outage and symbol error probability of a designed policy.

The symbol error probability of a modulation with constant ``rho`` is
``E[Q(sqrt(rho*SNR))]`` where the SNR at the SU_Rx is ``nu* P_k / sigma_w2``
on the sensed-idle/true-idle path (weight ``alpha0``) and
``nu* P_k / (sigma_w2 + sigma_p2)`` on the missed-detection path (weight
``beta0``).  Interval ``k = 0`` carries no data (``P_0 = 0``) and contributes
``Q(0) = 1/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .beamsel_sr import SelectionDiversityDistribution
from .errors import DomainError
from .optimizer import QuantizedPowerPolicy, RateContext, _continuous_rule

__all__ = [
    "PerformanceMetrics",
    "V",
    "outage_probability",
    "symbol_error_probability",
    "evaluate_metrics",
]


def _Q(x):
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def V(mu, snr, A):
    """``V(mu, s) = Q(sqrt(mu (s + 2A))) / sqrt(1 + 2A/s) - exp(-mu A) Q(sqrt(mu s))``.

    ``-V(mu, s)`` equals ``int_mu^inf Q(sqrt(s x)) A exp(-A x) dx``, so
    ``V(inf, s) = 0`` and ``V(mu, 0) = -exp(-mu A)/2``.  Broadcasts over all
    arguments.
    """
    mu, snr, A = np.broadcast_arrays(np.asarray(mu, dtype=float), np.asarray(snr, dtype=float),
                                     np.asarray(A, dtype=float))
    out = np.zeros(mu.shape)
    fin = np.isfinite(mu)
    pos = fin & (snr > 0)
    zero = fin & (snr <= 0)
    m, s, a = mu[pos], snr[pos], A[pos]
    out[pos] = _Q(np.sqrt(m * (s + 2.0 * a))) / np.sqrt(1.0 + 2.0 * a / s) \
        - np.exp(-m * a) * _Q(np.sqrt(m * s))
    out[zero] = -0.5 * np.exp(-mu[zero] * A[zero])
    return out


def _merged_terms(dist: SelectionDiversityDistribution):
    """Subset coefficients with equal ``A`` merged, ``(coef, A)`` with ``coef = -sign``.

    Merging removes most of the cancellation between equal terms when several
    beam means coincide.
    """
    coef = -dist.signs
    A = dist.A
    if not dist.degenerate:
        return coef, A
    key = np.round(A / A.max(), 12)
    uniq, inv = np.unique(key, return_inverse=True)
    c = np.zeros(len(uniq))
    a = np.zeros(len(uniq))
    np.add.at(c, inv, coef)
    np.add.at(a, inv, A)
    a /= np.bincount(inv)
    keep = c != 0
    return c[keep], a[keep]


@dataclass(frozen=True)
class PerformanceMetrics:
    """Outage and symbol error probability with the per-interval SNRs."""

    P_out: float
    P_e: float
    rho: float
    SNR0: np.ndarray
    SNR1: np.ndarray


def outage_probability(policy: QuantizedPowerPolicy, dist: SelectionDiversityDistribution) -> float:
    """Probability that ``nu*`` falls below the first threshold, ``F(mu_1)``."""
    return float(dist.cdf(float(policy.mu[0])))


def symbol_error_probability(policy: QuantizedPowerPolicy, dist: SelectionDiversityDistribution,
                             alpha0: float, beta0: float, rho: float, sigma_w2: float,
                             sigma_p2: float) -> float:
    """Average symbol error probability of the policy.

    For a quantized policy the expectation over each interval is the closed
    form in :func:`V` summed over the inclusion-exclusion subsets; the last
    interval uses ``V(inf, .) = 0``.  For a perfect-CSI policy it is
    integrated numerically against the density of ``nu*``.
    """
    if not rho > 0:
        raise DomainError("rho must be positive")
    if policy.continuous:
        ctx = RateContext(alpha0, beta0, sigma_w2, sigma_p2, policy.c)
        cut = float(policy.mu[0])
        nu, w = _continuous_rule(dist, cut)
        P = ctx.power(nu)
        q = alpha0 * _Q(np.sqrt(rho * nu * P / sigma_w2)) \
            + beta0 * _Q(np.sqrt(rho * nu * P / (sigma_w2 + sigma_p2)))
        return float(0.5 * (alpha0 + beta0) * dist.cdf(cut) + w @ q)
    coef, A = _merged_terms(dist)
    edges = np.concatenate(([0.0], np.asarray(policy.mu, dtype=float), [math.inf]))
    P = np.asarray(policy.P, dtype=float)
    total = 0.0
    for weight, noise in ((alpha0, sigma_w2), (beta0, sigma_w2 + sigma_p2)):
        if weight == 0:
            continue
        snr = rho * P / noise                                    # (N_b + 1,)
        Vhi = V(edges[1:, None], snr[:, None], A[None, :])
        Vlo = V(edges[:-1, None], snr[:, None], A[None, :])
        total += weight * float(np.sum((Vhi - Vlo) @ coef))
    return total


def evaluate_metrics(policy, dist, alpha0, beta0, rho, sigma_w2, sigma_p2) -> PerformanceMetrics:
    """Both metrics plus the per-interval SNRs ``rho P_k / noise``."""
    P = np.asarray(policy.P, dtype=float)
    return PerformanceMetrics(
        P_out=outage_probability(policy, dist),
        P_e=symbol_error_probability(policy, dist, alpha0, beta0, rho, sigma_w2, sigma_p2),
        rho=rho, SNR0=rho * P / sigma_w2, SNR1=rho * P / (sigma_w2 + sigma_p2))
