"""Capacity maximisation with quantized feedback and discrete power levels.

The SU_Rx quantizes the strongest-beam gain ``nu*`` with thresholds
``0 < mu_1 < ... < mu_Nb`` and the SU_Tx transmits with power ``P_k`` while
``nu*`` lies in ``[mu_k, mu_{k+1})`` (``P_0 = 0``).  The design maximises the
Jensen lower bound

    C_LB = D_t * sum_k (alpha0*R00_k + beta0*R10_k) * (F(mu_{k+1}) - F(mu_k))

subject to an average power cap ``D_t*pihat0*E[P] <= P_bar`` and an average
interference cap ``D_t*b0*E[P] <= I_bar``.  Both constraints act on the same
``E[P]``, so the two multipliers enter only through
``c = lambda*pihat0 + vartheta*b0``; for a given ``c`` the optimal powers are
the KKT roots and the thresholds follow a forward recursion started at
``mu_1``, which is fixed by requiring the recursion to end exactly at
``F = 1``.  ``c`` itself is chosen so the tighter cap binds.

``n_b=None`` denotes the perfect-CSI limit in which the power adapts to the
unquantized ``nu*``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import optimize, special

from .antenna import BeamPatternModel, LN2
from .beamsel_pu import PuErrorMatrix
from .beamsel_sr import SelectionDiversityDistribution, SrSelectionProbabilities, _log1mexp, \
    _quantile
from .errors import ConvergenceError, DomainError, InfeasibleStepError

__all__ = [
    "Constraints",
    "LinkProblem",
    "QuantizedPowerPolicy",
    "CapacityReport",
    "RateContext",
    "interference_coefficient",
    "kkt_power",
    "next_threshold",
    "capacity_lower_bound",
    "solve_fixed_sensing",
    "solve_P2",
    "lagrangian",
]


@dataclass(frozen=True)
class Constraints:
    """Average transmit power cap ``P_bar`` and average interference cap ``I_bar`` (linear units)."""

    P_bar: float
    I_bar: float

    def __post_init__(self):
        if not (self.P_bar > 0 and self.I_bar > 0):
            raise DomainError("P_bar and I_bar must be positive")


@dataclass(frozen=True)
class LinkProblem:
    """Everything the power/threshold design needs for one sensing duration."""

    dist: SelectionDiversityDistribution
    alpha0: float
    beta0: float
    b0: float
    D_t: float
    sigma_w2: float
    sigma_p2: float
    T_sen: float = math.nan
    N: int = 0
    P_fa: float = math.nan

    def __post_init__(self):
        if not 0 < self.D_t <= 1:
            raise DomainError(f"D_t must lie in (0, 1], got {self.D_t}")
        if self.alpha0 < 0 or self.beta0 < 0 or self.b0 < 0:
            raise DomainError("alpha0, beta0 and b0 must be non-negative")
        if not (self.sigma_w2 > 0 and self.sigma_p2 >= 0):
            raise DomainError("sigma_w2 must be positive and sigma_p2 non-negative")

    @property
    def pihat0(self) -> float:
        return self.alpha0 + self.beta0

    def budgets(self, constraints: Constraints):
        """Caps on ``E[P]`` implied by the power and interference constraints."""
        denom_p = self.D_t * self.pihat0
        denom_i = self.D_t * self.b0
        bp = constraints.P_bar / denom_p if denom_p > 0 else math.inf
        bi = constraints.I_bar / denom_i if denom_i > 0 else math.inf
        return bp, bi


@dataclass(frozen=True)
class RateContext:
    """Rate weights and noise levels entering the per-interval objective."""

    alpha0: float
    beta0: float
    sigma_w2: float
    sigma_p2: float
    c: float

    @classmethod
    def from_problem(cls, problem: LinkProblem, c: float):
        return cls(problem.alpha0, problem.beta0, problem.sigma_w2, problem.sigma_p2, c)

    def rate(self, mu, P):
        """``alpha0*R00 + beta0*R10`` at gain ``mu`` and power ``P``."""
        if isinstance(mu, float) and isinstance(P, float):
            return (self.alpha0 * math.log1p(mu * P / self.sigma_w2)
                    + self.beta0 * math.log1p(mu * P / (self.sigma_w2 + self.sigma_p2))) / LN2
        return (self.alpha0 * np.log1p(mu * P / self.sigma_w2)
                + self.beta0 * np.log1p(mu * P / (self.sigma_w2 + self.sigma_p2))) / LN2

    def power(self, mu):
        if isinstance(mu, float):
            return _kkt_scalar(mu, self.c, self.alpha0, self.beta0, self.sigma_w2, self.sigma_p2)
        return _kkt_c(mu, self.c, self.alpha0, self.beta0, self.sigma_w2, self.sigma_p2)

    @property
    def cutoff(self) -> float:
        """Gain below which the KKT power is zero."""
        slope = self.alpha0 / self.sigma_w2 + self.beta0 / (self.sigma_w2 + self.sigma_p2)
        return LN2 * self.c / slope


@dataclass
class QuantizedPowerPolicy:
    """Thresholds ``mu`` (length ``N_b``) and powers ``P`` (length ``N_b+1``, ``P[0] = 0``).

    For the perfect-CSI limit (``n_b=None``) ``mu`` holds only the transmit
    cutoff, ``P`` is ``[0]`` and the power law is the KKT map with multiplier
    ``c``.
    """

    n_b: Optional[int]
    mu: np.ndarray
    P: np.ndarray
    T_sen: float = math.nan
    c: float = math.nan

    @property
    def N_b(self) -> Optional[int]:
        return None if self.n_b is None else 2 ** self.n_b

    @property
    def continuous(self) -> bool:
        return self.n_b is None

    def check(self, tol: float = 0.0) -> None:
        mu = np.asarray(self.mu)
        if np.any(mu <= 0) or np.any(np.diff(mu) <= 0):
            raise DomainError("thresholds must be positive and strictly increasing")
        if self.P[0] != 0 or np.any(self.P < -tol):
            raise DomainError("powers must be non-negative with P_0 = 0")

    def to_dict(self) -> dict:
        return {"n_b": self.n_b, "T_sen": self.T_sen, "c": self.c,
                "mu": [float(v) for v in self.mu], "P": [float(v) for v in self.P]}


@dataclass
class CapacityReport:
    """Objective, multipliers, slacks and solver diagnostics of one design."""

    C_LB: float
    R00: np.ndarray
    R10: np.ndarray
    b0: float
    lam: float
    vartheta: float
    expected_power: float
    power_slack: float
    interference_slack: float
    converged: bool
    iterations: dict = field(default_factory=dict)
    lagrangian_history: list = field(default_factory=list)
    kkt_residual: float = 0.0
    terminal_residual: float = 0.0
    N: int = 0
    T_sen: float = math.nan
    P_fa: float = math.nan
    search_trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "C_LB": self.C_LB, "b0": self.b0, "lambda": self.lam, "vartheta": self.vartheta,
            "expected_power": self.expected_power, "power_slack": self.power_slack,
            "interference_slack": self.interference_slack, "converged": self.converged,
            "iterations": dict(self.iterations), "kkt_residual": self.kkt_residual,
            "terminal_residual": self.terminal_residual, "N": self.N, "T_sen": self.T_sen,
            "P_fa": self.P_fa, "R00": [float(v) for v in self.R00],
            "R10": [float(v) for v in self.R10],
        }


def interference_coefficient(Psi: SrSelectionProbabilities, Delta_bar: PuErrorMatrix,
                             m_PU_star: int, model: BeamPatternModel, beta0: float,
                             gamma_sp: float) -> float:
    """``b0 = beta0*gamma_sp*sum_{j,i} Psi_j * Delta_bar[m_PU, i] * p(kappa_j - kappa_i)``.

    ``m_PU_star`` is the 1-based PU sector.
    """
    M = model.M
    if Psi.M != M or Delta_bar.M != M:
        raise DomainError(f"Psi ({Psi.M}), Delta_bar ({Delta_bar.M}) and model ({M}) sizes differ")
    if int(m_PU_star) != m_PU_star or not 1 <= m_PU_star <= M:
        raise DomainError(f"m_PU_star must be in 1..{M}, got {m_PU_star}")
    kap = model.kappa_array
    G = model.base_pattern(kap[:, None] - kap[None, :])       # G[j, i] = p(kappa_j - kappa_i)
    row = Delta_bar.Delta_bar[int(m_PU_star) - 1]
    return float(beta0 * gamma_sp * (Psi.Psi @ G @ row))


def _kkt_c(mu, c, alpha0, beta0, s2, sp2):
    """KKT power for the combined multiplier ``c``; vectorised over ``mu``."""
    mu = np.asarray(mu, dtype=float)
    kappa = LN2 * c
    pihat0 = alpha0 + beta0
    with np.errstate(divide="ignore", invalid="ignore"):
        F = pihat0 / kappa - (2.0 * s2 + sp2) / mu
        # P**2 - F*P + q = 0, larger root
        q = s2 * (s2 + sp2) / mu ** 2 - (pihat0 * s2 + alpha0 * sp2) / (kappa * mu)
        ups = F * F - 4.0 * q
        root = np.sqrt(np.maximum(ups, 0.0))
        big = np.where(F >= 0, 0.5 * (F + root), 2.0 * q / np.where(F - root == 0, -np.inf, F - root))
    P = np.where((ups >= 0) & (mu > 0), np.maximum(big, 0.0), 0.0)
    return float(P) if P.ndim == 0 else P


def _kkt_scalar(mu, c, alpha0, beta0, s2, sp2):
    """Scalar fast path of :func:`_kkt_c`."""
    if not mu > 0:
        return 0.0
    kappa = LN2 * c
    F = (alpha0 + beta0) / kappa - (2.0 * s2 + sp2) / mu
    q = s2 * (s2 + sp2) / mu ** 2 - ((alpha0 + beta0) * s2 + alpha0 * sp2) / (kappa * mu)
    ups = F * F - 4.0 * q
    if ups < 0:
        return 0.0
    root = math.sqrt(ups)
    if F >= 0:
        return 0.5 * (F + root)
    return max(2.0 * q / (F - root), 0.0) if F - root != 0 else 0.0


def kkt_power(mu_k, lam: float, vartheta: float, b0: float, pihat0: float, alpha0: float,
              beta0: float, sigma_w2: float, sigma_p2: float):
    """Power level maximising the per-interval Lagrangian at threshold ``mu_k``.

    Solves ``alpha0/(sigma_w2/mu + P) + beta0/((sigma_w2+sigma_p2)/mu + P) = ln2*c``
    with ``c = lam*pihat0 + vartheta*b0``.  The larger root of the resulting
    quadratic is ``(F + sqrt(Upsilon))/2`` with
    ``F = pihat0/(ln2 c) - (2 sigma_w2 + sigma_p2)/mu`` and
    ``Upsilon = F**2 - (4/mu)(sigma_w2(sigma_w2+sigma_p2)/mu - (pihat0 sigma_w2 + alpha0 sigma_p2)/(ln2 c))``.
    A negative root or a negative discriminant gives ``P = 0``.
    """
    if lam < 0 or vartheta < 0:
        raise DomainError("multipliers must be non-negative")
    if abs(pihat0 - (alpha0 + beta0)) > 1e-12 * max(1.0, pihat0):
        raise DomainError("pihat0 must equal alpha0 + beta0")
    c = lam * pihat0 + vartheta * b0
    if not c > 0:
        raise DomainError("the combined multiplier lam*pihat0 + vartheta*b0 must be positive")
    if np.any(np.asarray(mu_k) <= 0):
        raise DomainError("mu_k must be positive")
    if math.isinf(c):
        return 0.0 if np.ndim(mu_k) == 0 else np.zeros(np.shape(mu_k))
    return _kkt_c(mu_k, c, alpha0, beta0, sigma_w2, sigma_p2)


def _rate_slope(mu, P, ctx: RateContext):
    """``d rate / d mu`` at power ``P``."""
    return P / LN2 * (ctx.alpha0 / (ctx.sigma_w2 + mu * P)
                      + ctx.beta0 / (ctx.sigma_w2 + ctx.sigma_p2 + mu * P))


def _power_slope(mu, P, ctx: RateContext):
    """``d rate / d P - c`` at gain ``mu``."""
    return mu / LN2 * (ctx.alpha0 / (ctx.sigma_w2 + mu * P)
                       + ctx.beta0 / (ctx.sigma_w2 + ctx.sigma_p2 + mu * P)) - ctx.c


def _point(inv, x):
    """``(S, f)`` of the strongest-beam law at scalar ``x``."""
    if math.isinf(x):
        return 0.0, 0.0
    logF = 0.0
    hazard = 0.0
    for a in inv:
        logF += _log1mexp(x * a)
        hazard += a * math.exp(-x * a) / -math.expm1(-x * a)
    return -math.expm1(logF), math.exp(logF) * hazard


def _survival_step(mu_prev, mu_curr, P_prev, P_curr, S_curr, f_curr, ctx: RateContext):
    """Survival value ``1 - F(mu_{k+1})`` implied by stationarity in ``mu_k``."""
    r_prev = float(ctx.rate(mu_prev, P_prev)) if P_prev > 0 else 0.0
    r_curr = float(ctx.rate(mu_curr, P_curr))
    num = f_curr * (r_curr - r_prev - ctx.c * (P_curr - P_prev))
    den = _rate_slope(mu_curr, P_curr, ctx)
    return S_curr - num / den


def next_threshold(mu_prev: float, mu_curr: float, P_prev: float, P_curr: float,
                   dist: SelectionDiversityDistribution, ctx: RateContext) -> float:
    """Next threshold from the stationarity condition of the Lagrangian in ``mu_k``.

    ``F(mu_{k+1}) = F(mu_k) + f(mu_k) * (r_k - r_{k-1} - c*(P_k - P_{k-1})) / (d r_k / d mu_k)``
    with ``r_k = alpha0*R00_k + beta0*R10_k``.  The CDF is inverted by a
    bracketed Newton iteration.  Returns ``inf`` when the target equals 1.

    Raises
    ------
    InfeasibleStepError
        If the target CDF value is not in ``(F(mu_k), 1]``.
    """
    if not mu_curr > mu_prev >= 0:
        raise DomainError("thresholds must satisfy 0 <= mu_prev < mu_curr")
    if not P_curr > 0:
        raise InfeasibleStepError("P_curr must be positive", target=math.nan,
                                  lower=float(dist.cdf(mu_curr)))
    inv = [1.0 / d for d in dist.delta]
    S_curr, f_curr = _point(inv, mu_curr)
    S_next = _survival_step(mu_prev, mu_curr, P_prev, P_curr, S_curr, f_curr, ctx)
    if S_next == 0.0:
        return math.inf
    if S_next < 0.0 or S_next >= S_curr:
        raise InfeasibleStepError(
            f"target CDF value {1.0 - S_next} outside ({1.0 - S_curr}, 1]",
            target=1.0 - S_next, lower=1.0 - S_curr)
    return _quantile(dist.delta, 1.0 - S_next, mu_curr, s=S_next)


def _shoot(mu1, ctx: RateContext, dist, N_b):
    """Run the threshold recursion from ``mu1``.

    Returns ``(residual, mus, Ps, S)`` where ``residual = F(mu_{Nb+1}) - 1`` if
    the recursion reaches the last threshold, ``+1`` if it overshoots ``F = 1``
    early and ``-1`` if it stalls (non-increasing target or zero power).
    ``S`` holds the survival values at the thresholds.
    """
    inv = [1.0 / d for d in dist.delta]
    mus = [mu1]
    Ps = [ctx.power(mu1)]
    S_curr, f_curr = _point(inv, mu1)
    Ss = [S_curr]
    mu_prev, P_prev = 0.0, 0.0
    for k in range(1, N_b + 1):
        mu, P = mus[-1], Ps[-1]
        if not P > 0:
            return -1.0, None, None, None
        S_next = _survival_step(mu_prev, mu, P_prev, P, S_curr, f_curr, ctx)
        if k == N_b:
            return -S_next, np.array(mus), np.array(Ps), np.array(Ss)
        if S_next <= 0.0:
            return 1.0, None, None, None
        if S_next >= S_curr:
            return -1.0, None, None, None
        mu_next = _quantile(dist.delta, 1.0 - S_next, mu, s=S_next)
        if not mu_next > mu:
            return -1.0, None, None, None
        mu_prev, P_prev = mu, P
        S_curr, f_curr = _point(inv, mu_next)
        mus.append(mu_next)
        Ps.append(ctx.power(mu_next))
        Ss.append(S_curr)
    raise AssertionError("unreachable")


def _solve_mu1(ctx: RateContext, dist, N_b, l_hint=None):
    """Root of the terminal residual in ``l = log(mu1/cutoff)``; returns ``(l, shots)``."""
    cut = ctx.cutoff
    shots = [0]

    def g(l):
        shots[0] += 1
        return _shoot(cut * math.exp(l), ctx, dist, N_b)[0]

    if l_hint is not None and l_hint > 0:
        step = 0.05 * l_hint
        if g(l_hint) > 0:
            hi = l_hint
            lo = max(l_hint - step, 0.0)
            while lo > 0 and g(lo) > 0:
                hi = lo
                step *= 2.0
                lo = max(lo - step, 0.0)
        else:
            lo = l_hint
            hi = l_hint + step
            while g(hi) <= 0:
                lo = hi
                step *= 2.0
                hi += step
                if hi > 60:
                    raise ConvergenceError("no upper bracket for mu_1")
    else:
        lo, hi = 0.0, 0.01
        while g(hi) <= 0:
            lo = hi
            hi *= 1.5
            if hi > 60:
                raise ConvergenceError("no upper bracket for mu_1")
    l = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    return l, shots[0]


def _policy_at_c(problem: LinkProblem, c: float, n_b: int, l_hint=None):
    ctx = RateContext.from_problem(problem, c)
    N_b = 2 ** n_b
    l, shots = _solve_mu1(ctx, problem.dist, N_b, l_hint)
    res, mus, Ps, Ss = _shoot(ctx.cutoff * math.exp(l), ctx, problem.dist, N_b)
    if mus is None:
        # brentq may stop on the overshoot side of the root; take the other side
        l2 = l * (1.0 - 4e-16)
        res, mus, Ps, Ss = _shoot(ctx.cutoff * math.exp(l2), ctx, problem.dist, N_b)
        l = l2
    return ctx, l, shots, res, mus, Ps, Ss


def _interval_masses(S):
    """``F(mu_{k+1}) - F(mu_k)`` for ``k = 1..N_b`` from survival values at the thresholds."""
    S = np.asarray(S, dtype=float)
    return S - np.append(S[1:], 0.0)


def _expected_power(P, S):
    return float(np.asarray(P) @ _interval_masses(S))


def capacity_lower_bound(policy: QuantizedPowerPolicy, dist: SelectionDiversityDistribution,
                         alpha0: float, beta0: float, D_t: float, sigma_w2: float,
                         sigma_p2: float) -> float:
    """``C_LB = D_t * sum_k (alpha0 R00_k + beta0 R10_k) (F(mu_{k+1}) - F(mu_k))``.

    For a perfect-CSI policy the sum becomes an integral against the density
    of ``nu*``, evaluated by composite Gauss-Legendre quadrature.
    """
    ctx = RateContext(alpha0, beta0, sigma_w2, sigma_p2, policy.c)
    if policy.continuous:
        nu, w = _continuous_rule(dist, float(policy.mu[0]))
        P = ctx.power(nu)
        return float(D_t * (w @ ctx.rate(nu, P)))
    mu = np.asarray(policy.mu, dtype=float)
    P = np.asarray(policy.P[1:], dtype=float)
    rates = ctx.rate(mu, P)
    return float(D_t * (rates @ _interval_masses(dist.sf(mu))))


# panel edges for the perfect-CSI integral, in units of the largest beam mean
_EDGES = np.array([0.0, 1e-3, 3e-3, 0.01, 0.03, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0,
                   16.0, 32.0, 64.0])
_GL_X, _GL_W = special.roots_legendre(20)


def _continuous_rule(dist, cut):
    """Nodes and weights for ``int_cut^inf h(nu) f(nu) d nu``."""
    scale = max(dist.delta)
    a, b = _EDGES[:-1], _EDGES[1:]
    x = (0.5 * (b - a)[:, None] * _GL_X[None, :] + 0.5 * (a + b)[:, None]).ravel()
    w = (0.5 * (b - a)[:, None] * _GL_W[None, :]).ravel()
    nu = cut + scale * x
    return nu, scale * w * dist.pdf(nu)


def lagrangian(C: float, expected_power: float, problem: LinkProblem, lam: float,
               vartheta: float, constraints: Constraints) -> float:
    """``-C + lam*(D_t pihat0 E[P] - P_bar) + vartheta*(D_t b0 E[P] - I_bar)``."""
    return (-C + lam * (problem.D_t * problem.pihat0 * expected_power - constraints.P_bar)
            + vartheta * (problem.D_t * problem.b0 * expected_power - constraints.I_bar))


def _multipliers(problem, constraints, c):
    bp, bi = problem.budgets(constraints)
    if bp <= bi:
        return c / problem.pihat0, 0.0
    return 0.0, c / problem.b0


def _continuous_at(problem, c):
    ctx = RateContext.from_problem(problem, c)
    nu, w = _continuous_rule(problem.dist, ctx.cutoff)
    P = ctx.power(nu)
    return float(w @ P), float(problem.D_t * (w @ ctx.rate(nu, P))), ctx.cutoff


def _root_in_logc(fn, x0, step=0.5, xtol=1e-13):
    """Root of a decreasing function of ``log c`` near ``x0``."""
    f0 = fn(x0)
    if f0 == 0:
        return x0
    lo = hi = x0
    if f0 > 0:
        while True:
            hi = lo + step
            if fn(hi) <= 0:
                break
            lo = hi
            step *= 2.0
            if hi > x0 + 200:
                raise ConvergenceError("could not bracket the multiplier from above")
    else:
        while True:
            lo = hi - step
            if fn(lo) >= 0:
                break
            hi = lo
            step *= 2.0
            if lo < x0 - 200:
                raise ConvergenceError("could not bracket the multiplier from below")
    return optimize.brentq(fn, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=300)


def _zero_solution(problem, n_b, T_sen):
    N_b = 2 ** n_b if n_b is not None else 1
    mu = np.geomspace(1.0, 2.0, N_b) if n_b is not None else np.array([1.0])
    pol = QuantizedPowerPolicy(n_b, mu, np.zeros(N_b + 1 if n_b is not None else 1),
                               T_sen=T_sen, c=math.inf)
    zeros = np.zeros(N_b)
    rep = CapacityReport(C_LB=0.0, R00=zeros, R10=zeros, b0=problem.b0, lam=0.0,
                         vartheta=0.0, expected_power=0.0, power_slack=1.0,
                         interference_slack=1.0, converged=True, N=problem.N,
                         T_sen=T_sen, P_fa=problem.P_fa)
    return pol, rep


def _slacks(problem, constraints, EP):
    ps = (constraints.P_bar - problem.D_t * problem.pihat0 * EP) / constraints.P_bar
    is_ = (constraints.I_bar - problem.D_t * problem.b0 * EP) / constraints.I_bar
    return ps, is_


def _continuous_c(problem, budget):
    mean_nu = float(_continuous_rule(problem.dist, 0.0)[1]
                    @ _continuous_rule(problem.dist, 0.0)[0])
    c0 = problem.pihat0 / (LN2 * (budget + problem.sigma_w2 / mean_nu))
    logc = _root_in_logc(lambda x: _continuous_at(problem, math.exp(x))[0] - budget,
                         math.log(c0))
    return math.exp(logc)


def _solve_continuous(problem, constraints):
    bp, bi = problem.budgets(constraints)
    budget = min(bp, bi)
    c = _continuous_c(problem, budget)
    EP, C, cut = _continuous_at(problem, c)
    lam, vt = _multipliers(problem, constraints, c)
    ps, is_ = _slacks(problem, constraints, EP)
    pol = QuantizedPowerPolicy(None, np.array([cut]), np.array([0.0]), T_sen=problem.T_sen, c=c)
    L = lagrangian(C, EP, problem, lam, vt, constraints)
    rep = CapacityReport(C_LB=C, R00=np.zeros(0), R10=np.zeros(0), b0=problem.b0, lam=lam,
                         vartheta=vt, expected_power=EP, power_slack=ps,
                         interference_slack=is_, converged=True, lagrangian_history=[L],
                         N=problem.N, T_sen=problem.T_sen, P_fa=problem.P_fa)
    return pol, rep


def _local_objective(x, k, mus, Ps, S, ctx, dist):
    """Terms of ``C_LB/D_t`` that depend on threshold ``mu_k`` (0-based ``k``), at ``mu_k = x``."""
    Sx = float(dist.sf(x))
    left = (float(ctx.rate(mus[k - 1], Ps[k - 1])) - ctx.c * Ps[k - 1]) if k > 0 else 0.0
    S_right = S[k + 1] if k + 1 < len(S) else 0.0
    return left * (1.0 - Sx) + (float(ctx.rate(x, Ps[k])) - ctx.c * Ps[k]) * (Sx - S_right)


def _bcd_polish(problem, constraints, ctx, mus, Ps, S, max_sweeps, tol):
    """Alternate the power block and single-threshold blocks at fixed multipliers.

    Each block minimises the Lagrangian exactly (powers) or by a bounded
    scalar search (thresholds); a threshold move is kept only if it lowers the
    Lagrangian, so the recorded history is non-increasing.
    """
    lam, vt = _multipliers(problem, constraints, ctx.c)
    dist = problem.dist
    mus, Ps, S = mus.copy(), Ps.copy(), S.copy()

    def L_of(mus, Ps, S):
        C = problem.D_t * float(ctx.rate(mus, Ps) @ _interval_masses(S))
        return lagrangian(C, _expected_power(Ps, S), problem, lam, vt, constraints), C

    L, C = L_of(mus, Ps, S)
    history = [L]
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        C_start = C
        P_new = ctx.power(mus)
        L_new, C_new = L_of(mus, P_new, S)
        if L_new <= L:
            Ps, L, C = P_new, L_new, C_new
        history.append(L)
        for k in range(len(mus)):
            lo = mus[k - 1] if k > 0 else 0.0
            hi = mus[k + 1] if k + 1 < len(mus) else 4.0 * mus[k] + 10.0 * max(dist.delta)
            cur = _local_objective(mus[k], k, mus, Ps, S, ctx, dist)
            span = hi - lo
            a, b = max(lo, mus[k] - 0.25 * span), min(hi, mus[k] + 0.25 * span)
            res = optimize.minimize_scalar(
                lambda x: -_local_objective(x, k, mus, Ps, S, ctx, dist),
                bounds=(a, b), method="bounded",
                options={"xatol": 1e-13 * max(1.0, mus[k]), "maxiter": 200})
            if -res.fun > cur and lo < res.x < hi:
                trial_mus = mus.copy()
                trial_mus[k] = res.x
                trial_S = S.copy()
                trial_S[k] = float(dist.sf(res.x))
                L_try, C_try = L_of(trial_mus, Ps, trial_S)
                if L_try < L:
                    mus, S, L, C = trial_mus, trial_S, L_try, C_try
        history.append(L)
        if abs(C - C_start) < tol:
            break
    return mus, Ps, S, history, sweeps


def _solve_discrete(problem, constraints, n_b, c_hint=None, max_sweeps=5, bcd_tol=1e-6):
    bp, bi = problem.budgets(constraints)
    budget = min(bp, bi)
    if c_hint is None:
        c_hint = _continuous_c(problem, budget)
    state = {"l": None, "shots": 0, "evals": 0, "last": None}

    def h(logc):
        ctx, l, shots, res, mus, Ps, S = _policy_at_c(problem, math.exp(logc), n_b, state["l"])
        state["l"] = l
        state["shots"] += shots
        state["evals"] += 1
        state["last"] = (logc, ctx, res, mus, Ps, S)
        return _expected_power(Ps, S) - budget

    logc = _root_in_logc(h, math.log(c_hint), step=0.05, xtol=1e-14)
    if state["last"][0] != logc:
        h(logc)
    _, ctx, res, mus, Ps, S = state["last"]
    mus, Ps, S, history, sweeps = _bcd_polish(problem, constraints, ctx, mus, Ps, S,
                                              max_sweeps, bcd_tol)
    EP = _expected_power(Ps, S)
    C = problem.D_t * float(ctx.rate(mus, Ps) @ _interval_masses(S))
    lam, vt = _multipliers(problem, constraints, ctx.c)
    ps, is_ = _slacks(problem, constraints, EP)
    grad = _power_slope(mus, Ps, ctx) / ctx.c
    kkt_res = float(np.max(np.where(Ps > 0, np.abs(grad), np.maximum(grad, 0.0))))
    s2, sp2 = problem.sigma_w2, problem.sigma_p2
    pol = QuantizedPowerPolicy(n_b, mus, np.concatenate(([0.0], Ps)), T_sen=problem.T_sen,
                               c=ctx.c)
    rep = CapacityReport(
        C_LB=C, R00=np.log2(1.0 + mus * Ps / s2), R10=np.log2(1.0 + mus * Ps / (s2 + sp2)),
        b0=problem.b0, lam=lam, vartheta=vt, expected_power=EP, power_slack=ps,
        interference_slack=is_, converged=True,
        iterations={"multiplier_evals": state["evals"], "mu1_shots": state["shots"],
                    "bcd_sweeps": sweeps},
        lagrangian_history=history, kkt_residual=kkt_res, terminal_residual=abs(res),
        N=problem.N, T_sen=problem.T_sen, P_fa=problem.P_fa)
    if abs(res) > 1e-6 or abs(ps) > 1e-4 and abs(is_) > 1e-4:
        rep.converged = False
        raise ConvergenceError(
            f"discrete design did not converge (terminal residual {res:.2e}, "
            f"slacks {ps:.2e}/{is_:.2e})", best=(pol, rep),
            diagnostics=rep.iterations)
    return pol, rep


def solve_fixed_sensing(problem: LinkProblem, constraints: Constraints,
                        n_b: Optional[int], c_hint: Optional[float] = None):
    """Optimal thresholds and powers for a fixed sensing duration.

    Parameters
    ----------
    problem : LinkProblem
        Statistics at the chosen sensing duration.
    constraints : Constraints
        Power and interference caps.
    n_b : int or None
        Feedback bits; ``None`` gives the perfect-CSI limit.
    c_hint : float, optional
        Starting guess for the combined multiplier.

    Returns
    -------
    (QuantizedPowerPolicy, CapacityReport)
    """
    if n_b is not None and (int(n_b) != n_b or n_b < 0):
        raise DomainError(f"n_b must be a non-negative integer or None, got {n_b}")
    if problem.pihat0 <= 0:
        return _zero_solution(problem, n_b, problem.T_sen)
    if n_b is None:
        return _solve_continuous(problem, constraints)
    return _solve_discrete(problem, constraints, int(n_b), c_hint)


def _golden_integer(obj, lo, hi):
    """Maximise ``obj`` over integers in ``[lo, hi]`` assuming unimodality."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    while b - a > 3:
        x1 = int(round(b - invphi * (b - a)))
        x2 = int(round(a + invphi * (b - a)))
        if x1 == x2:
            x2 = x1 + 1
        if obj(x1) >= obj(x2):
            b = x2
        else:
            a = x1
    return max(range(a, b + 1), key=lambda n: (obj(n), -n))


def solve_P2(problem_at: Callable[[int], LinkProblem], constraints: Constraints,
             n_b: Optional[int], N_max: int, N_min: int = 1, grid_points: int = 16,
             N_fixed: Optional[int] = None):
    """Jointly optimise sensing duration, thresholds and powers.

    The sensing duration enters through the number ``N`` of samples per
    sector; any duration between two sample counts is dominated by the shorter
    one, so the search runs over integers.  A geometric grid locates the best
    region and a golden-section search refines it.  For quantized designs the
    grid stage uses the cheap perfect-CSI objective to place the bracket.

    Parameters
    ----------
    problem_at : callable
        Maps ``N`` to the :class:`LinkProblem` at that sensing duration.
    constraints : Constraints
    n_b : int or None
    N_max, N_min : int
        Admissible range of ``N``.
    grid_points : int
        Size of the coarse grid.
    N_fixed : int, optional
        Skip the search and solve at this ``N``.

    Returns
    -------
    (QuantizedPowerPolicy, CapacityReport)

    Raises
    ------
    ConvergenceError
        If the design at the selected ``N`` fails; carries the best design found.
    """
    if N_fixed is not None:
        return solve_fixed_sensing(problem_at(int(N_fixed)), constraints, n_b)
    if not 1 <= N_min <= N_max:
        raise DomainError(f"invalid N range [{N_min}, {N_max}]")

    cont_cache: dict = {}

    def cont(N):
        if N not in cont_cache:
            try:
                cont_cache[N] = solve_fixed_sensing(problem_at(N), constraints, None)
            except ConvergenceError:
                cont_cache[N] = None
        return cont_cache[N]

    def cont_obj(N):
        r = cont(N)
        return -math.inf if r is None else r[1].C_LB

    grid = sorted({int(round(v)) for v in np.geomspace(N_min, N_max, grid_points)})
    vals = [cont_obj(N) for N in grid]
    j = int(np.argmax(vals))
    lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, len(grid) - 1)]
    diffs = np.sign(np.diff(vals))
    unimodal = bool(np.all(np.diff(diffs[diffs != 0]) <= 0))

    if n_b is None:
        N_best = _golden_integer(cont_obj, lo, hi)
        pol, rep = cont(N_best)
    else:
        N_cont = _golden_integer(cont_obj, lo, hi)
        disc_cache: dict = {}

        def disc(N):
            if N not in disc_cache:
                try:
                    c_hint = cont(N)[0].c if cont(N) is not None else None
                    disc_cache[N] = solve_fixed_sensing(problem_at(N), constraints, n_b, c_hint)
                except ConvergenceError as exc:
                    disc_cache[N] = exc
            return disc_cache[N]

        def disc_obj(N):
            r = disc(N)
            return -math.inf if isinstance(r, Exception) else r[1].C_LB

        a = max(N_min, int(N_cont / 1.5))
        b = min(N_max, int(math.ceil(N_cont * 1.5)))
        N_best = _golden_integer(disc_obj, a, b)
        r = disc(N_best)
        if isinstance(r, Exception):
            raise r
        pol, rep = r
        rep.iterations["discrete_N_evals"] = len(disc_cache)
    rep.iterations["grid_unimodal"] = unimodal
    rep.iterations["continuous_N_evals"] = len(cont_cache)
    rep.search_trace = sorted((N, cont_obj(N)) for N in cont_cache)
    return pol, rep
