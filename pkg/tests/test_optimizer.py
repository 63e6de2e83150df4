import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import optimize
from scipy.integrate import quad

from espar_cr.antenna import compute_sector_integrals, make_omni_equivalent
from espar_cr.beamsel_pu import PuErrorMatrix
from espar_cr.beamsel_sr import (SelectionDiversityDistribution, SrSelectionProbabilities,
                                 sector_means_from_geometry)
from espar_cr.errors import DomainError
from espar_cr.optimizer import (Constraints, LinkProblem, QuantizedPowerPolicy, RateContext,
                                capacity_lower_bound, interference_coefficient, kkt_power,
                                next_threshold, solve_fixed_sensing)

LN2 = math.log(2.0)


def test_kkt_infinite_multiplier_gives_zero():
    assert kkt_power(5.0, math.inf, 0.0, 0.1, 0.8, 0.7, 0.1, 1.0, 1.0) == 0.0


def test_kkt_reduces_to_water_filling():
    P = kkt_power(10.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0)
    assert_allclose(P, 1 / LN2 - 0.1, rtol=1e-14)


@pytest.mark.parametrize("mu", [0.05, 0.3, 1.0, 4.0, 30.0])
def test_kkt_stationarity(mu):
    a0, b0, s2, sp2, lam, vt, bb = 0.6, 0.05, 1.0, 1.0, 0.4, 0.3, 0.02
    c = lam * (a0 + b0) + vt * bb
    P = kkt_power(mu, lam, vt, bb, a0 + b0, a0, b0, s2, sp2)
    d = (a0 * mu / (s2 + mu * P) + b0 * mu / (s2 + sp2 + mu * P)) / LN2 - c
    if P > 0:
        assert abs(d) <= 1e-8
    else:
        assert d <= 1e-8


def test_kkt_input_checks():
    with pytest.raises(DomainError):
        kkt_power(1.0, -1.0, 0.0, 0.1, 0.8, 0.7, 0.1, 1.0, 1.0)
    with pytest.raises(DomainError):
        kkt_power(1.0, 1.0, 0.0, 0.1, 0.9, 0.7, 0.1, 1.0, 1.0)


def _ctx(c=0.5):
    return RateContext(0.7, 0.0, 1.0, 0.0, c)


def test_next_threshold_stationarity_toy():
    """M=1, delta=1: mu_2 makes the Lagrangian stationary in the hand-set mu_1."""
    dist = SelectionDiversityDistribution((1.0,))
    ctx = _ctx()
    mu1 = 0.9
    P1 = ctx.power(mu1)
    mu2 = next_threshold(0.0, mu1, 0.0, P1, dist, ctx)
    assert mu2 > mu1

    def local(x):
        return (ctx.rate(x, P1) - ctx.c * P1) * (math.exp(-x) - math.exp(-mu2))

    res = optimize.minimize_scalar(lambda x: -local(x), bounds=(1e-6, mu2), method="bounded",
                                   options={"xatol": 1e-12})
    assert_allclose(res.x, mu1, rtol=1e-6)


def test_next_threshold_terminal_sentinel():
    """A target CDF value of 1 (here the survival underflows) returns infinity."""
    dist = SelectionDiversityDistribution((1.0,))
    ctx = _ctx()
    assert next_threshold(1.0, 800.0, ctx.power(1.0), ctx.power(800.0), dist, ctx) == math.inf


def test_next_threshold_rejects_overshoot():
    from espar_cr.errors import InfeasibleStepError
    dist = SelectionDiversityDistribution((1.0,))
    ctx = _ctx()
    with pytest.raises(InfeasibleStepError):
        next_threshold(0.9, 3.0, ctx.power(0.9), ctx.power(3.0), dist, ctx)


def test_thresholds_strictly_increasing(ref_design):
    pol, _ = ref_design
    assert np.all(np.diff(pol.mu) > 0) and pol.mu[0] > 0
    assert pol.P[0] == 0.0 and np.all(pol.P >= 0)


def test_zero_policy_zero_capacity():
    dist = SelectionDiversityDistribution((1.0, 2.0))
    pol = QuantizedPowerPolicy(1, np.array([0.5, 1.0]), np.zeros(3), c=1.0)
    assert capacity_lower_bound(pol, dist, 0.7, 0.1, 0.9, 1.0, 1.0) == 0.0


def test_single_interval_capacity():
    dist = SelectionDiversityDistribution((1.0,))
    pol = QuantizedPowerPolicy(0, np.array([1.0]), np.array([0.0, 1.0]), c=1.0)
    assert_allclose(capacity_lower_bound(pol, dist, 1.0, 0.0, 1.0, 1.0, 0.0), math.exp(-1),
                    rtol=1e-14)


def test_quantized_bound_below_unquantized(scenario, ref_design):
    pol, rep = ref_design
    prob = scenario.problem(rep.N)
    dist = prob.dist
    edges = np.concatenate((pol.mu, [np.inf]))
    total = 0.0
    for k in range(len(pol.mu)):
        P = pol.P[k + 1]
        total += quad(lambda x: (prob.alpha0 * math.log2(1 + x * P / prob.sigma_w2)
                                 + prob.beta0 * math.log2(1 + x * P / (prob.sigma_w2 + prob.sigma_p2)))
                      * dist.pdf(x), edges[k], edges[k + 1], limit=200)[0]
    assert rep.C_LB <= prob.D_t * total


def test_interference_coefficient_limits(model, scenario):
    D = scenario.error_matrix(20)
    psi = SrSelectionProbabilities(np.full(8, 1 / 8))
    assert interference_coefficient(psi, D, 1, model, 0.0, 1.0) == 0.0
    omni = make_omni_equivalent(model)
    b0 = interference_coefficient(SrSelectionProbabilities(np.ones(1)),
                                  PuErrorMatrix(np.ones((1, 1)), 20), 1, omni, 0.03, 2.0)
    assert_allclose(b0, 0.03 * 2.0 * compute_sector_integrals(model).E_A, rtol=1e-12)


def _water_filling_benchmark(dist, alpha0, D_t, budget):
    """Continuous-CSI optimum with beta0 = 0, by quadrature and root finding."""
    def EP(level):
        return quad(lambda x: (level - 1.0 / x) * dist.pdf(x), 1.0 / level, np.inf, limit=400)[0]
    level = optimize.brentq(lambda L: EP(L) - budget, 1e-6, 1e6, xtol=1e-14)
    C = quad(lambda x: math.log2(level * x) * dist.pdf(x), 1.0 / level, np.inf, limit=400)[0]
    return D_t * alpha0 * C


def test_many_bits_approach_water_filling(model):
    dist = sector_means_from_geometry(model, 3.0, 0.2)
    prob = LinkProblem(dist=dist, alpha0=0.65, beta0=0.0, b0=0.0, D_t=0.9, sigma_w2=1.0,
                       sigma_p2=1.0)
    con = Constraints(5.0, 1e9)
    budget = 5.0 / (0.9 * 0.65)
    bench = _water_filling_benchmark(dist, 0.65, 0.9, budget)
    _, rep = solve_fixed_sensing(prob, con, 8)
    _, rep_c = solve_fixed_sensing(prob, con, None)
    assert rep.C_LB <= bench * (1 + 1e-9)
    assert abs(rep.C_LB / bench - 1) <= 0.01
    assert_allclose(rep_c.C_LB, bench, rtol=1e-6)


def test_reference_design_properties(ref_design, ref_constraints, scenario):
    pol, rep = ref_design
    prob = scenario.problem(rep.N)
    power = prob.D_t * prob.pihat0 * rep.expected_power
    interf = prob.D_t * prob.b0 * rep.expected_power
    assert power <= ref_constraints.P_bar * (1 + 1e-4)
    assert interf <= ref_constraints.I_bar * (1 + 1e-4)
    assert abs(rep.lam * rep.power_slack) < 1e-6
    assert abs(rep.vartheta * rep.interference_slack) < 1e-6
    assert rep.kkt_residual < 1e-8
    assert np.all(np.diff(rep.lagrangian_history) <= 1e-12)
    assert rep.converged


def test_four_bits_close_to_perfect_csi(scenario, ref_constraints, ref_design):
    """Reference example: n_b = 4 within 3% of the perfect-CSI design."""
    _, rep4 = ref_design
    _, rep_inf = scenario.solve(ref_constraints, None, 0.0, 1)
    gap = 1 - rep4.C_LB / rep_inf.C_LB
    print(f"C_LB n_b=4 {rep4.C_LB:.5f}, perfect CSI {rep_inf.C_LB:.5f}, gap {gap:.4f}")
    assert gap <= 0.03


def test_sensing_duration_search(scenario, ref_constraints):
    _, rep = scenario.solve(ref_constraints, None, 0.0, 1)
    best = rep.N
    for N in (max(1, best - 5), best + 5):
        _, r = scenario.solve(ref_constraints, None, 0.0, 1, N_fixed=N)
        assert r.C_LB <= rep.C_LB + 1e-12
