import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import quad
from scipy.special import erfc

from espar_cr.beamsel_sr import SelectionDiversityDistribution, sector_means_from_geometry
from espar_cr.errors import DomainError
from espar_cr.metrics import V, evaluate_metrics, outage_probability, symbol_error_probability
from espar_cr.optimizer import QuantizedPowerPolicy


def Qf(x):
    return 0.5 * erfc(x / math.sqrt(2))


def test_outage_single_exponential():
    pol = QuantizedPowerPolicy(0, np.array([0.5]), np.array([0.0, 1.0]))
    assert_allclose(outage_probability(pol, SelectionDiversityDistribution((1.0,))),
                    1 - math.exp(-0.5), rtol=1e-14)


def test_outage_vanishes_with_threshold():
    d = SelectionDiversityDistribution((1.0, 2.0))
    pol = QuantizedPowerPolicy(0, np.array([1e-9]), np.array([0.0, 1.0]))
    assert outage_probability(pol, d) < 1e-15


def test_zero_power_gives_half():
    d = SelectionDiversityDistribution((1.0, 2.0, 0.5))
    pol = QuantizedPowerPolicy(1, np.array([0.3, 1.0]), np.zeros(3))
    assert_allclose(symbol_error_probability(pol, d, 0.6, 0.1, 4.0, 1.0, 1.0), 0.35, rtol=1e-13)


@pytest.mark.parametrize("s, A", [(0.5, 1.0), (4.0, 0.2), (30.0, 3.0)])
def test_V_at_zero(s, A):
    assert_allclose(V(0.0, s, A), 0.5 * (1 / math.sqrt(1 + 2 * A / s) - 1), rtol=1e-13)


@pytest.mark.parametrize("mu, s, A", [(0.3, 2.0, 0.5), (2.0, 10.0, 1.5)])
def test_V_matches_tail_integral(mu, s, A):
    tail = quad(lambda x: Qf(math.sqrt(s * x)) * A * math.exp(-A * x), mu, np.inf,
                epsabs=0, epsrel=1e-12)[0]
    assert_allclose(-V(mu, s, A), tail, rtol=1e-8)
    assert V(np.inf, s, A) == 0.0


def test_sep_against_quadrature(model):
    d = sector_means_from_geometry(model, 3.0, 0.15)
    pol = QuantizedPowerPolicy(2, np.array([0.4, 1.0, 2.0, 4.5]),
                               np.array([0.0, 3.0, 2.0, 1.5, 1.0]))
    a0, b0, rho = 0.6, 0.05, 4.0
    edges = np.concatenate(([0.0], pol.mu, [np.inf]))
    ref = 0.0
    for k in range(len(edges) - 1):
        P = pol.P[k]
        ref += quad(lambda x: (a0 * Qf(math.sqrt(rho * x * P)) + b0 * Qf(math.sqrt(rho * x * P / 2)))
                    * d.pdf(x), edges[k], edges[k + 1], limit=200, epsabs=1e-14)[0]
    assert_allclose(symbol_error_probability(pol, d, a0, b0, rho, 1.0, 1.0), ref, rtol=1e-9)


def test_sep_degenerate_means_stable():
    d = SelectionDiversityDistribution((2.0,) * 8)
    pol = QuantizedPowerPolicy(1, np.array([0.5, 3.0]), np.array([0.0, 2.0, 1.0]))
    edges = np.array([0.0, 0.5, 3.0, np.inf])
    ref = sum(quad(lambda x: 0.7 * Qf(math.sqrt(4 * x * pol.P[k])) * d.pdf(x),
                   edges[k], edges[k + 1], limit=200, epsabs=1e-14)[0] for k in range(3))
    assert_allclose(symbol_error_probability(pol, d, 0.7, 0.0, 4.0, 1.0, 1.0), ref, rtol=1e-9)


def test_rho_checked():
    d = SelectionDiversityDistribution((1.0,))
    pol = QuantizedPowerPolicy(0, np.array([0.5]), np.array([0.0, 1.0]))
    with pytest.raises(DomainError):
        symbol_error_probability(pol, d, 0.7, 0.0, 0.0, 1.0, 1.0)


def test_metrics_bundle(scenario, ref_design):
    pol, rep = ref_design
    prob = scenario.problem(rep.N)
    m = evaluate_metrics(pol, prob.dist, prob.alpha0, prob.beta0, 4.0, 1.0, prob.sigma_p2)
    assert 0 < m.P_out < 1 and 0 < m.P_e < 0.5
    assert_allclose(m.SNR0, 4.0 * pol.P)


def test_error_floor_once_interference_binds(scenario):
    """P_e stops improving with P_bar when the interference cap binds."""
    from espar_cr.optimizer import Constraints
    vals = []
    for P_dB in (0.0, 10.0, 20.0, 30.0):
        pol, rep = scenario.solve(Constraints(10 ** (P_dB / 10), 10 ** -0.6), 2, 0.0, 1)
        prob = scenario.problem(rep.N)
        vals.append(symbol_error_probability(pol, prob.dist, prob.alpha0, prob.beta0, 4.0,
                                             prob.sigma_w2, prob.sigma_p2))
    assert vals[1] < vals[0]
    assert_allclose(vals[2], vals[3], rtol=1e-6)
