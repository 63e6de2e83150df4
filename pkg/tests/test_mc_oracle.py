import dataclasses
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from espar_cr import mc_oracle as mc
from espar_cr.errors import DomainError
from espar_cr.optimizer import QuantizedPowerPolicy, capacity_lower_bound, solve_fixed_sensing
from espar_cr.sensing import FramePlan


@pytest.fixture(scope="module")
def plan20():
    return FramePlan.from_samples(20, 8, 20e-3, 1e-3, 1e-6)


@pytest.fixture(scope="module")
def bernoulli_setup(scenario, ref_design):
    pol, rep = ref_design
    return mc.setup_for(scenario, pol, rep.N, sensing="bernoulli")


@pytest.fixture(scope="module")
def bernoulli_report(bernoulli_setup):
    return mc.run_trials(bernoulli_setup, 10**6, seed=2024)


def test_noise_only_energy_mean(model, prior, plan20):
    e = mc.draw_sector_energies(prior, model, plan20, np.ones(20000), np.zeros(20000),
                                np.random.default_rng(0), active=False)
    se = e.std() / math.sqrt(e.size)
    assert abs(e.mean() - prior.sigma_w2) <= 4 * se


def test_boresight_energy_mean(model, prior, plan20):
    g, n = 1.7, 40000
    e = mc.draw_sector_energies(prior, model, plan20, np.full(n, g), np.zeros(n),
                                np.random.default_rng(1))[:, 0]
    target = g * model.gains(0.0)[0] * prior.P_p + prior.sigma_w2
    assert abs(e.mean() - target) <= 4 * e.std() / math.sqrt(n)


def test_energy_chi_square_law(model, prior, plan20):
    """2 N eps_m / sigma_e^2 is chi-square with 2N degrees of freedom (KS p > 0.01)."""
    n, g, phi = 100_000, 0.8, 0.3
    e = mc.draw_sector_energies(prior, model, plan20, np.full(n, g), np.full(n, phi),
                                np.random.default_rng(4))
    s2e = g * model.gains(phi) * prior.P_p + prior.sigma_w2
    for m in (0, 3):
        p = stats.kstest(2 * plan20.N * e[:, m] / s2e[m], stats.chi2(2 * plan20.N).cdf).pvalue
        assert p > 0.01


def test_perfect_detection_means_no_interference(bernoulli_setup):
    det = dataclasses.replace(bernoulli_setup.detector, P_d=1.0)
    s = dataclasses.replace(bernoulli_setup, detector=det)
    r = mc.run_trials(s, 100_000, seed=1, keep_nu=False)
    assert r.estimates["interference"] == 0.0


def test_power_within_cap(bernoulli_report, ref_constraints):
    est, se = bernoulli_report.estimates, bernoulli_report.std_errors
    assert est["power"] <= ref_constraints.P_bar + 3 * se["power"]


def test_oracle_matches_closed_forms(bernoulli_report, bernoulli_setup, scenario, ref_constraints):
    closed = mc.closed_forms(bernoulli_setup, scenario, ref_constraints)
    checks = mc.oracle_checks(bernoulli_report, bernoulli_setup, closed)
    for c in checks:
        print(c.line())
    assert all(c.passed for c in checks)


def test_selection_frequencies_total_variation(scenario, prior, model):
    """Argmax-PU frequencies vs the Delta_bar column: TV < 0.01 at 10^6 trials (N=20)."""
    freq = mc.selection_trials(prior, model, 20, 1, 10**6, seed=9)["frequencies"]
    tv = 0.5 * np.abs(freq - scenario.error_matrix(20).Delta_bar[:, 0]).sum()
    assert tv < 0.01


def test_cross_gain_at_twenty_samples(scenario, ref_constraints):
    """Interference proxy E[g_sp p(kappa_SR - kappa_PU)] within 2% at N = 20."""
    pol, _ = solve_fixed_sensing(scenario.problem(20), ref_constraints, 2)
    s = mc.setup_for(scenario, pol, 20, sensing="bernoulli")
    r = mc.run_trials(s, 10**6, seed=77, keep_nu=False)
    closed = mc.closed_forms(s, scenario)["cross_gain"]
    assert abs(r.estimates["cross_gain"] / closed - 1) <= 0.02
    b0 = scenario.problem(20).b0
    assert_allclose(closed * scenario.detector(20).beta0, b0, rtol=1e-12)


def test_zero_policy_zero_capacity(bernoulli_setup):
    pol = bernoulli_setup.policy
    zero = QuantizedPowerPolicy(pol.n_b, pol.mu, np.zeros_like(pol.P), c=pol.c)
    s = dataclasses.replace(bernoulli_setup, policy=zero)
    assert mc.empirical_capacity(mc.run_trials(s, 50_000, seed=3, keep_nu=False)) == 0.0


def test_capacity_matches_bound_without_missed_detection(bernoulli_setup, ref_constraints):
    det = dataclasses.replace(bernoulli_setup.detector, P_d=1.0, beta0=0.0,
                              pihat0=bernoulli_setup.detector.alpha0)
    prob = dataclasses.replace(bernoulli_setup.problem, beta0=0.0, b0=0.0)
    pol, rep = solve_fixed_sensing(prob, ref_constraints, 4)
    s = dataclasses.replace(bernoulli_setup, detector=det, problem=prob, policy=pol)
    r = mc.run_trials(s, 10**6, seed=5, keep_nu=False)
    assert abs(mc.empirical_capacity(r) - rep.C_LB) <= 3 * r.std_errors["capacity"]


def test_missed_detection_path_above_jensen_bound(bernoulli_report, bernoulli_setup):
    prob, pol = bernoulli_setup.problem, bernoulli_setup.policy
    bound = capacity_lower_bound(pol, prob.dist, 0.0, prob.beta0, prob.D_t, prob.sigma_w2,
                                 prob.sigma_p2)
    print(f"missed-detection path: empirical={bernoulli_report.estimates['capacity_H1']:.5f} "
          f"bound={bound:.5f}")
    assert bernoulli_report.estimates["capacity_H1"] >= bound


def test_reproducible_and_thread_independent(bernoulli_setup):
    a = mc.run_trials(bernoulli_setup, 70_000, seed=12).to_json()
    b = mc.run_trials(bernoulli_setup, 70_000, seed=12, threads=3).to_json()
    c = mc.run_trials(bernoulli_setup, 70_000, seed=13).to_json()
    assert a == b
    assert a != c


def test_invalid_inputs(bernoulli_setup):
    with pytest.raises(DomainError):
        mc.run_trials(bernoulli_setup, 0, seed=1)
    with pytest.raises(DomainError):
        dataclasses.replace(bernoulli_setup, sensing="oracle")
