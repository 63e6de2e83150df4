import math
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from espar_cr import mc_oracle as mc
from espar_cr.antenna import compute_sector_integrals
from espar_cr.errors import DomainError
from espar_cr.sensing import (CLTWarning, FramePlan, PriorModel, Q, Qinv, design_detector,
                              detector_statistics, sensing_error_probabilities,
                              threshold_for_target_pd)


def plan_for(N, M=8):
    return FramePlan.from_samples(N, M, 20e-3, 1e-3, 1e-6)


@pytest.fixture(scope="module")
def integrals(model):
    return compute_sector_integrals(model)


def test_Qinv_roundtrip():
    for p in [1e-12, 1e-3, 0.1, 0.5, 0.9, 1 - 1e-9]:
        assert_allclose(Q(Qinv(p)), p, rtol=1e-12)
    assert abs(Qinv(0.5)) < 1e-15


def test_frame_plan_bookkeeping():
    p = plan_for(20)
    assert p.N == 20 and p.N_eq == 160
    assert_allclose(p.D_t, (20e-3 - 160e-6 - 1e-3) / 20e-3)
    with pytest.raises(DomainError):
        FramePlan(T_f=1e-3, T_sen=2e-3, T_train=0.0, T_s=1e-6, M=8)


def test_noise_only_variance(integrals, prior):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CLTWarning)
        d = detector_statistics(plan_for(20), prior, integrals)
    assert_allclose(d.var_T_H0, 1 / 160, rtol=1e-15)
    assert d.var_T_H1 > d.var_T_H0


def test_no_signal_collapses_hypotheses(integrals):
    d = detector_statistics(plan_for(20), PriorModel(P_p=0.0), integrals)
    assert d.zeta == 1.0
    assert_allclose(d.var_T_H1, d.var_T_H0, rtol=1e-14)
    eta, P_fa = threshold_for_target_pd(d, 0.5)
    assert_allclose(eta, 1.0)
    assert_allclose(P_fa, 0.5)


def test_clt_warning_below_30_samples(integrals, prior):
    with pytest.warns(CLTWarning):
        d = detector_statistics(plan_for(3), prior, integrals)
    assert d.clt_warning


def test_false_alarm_monotone_in_target(integrals, prior):
    d = detector_statistics(plan_for(60), prior, integrals)
    pfa = [threshold_for_target_pd(d, pd)[1] for pd in np.linspace(0.05, 0.999999, 50)]
    assert np.all(np.diff(pfa) >= 0)
    assert pfa[-1] > 0.99


def test_sensing_probabilities(integrals, prior):
    d = design_detector(plan_for(60), prior, integrals, 0.9)
    assert_allclose(d.beta0, 0.03, rtol=1e-12)
    assert_allclose(d.alpha0, 0.7 * (1 - d.P_fa))
    assert_allclose(d.pihat0 + d.pihat1, 1.0)
    perfect = d.__class__(**{**d.__dict__, "P_fa": 0.0, "P_d": 1.0})
    a0, b0, ph0, _ = sensing_error_probabilities(perfect, prior)
    assert b0 == 0.0 and ph0 == prior.pi0


def test_h1_variance_against_simulation(model, integrals, prior):
    """Closed-form var of T under H1 vs the sample variance of 10^6 draws (3 SE)."""
    plan = plan_for(20)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CLTWarning)
        d = detector_statistics(plan, prior, integrals)
    rng = np.random.default_rng(11)
    T = np.concatenate([mc.draw_test_statistic(plan, prior, model, True, 50_000, rng)
                        for _ in range(20)])
    dev = (T - T.mean()) ** 2
    se = dev.std() / math.sqrt(len(T))
    print(f"var_T_H1 closed={d.var_T_H1:.6g} empirical={dev.mean():.6g} se={se:.3g}")
    assert abs(dev.mean() - d.var_T_H1) <= 3 * se
    assert_allclose(T.mean(), d.zeta, rtol=1e-3)


def test_false_alarm_against_h0_trials(model, integrals, prior):
    """Designed P_fa at N=20 vs 10^6 H0 trials, within 0.01."""
    plan = plan_for(20)
    d = design_detector(plan, prior, integrals, 0.9)
    T = mc.draw_test_statistic(plan, prior, model, False, 10**6, np.random.default_rng(5))
    emp = float(np.mean(T > d.eta))
    print(f"P_fa closed={d.P_fa:.5f} empirical={emp:.5f}")
    assert abs(emp - d.P_fa) <= 0.01
