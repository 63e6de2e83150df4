import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from espar_cr.beamsel_pu import (PuErrorMatrix, PuSelectionContext, average_error_matrix,
                                 delta_profile, omega_matrix, selection_prob_conditional,
                                 selection_prob_series)
from espar_cr.errors import DomainError
from espar_cr.sensing import PriorModel


def test_equal_scales_uniform():
    ctx = PuSelectionContext((0.1,) * 8, 20)
    for i in range(1, 9):
        assert_allclose(selection_prob_conditional(ctx, i), 1 / 8, atol=1e-12)


def test_index_checked():
    with pytest.raises(DomainError):
        selection_prob_conditional(PuSelectionContext((1.0, 1.0), 5), 3)


def test_dominant_sector_against_argmax_simulation():
    N = 20
    ctx = PuSelectionContext((3.0 / N, 1.0 / N), N)
    p = selection_prob_conditional(ctx, 1)
    assert p > 0.99
    rng = np.random.default_rng(3)
    e = rng.standard_gamma(N, size=(10**6, 2)) * np.array([3.0, 1.0])
    emp = float(np.mean(e[:, 0] > e[:, 1]))
    print(f"Omega_1 closed={p:.6f} empirical={emp:.6f}")
    assert abs(p - emp) <= 0.003


def test_methods_agree_reference_geometry(model, prior):
    ctx = PuSelectionContext.from_geometry(model, prior, 20, 1.0, 0.0)
    g = selection_prob_conditional(ctx, 1)
    assert abs(g - selection_prob_series(ctx, 1)) <= 1e-4
    assert_allclose(g, selection_prob_conditional(ctx, 1, method="quad"), atol=1e-10)


def test_series_equal_pair():
    assert_allclose(selection_prob_series(PuSelectionContext((1.0, 1.0), 7)), 0.5, atol=1e-8)


def test_series_three_sectors_against_quadrature():
    ctx = PuSelectionContext((2.0, 1.0, 1.0), 5)
    assert abs(selection_prob_series(ctx) - selection_prob_conditional(ctx, 1, "quad")) <= 1e-6


def test_series_large_N_finite():
    v = selection_prob_series(PuSelectionContext((1.3, 1.0), 200))
    assert math.isfinite(v) and 0.5 < v <= 1.0


def test_omega_rows_sum_to_one():
    rng = np.random.default_rng(0)
    s = rng.uniform(0.1, 3.0, size=(50, 8))
    assert_allclose(omega_matrix(s, 40).sum(axis=1), 1.0, atol=1e-10)


def test_delta_high_near_boresight(model, prior):
    """Reference example: Delta_1 >= 0.95 at N=200, phi_PU=0."""
    d = delta_profile(model, prior, 200, 1, 0.0)
    print(f"Delta_1(N=200, phi=0) = {d:.5f}")
    assert d >= 0.95


def test_delta_low_opposite(model, prior):
    assert delta_profile(model, prior, 200, 1, math.pi) <= 0.05


def test_delta_profile_sums_to_one(model, prior):
    phis = np.array([-2.0, -0.3, 0.0, 0.2, 1.7])
    total = sum(delta_profile(model, prior, 60, i, phis) for i in range(1, 9))
    assert_allclose(total, 1.0, atol=1e-9)


def test_delta_against_fading_simulation(model, prior):
    """Delta_1(N=200, 0) vs argmax of block-fading energies, 2*10^5 draws."""
    from espar_cr.mc_oracle import _block_energies
    rng = np.random.default_rng(8)
    n = 200_000
    g = rng.standard_exponential(n)
    e = _block_energies(prior, model, 200, g, np.zeros(n), rng)
    emp = float(np.mean(np.argmax(e, axis=1) == 0))
    d = delta_profile(model, prior, 200, 1, 0.0)
    assert abs(emp - d) <= 4 * math.sqrt(d * (1 - d) / n)


@pytest.mark.parametrize("snr_db", [0.0, -5.0])
def test_error_matrix_properties(model, snr_db):
    prior = PriorModel(P_p=10 ** (snr_db / 10))
    diag = []
    for N in (20, 60, 100):
        D = average_error_matrix(model, prior, N)
        assert D.column_sum_error() <= 1e-4
        assert D.symmetry_error() <= 1e-4
        diag.append(D.Delta_bar[0, 0])
    assert np.all(np.diff(diag) > 0)


def test_error_matrix_diagonal_dominant(model, prior):
    D = average_error_matrix(model, prior, 200).Delta_bar
    assert np.all(D[0, 0] > D[0, 1:])


def test_full_matches_circulant(model, prior):
    a = average_error_matrix(model, prior, 40)
    b = average_error_matrix(model, prior, 40, full=True)
    assert_allclose(a.Delta_bar, b.Delta_bar, atol=1e-12)


def test_single_sector_trivial(prior):
    from espar_cr.antenna import BeamPatternModel
    m = BeamPatternModel(1.0, 0.01, 0.3, M=1)
    assert_allclose(average_error_matrix(m, prior, 10).Delta_bar, [[1.0]])


def test_csv_roundtrip(tmp_path, model, prior):
    D = average_error_matrix(model, prior, 20)
    D.to_csv(tmp_path / "d.csv")
    E = PuErrorMatrix.from_csv(tmp_path / "d.csv", 20)
    assert_allclose(E.Delta_bar, D.Delta_bar, rtol=0, atol=0)
