import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import scalar_model
from psidkit.errors import SingularGram
from psidkit.filtering import (
    NOT_OBSERVABLE, innovation_residuals, learn_filter_gain, recover_kf, reduced_rank_regression,
)
from psidkit.kalman import ideal_filtering_model
from psidkit.lssm import FilteringModel, StochasticModel, to_predictor_form
from psidkit.simulation import GenConfig, generate_random_model, simulate


def _objective(Z, Y, M):
    return np.linalg.norm(Z - M @ Y) ** 2


def test_rrr_full_rank_is_ols(rng):
    Z, Y = rng.standard_normal((3, 200)), rng.standard_normal((4, 200))
    ols = Z @ Y.T @ np.linalg.inv(Y @ Y.T)
    np.testing.assert_allclose(reduced_rank_regression(Z, Y, 3), ols, atol=1e-10)


def test_rrr_rank_one_truth_is_exact(rng):
    Y = rng.standard_normal((3, 100))
    Z = np.vstack([2.5 * Y[0], -1.0 * Y[0]])
    M = reduced_rank_regression(Z, Y, 1)
    assert _objective(Z, Y, M) < 1e-20 * np.linalg.norm(Z) ** 2 + 1e-20


def test_rrr_beats_random_candidates(rng):
    Z, Y = rng.standard_normal((3, 60)), rng.standard_normal((5, 60))
    M = reduced_rank_regression(Z, Y, 2)
    assert np.linalg.matrix_rank(M) <= 2
    best = _objective(Z, Y, M)
    ols = reduced_rank_regression(Z, Y, 3)
    U, s, Vt = np.linalg.svd(ols)
    assert best <= _objective(Z, Y, (U[:, :2] * s[:2]) @ Vt[:2]) + 1e-9
    for _ in range(1000):
        cand = rng.standard_normal((3, 2)) @ rng.standard_normal((2, 5)) * 0.3
        assert best <= _objective(Z, Y, cand) + 1e-9


def test_rrr_singular_gram():
    Y = np.ones((2, 10))
    with pytest.raises(SingularGram):
        reduced_rank_regression(np.ones((1, 10)), Y, 1)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), r=st.integers(1, 3))
def test_rrr_optimal_against_perturbations(seed, r):
    rng = np.random.default_rng(seed)
    Z, Y = rng.standard_normal((4, 40)), rng.standard_normal((3, 40))
    M = reduced_rank_regression(Z, Y, r)
    best = _objective(Z, Y, M)
    U, s, Vt = np.linalg.svd(M)
    for _ in range(20):
        A = U[:, :r] + 0.05 * rng.standard_normal((4, r))
        B = (s[:r, None] * Vt[:r]) + 0.05 * rng.standard_normal((r, 3))
        assert best <= _objective(Z, Y, A @ B) + 1e-9


def test_zero_predictor_residuals(rng):
    p = to_predictor_form(scalar_model(cz=0.0)).replace(K=np.zeros((1, 1)))
    y, z = rng.standard_normal(20), rng.standard_normal(20)
    yt, zt = innovation_residuals(p, y, z)
    np.testing.assert_array_equal(yt[:, 0], y)
    np.testing.assert_array_equal(zt[:, 0], z)


def test_residual_covariance_is_innovation_covariance(rng):
    m = generate_random_model(GenConfig(), rng)
    y, z, _ = simulate(m, 100_000, rng)
    p = to_predictor_form(m)
    yt, _ = innovation_residuals(p, y, z)
    C = np.cov(yt.T).reshape(m.n_y, m.n_y)
    assert np.linalg.norm(C - p.Sigma_e) / np.linalg.norm(p.Sigma_e) < 0.05


def test_direct_gain_on_true_predictor(rng):
    m = generate_random_model(GenConfig(correlated_S=True, n_x=(2, 3)), rng)
    y, z, _ = simulate(m, 200_000, rng)
    fm = learn_filter_gain(to_predictor_form(m), y, z)
    true = ideal_filtering_model(m).CzKf
    assert np.linalg.norm(fm.CzKf - true) / np.linalg.norm(true) < 0.03


def test_independent_z_gives_zero_gain(rng):
    m = scalar_model(cz=0.0)
    N = 100_000
    y, z, _ = simulate(m, N, rng)
    fm = learn_filter_gain(to_predictor_form(m), y, z)
    assert np.linalg.norm(fm.CzKf) < 5 / np.sqrt(N)


def test_horizon_variant_exceeds_direct_rank(rng):
    A = np.array([[0.8, 0.3], [-0.3, 0.7]])
    m = StochasticModel(
        A=A, Cy=np.eye(2), Cz=[[1.0, 0.0]], Q=np.eye(2), R=np.eye(2), S=np.zeros((2, 2)),
        Rz=[[0.5]], Sxz=np.zeros((2, 1)),
    )
    y, z, _ = simulate(m, 200_000, rng)
    p = to_predictor_form(m)
    h = learn_filter_gain(p, y, z, variant="horizon", i=5)
    d = learn_filter_gain(p, y, z, variant="direct")
    s = np.linalg.svd(h.GammaZKf, compute_uv=False)
    assert s[1] > 1e-2 * s[0]
    assert np.linalg.matrix_rank(d.CzKf) == 1
    np.testing.assert_allclose(h.CzKf, h.GammaZKf[:1])
    kf = recover_kf(h, use="GammaZ")
    true_kf = ideal_filtering_model(m).Kf
    assert np.linalg.norm(kf - true_kf) / np.linalg.norm(true_kf) < 0.05


def test_recover_identity_readout():
    p = to_predictor_form(scalar_model(cz=1.0))
    fm = FilteringModel(predictor=p, CzKf=np.array([[0.4]]))
    np.testing.assert_allclose(recover_kf(fm), [[0.4]])


def test_recover_unobservable():
    m = StochasticModel(
        A=np.diag([0.5, 0.7]), Cy=np.eye(2), Cz=[[1.0, 0.0]], Q=np.eye(2), R=np.eye(2), S=np.zeros((2, 2)),
        Rz=[[1.0]], Sxz=np.zeros((2, 1)),
    )
    fm = ideal_filtering_model(m)
    assert recover_kf(fm) is NOT_OBSERVABLE
    assert not recover_kf(fm.replace(GammaZKf=np.vstack([fm.CzKf, fm.CzKf])), use="GammaZ")
