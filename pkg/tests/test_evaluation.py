import numpy as np
import pytest

from conftest import scalar_model
from psidkit.errors import DegenerateAlignment, DegenerateTarget
from psidkit.evaluation import (
    align_models, compare_parameters, eigenvalue_error, match_eigenvalues, shifted_decode, shifted_psid_baseline,
    true_targets,
)
from psidkit.kalman import ideal_decode, kalman_predict
from psidkit.lssm import Dims, apply_similarity, covariances_from_stochastic, solve_dare, to_predictor_form
from psidkit.metrics import normalized_error, r2_score
from psidkit.simulation import GenConfig, canonical_correlations, generate_random_model, simulate, z_relevant_states


def test_r2_examples():
    z = np.array([0.0, 1, 2, 3])
    assert r2_score(z, z) == 1.0
    assert r2_score(z, np.full(4, z.mean())) == pytest.approx(0.0)
    assert r2_score(z, np.zeros(4)) == pytest.approx(-1.8)


def test_r2_skips_constant_dims():
    z = np.column_stack([np.arange(5.0), np.ones(5)])
    assert r2_score(z, np.column_stack([np.arange(5.0), np.zeros(5)])) == 1.0
    with pytest.raises(DegenerateTarget):
        r2_score(np.ones((5, 1)), np.zeros((5, 1)))


def test_normalized_error_scaling():
    A = np.array([[0.5, 0.1], [0.0, 0.3]])
    assert normalized_error(1.1 * A, A) == pytest.approx(0.1)


def test_eigen_matching():
    t = np.array([0.5, 0.9j, -0.9j])
    got = match_eigenvalues(t, [-0.89j, 0.52, 0.91j])
    np.testing.assert_allclose(got, [0.52, 0.91j, -0.89j])
    assert eigenvalue_error(np.diag([0.5, 0.3]), np.diag([0.3, 0.5])) == 0.0


def test_generator_invariants_and_determinism():
    cfg = GenConfig(correlated_S=True)
    a = generate_random_model(cfg, np.random.default_rng(9))
    b = generate_random_model(cfg, np.random.default_rng(9))
    for f in ("A", "Cy", "Cz", "Q", "R", "S", "Rz", "Sxz"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
    a.check()
    assert np.linalg.norm(a.S) > 0
    assert np.linalg.norm(solve_dare(a.A, a.Cy, a.Q, a.R, a.S).K_v) > 0
    mags = np.abs(np.linalg.eigvals(a.A))
    assert np.all((mags >= 0.3 - 1e-9) & (mags <= 0.95 + 1e-9))


def test_random_policy_zeroes_columns():
    m = generate_random_model(GenConfig(n_x=(4, 4), n1_policy="random"), np.random.default_rng(4))
    n1 = z_relevant_states(m)
    assert 1 <= n1 <= 4
    assert np.all(m.Cz[:, n1:] == 0)
    cc_y, _ = canonical_correlations(m)
    assert np.all((cc_y >= 0) & (cc_y <= 1 + 1e-9))


def test_noiseless_simulation_is_zero(rng):
    m = scalar_model(q=0.0, r=0.0, rz=0.0)
    y, z, _ = simulate(m, 50, rng, x0=np.zeros(1))
    assert np.all(y == 0) and np.all(z == 0)


def test_simulated_covariances(rng):
    m = generate_random_model(GenConfig(correlated_S=True, allow_Sxz=True, n_x=(1, 3), n_y=(1, 3)), rng)
    y, z, x = simulate(m, 1_000_000, rng)
    cov = covariances_from_stochastic(m)
    N = len(y)
    Sy = y.T @ y / N
    Gy = x[1:].T @ y[:-1] / (N - 1)
    Gz = x[1:].T @ z[:-1] / (N - 1)
    assert normalized_error(Sy, cov.Sigma_y) < 0.05
    assert normalized_error(Gy, cov.G_y) < 0.05
    assert normalized_error(Gz, cov.G_z) < 0.05


def test_alignment_roundtrip(rng):
    m = generate_random_model(GenConfig(n_x=(3, 3)), rng)
    p = to_predictor_form(m)
    T0 = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    learned = apply_similarity(p, T0)
    y, _, _ = simulate(m, 20_000, rng)
    T, aligned = align_models(m, learned, y)
    np.testing.assert_allclose(T @ T0, np.eye(3), atol=1e-8)
    err = compare_parameters(true_targets(m), aligned)
    for name in ("A", "C_y", "C_z", "G_y", "K", "Sigma_y", "eigA"):
        assert err[name] < 1e-8
    assert err["K_f"] is None
    zb = kalman_predict(learned, y).z_pred
    za = kalman_predict(aligned, y).z_pred
    assert np.max(np.abs(zb - za)) < 1e-8


def test_alignment_identity(rng):
    m = generate_random_model(GenConfig(), rng)
    T, _ = align_models(m, to_predictor_form(m), simulate(m, 20_000, rng)[0])
    np.testing.assert_allclose(T, np.eye(m.n_x), atol=1e-8)


def test_alignment_degenerate(rng):
    m = scalar_model()
    p = to_predictor_form(m).replace(K=np.zeros((1, 1)))
    with pytest.raises(DegenerateAlignment):
        align_models(m, p, simulate(m, 1000, rng)[0])


def test_shifted_baseline_matches_filtering_without_S(rng):
    m = generate_random_model(GenConfig(n_x=(2, 3), n_y=(2, 4)), rng)
    y, z, _ = simulate(m, 300_000, rng)
    yt, zt, _ = simulate(m, 100_000, rng)
    base = shifted_psid_baseline(y, z, Dims(m.n_x, m.n_y, m.n_z))
    r_shift = r2_score(zt, shifted_decode(base, yt))
    _, r_filt, _ = ideal_decode(m, yt, zt)
    assert abs(r_shift - r_filt) < 0.01
