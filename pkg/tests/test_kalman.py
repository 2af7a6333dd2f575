import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import scalar_model
from psidkit.errors import MissingGain, RequiresZeroS
from psidkit.kalman import (
    ideal_decode, ideal_filtering_model, kalman_filter, kalman_predict, rts_smooth, time_varying_filter,
    two_filter_smooth,
)
from psidkit.lssm import FilteringModel, solve_dare, to_predictor_form
from psidkit.simulation import GenConfig, generate_random_model, simulate


def test_zero_gain_predicts_zero():
    p = to_predictor_form(scalar_model()).replace(K=np.zeros((1, 1)))
    tr = kalman_predict(p, np.arange(5.0))
    assert np.all(tr.x_pred == 0) and np.all(tr.y_pred == 0)


def test_scalar_hand_recursion():
    p = to_predictor_form(scalar_model())
    tr = kalman_predict(p, np.array([1.0, 0.0]))
    assert tr.x_pred[0, 0] == 0.0
    assert tr.x_pred[1, 0] == pytest.approx(0.26556, abs=1e-5)
    assert tr.y_pred[1, 0] == pytest.approx(0.26556, abs=1e-5)


def test_innovation_covariance_matches(rng):
    m = generate_random_model(GenConfig(correlated_S=True), rng)
    y, _, _ = simulate(m, 100_000, rng)
    p = to_predictor_form(m)
    e = y - kalman_predict(p, y).y_pred
    S = np.cov(e.T).reshape(m.n_y, m.n_y)
    assert np.linalg.norm(S - p.Sigma_e) / np.linalg.norm(p.Sigma_e) < 0.05


def test_innovations_are_white(rng):
    m = generate_random_model(GenConfig(), rng)
    y, _, _ = simulate(m, 100_000, rng)
    e = y - kalman_predict(to_predictor_form(m), y).y_pred
    e = (e - e.mean(0)) / e.std(0)
    lag1 = np.mean(e[1:] * e[:-1], axis=0)
    assert np.all(np.abs(lag1) < 3 / np.sqrt(len(e)))


def test_filter_needs_gain():
    with pytest.raises(MissingGain):
        kalman_filter(FilteringModel(predictor=to_predictor_form(scalar_model())), np.zeros(3))


def test_zero_update_leaves_prediction():
    p = to_predictor_form(scalar_model())
    tr = kalman_filter(FilteringModel(predictor=p, CzKf=np.zeros((1, 1))), np.random.default_rng(1).standard_normal(50))
    np.testing.assert_array_equal(tr.z_filt, tr.z_pred)


def test_filtered_state_readout_matches_update():
    m = scalar_model(cz=1.0)
    fm = ideal_filtering_model(m)
    y = np.random.default_rng(2).standard_normal(100)
    tr = kalman_filter(fm, y)
    np.testing.assert_allclose(tr.z_filt, tr.x_filt @ m.Cz.T, atol=1e-12)


def test_filter_beats_prediction_on_scalar(rng):
    m = scalar_model()
    y, z, x = simulate(m, 50_000, rng)
    tr = kalman_filter(ideal_filtering_model(m), y)
    assert np.mean((x - tr.x_filt) ** 2) <= np.mean((x - tr.x_pred) ** 2)


def test_time_varying_converges_to_dare(rng):
    m = generate_random_model(GenConfig(correlated_S=True), rng)
    _, _, P_next = time_varying_filter(m, np.zeros((300, m.n_y)))
    P = solve_dare(m.A, m.Cy, m.Q, m.R, m.S).P_pred
    assert np.linalg.norm(P_next[-1] - P) / np.linalg.norm(P) < 1e-8


def test_smoother_ordering(rng):
    m = generate_random_model(GenConfig(n_x=(2, 2)), rng)
    y, _, x = simulate(m, 2000, rng)
    tr = rts_smooth(m, y)
    mse = [np.mean((x - e) ** 2) for e in (tr.x_smooth, tr.x_filt, tr.x_pred)]
    assert mse[0] <= mse[1] <= mse[2]


def test_deterministic_dynamics_smoothing():
    m = scalar_model(q=0.0)
    y = np.random.default_rng(3).standard_normal(20)
    tr = rts_smooth(m, y, P0=np.zeros((1, 1)))
    np.testing.assert_allclose(tr.x_smooth, tr.x_filt, atol=1e-12)
    np.testing.assert_allclose(tr.x_filt, tr.x_pred, atol=1e-12)


def test_two_filter_single_sample():
    m = scalar_model()
    tr = two_filter_smooth(m, np.array([0.7]))
    np.testing.assert_allclose(tr.x_smooth, tr.x_filt, atol=1e-12)


def test_two_filter_requires_zero_S():
    with pytest.raises(RequiresZeroS):
        two_filter_smooth(scalar_model(s=0.2), np.zeros(3))


@settings(max_examples=12, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_two_filter_equals_rts(seed):
    rng = np.random.default_rng(seed)
    m = generate_random_model(GenConfig(), rng)
    y, _, _ = simulate(m, 500, rng)
    a, b = rts_smooth(m, y), two_filter_smooth(m, y)
    assert np.max(np.abs(a.x_smooth - b.x_smooth)) < 1e-8


def test_irrelevant_secondary_decodes_to_zero(rng):
    m = scalar_model(cz=0.0)
    y, z, _ = simulate(m, 20_000, rng)
    r2 = ideal_decode(m, y, z)
    assert all(abs(v) < 0.01 for v in r2)


def test_ideal_ordering(rng):
    m = generate_random_model(GenConfig(correlated_S=True), rng)
    y, z, _ = simulate(m, 100_000, rng)
    rp, rf, rs = ideal_decode(m, y, z)
    assert rs >= rf - 0.005 and rf >= rp - 0.005
