import numpy as np
import pytest

from conftest import scalar_model
from psidkit.errors import DimensionMismatch, TooFewSamples
from psidkit.evaluation import align_models
from psidkit.kalman import kalman_predict
from psidkit.lssm import Dims, StochasticModel
from psidkit.metrics import r2_score
from psidkit.simulation import simulate
from psidkit.subspace import build_hankel, psid_identify, stacked_gram


def test_hankel_enumeration():
    H = build_hankel(np.array([1.0, 2.0, 3.0, 4.0]), 2)
    np.testing.assert_array_equal(H.data, [[1, 2, 3], [2, 3, 4]])
    assert H.M == 3
    # used as a past/future pair with horizon 2, only one column survives
    past, fut = build_hankel([1.0, 2, 3, 4], 2, 0, 1), build_hankel([1.0, 2, 3, 4], 2, 2, 1)
    np.testing.assert_array_equal(past.data[:, 0], [1, 2])
    np.testing.assert_array_equal(fut.data[:, 0], [3, 4])


def test_hankel_too_short():
    with pytest.raises(TooFewSamples):
        build_hankel(np.ones(2), 3)


def test_stacked_gram_matches_direct(rng):
    y, z = rng.standard_normal((60, 2)), rng.standard_normal((60, 1))
    i = 3
    G, M = stacked_gram(y, z, i)
    W = np.vstack([build_hankel(y, 2 * i, 0, M).data, build_hankel(z, i, i, M).data])
    np.testing.assert_allclose(G, W @ W.T / M, atol=1e-12)


def test_scalar_model_recovers_pole(rng):
    m = scalar_model(a=0.8)
    y, z, _ = simulate(m, 1_000_000, rng)
    p = psid_identify(y, z, Dims(1, 1, 1, n_1=1))
    assert abs(p.A[0, 0] - 0.8) / 0.8 < 0.01
    assert np.max(np.abs(np.linalg.eigvals(p.A - p.K @ p.Cy))) < 1


def test_white_output_has_no_gain(rng):
    m = scalar_model(a=0.3, q=0.0)
    y, _, _ = simulate(m, 200_000, rng)
    z = rng.standard_normal((len(y), 1))
    p = psid_identify(y, z, Dims(1, 1, 1, n_1=0))
    assert abs(p.K[0, 0] * p.Cy[0, 0]) < 0.02
    assert abs(r2_score(z, kalman_predict(p, y).z_pred)) < 0.01


def test_prioritised_states_decode_better(rng):
    # two decoupled states: the dominant one is invisible in z
    m = StochasticModel(
        A=np.diag([0.95, 0.7]), Cy=[[3.0, 0.0], [0.0, 1.0], [1.0, 1.0]], Cz=[[0.0, 1.0]], Q=np.eye(2),
        R=np.eye(3), S=np.zeros((2, 3)), Rz=[[0.2]], Sxz=np.zeros((2, 1)),
    )
    y, z, _ = simulate(m, 200_000, rng)
    yt, zt, _ = simulate(m, 50_000, rng)
    psid = psid_identify(y, z, Dims(1, 3, 1, n_1=1))
    sid = psid_identify(y, z, Dims(1, 3, 1, n_1=0))
    r_psid = r2_score(zt, kalman_predict(psid, yt).z_pred)
    r_sid = r2_score(zt, kalman_predict(sid, yt).z_pred)
    assert r_psid > r_sid + 0.2


def test_identified_model_aligns(rng):
    m = scalar_model(a=-0.7, cz=1.0)
    y, z, _ = simulate(m, 200_000, rng)
    p = psid_identify(y, z, Dims(1, 1, 1))
    _, aligned = align_models(m, p, simulate(m, 50_000, rng)[0])
    assert aligned.Cy[0, 0] == pytest.approx(1.0, rel=0.05)


def test_dimension_checks(rng):
    with pytest.raises(DimensionMismatch):
        psid_identify(rng.standard_normal((100, 2)), rng.standard_normal((90, 1)), Dims(1, 2, 1))
    with pytest.raises(TooFewSamples):
        psid_identify(rng.standard_normal((30, 2)), rng.standard_normal((30, 1)), Dims(1, 2, 1))
