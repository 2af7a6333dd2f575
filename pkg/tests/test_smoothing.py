import numpy as np
import pytest

from conftest import scalar_model
from psidkit.errors import DimensionMismatch
from psidkit.kalman import ideal_decode, kalman_filter
from psidkit.lssm import Dims, FilteringModel, to_predictor_form
from psidkit.metrics import r2_score
from psidkit.simulation import GenConfig, generate_random_model, simulate
from psidkit.smoothing import SmoothingModel, psid_smoothing_alt, psid_with_smoothing, smooth_decode


def _fm(m, czkf):
    return FilteringModel(predictor=to_predictor_form(m), CzKf=np.array(czkf, dtype=float))


def test_null_backward_model_gives_filtered(rng):
    m = scalar_model()
    fwd = _fm(m, [[0.3]])
    bwd = FilteringModel(predictor=to_predictor_form(m).replace(K=np.zeros((1, 1))), CzKf=np.zeros((1, 1)))
    y = rng.standard_normal(100)
    np.testing.assert_allclose(smooth_decode(SmoothingModel(fwd, bwd), y), kalman_filter(fwd, y).z_filt)


def test_mean_combination(rng):
    m = scalar_model()
    fwd, bwd = _fm(m, [[0.3]]), _fm(m, [[0.1]])
    y = rng.standard_normal(50)
    got = smooth_decode(SmoothingModel(fwd, bwd, "mean"), y)
    want = (kalman_filter(fwd, y).z_filt + kalman_filter(bwd, y[::-1]).z_filt[::-1]) / 2
    np.testing.assert_allclose(got, want)


def test_combine_validated():
    m = scalar_model()
    with pytest.raises(ValueError):
        SmoothingModel(_fm(m, [[0.0]]), _fm(m, [[0.0]]), "max")


def test_mismatched_dims():
    a = _fm(scalar_model(), [[0.0]])
    m2 = generate_random_model(GenConfig(n_y=(2, 2), n_z=(1, 1)), np.random.default_rng(0))
    with pytest.raises(DimensionMismatch):
        SmoothingModel(a, FilteringModel(predictor=to_predictor_form(m2), CzKf=np.zeros((1, 2))))


def test_smoothing_improves_on_filtering(rng):
    m = generate_random_model(GenConfig(n_x=(2, 3), n_y=(2, 4)), rng)
    y, z, _ = simulate(m, 300_000, rng)
    yt, zt, _ = simulate(m, 100_000, rng)
    sm = psid_with_smoothing(y, z, Dims(m.n_x, m.n_y, m.n_z))
    r_filt = r2_score(zt, kalman_filter(sm.forward, yt).z_filt)
    r_smooth = r2_score(zt, smooth_decode(sm, yt))
    assert r_smooth >= r_filt - 1e-3
    _, _, ideal_smooth = ideal_decode(m, yt, zt)
    assert ideal_smooth - r_smooth < 0.03


def test_memoryless_model_has_nothing_to_smooth(rng):
    m = scalar_model(a=0.0, cz=1.0)
    y, z, _ = simulate(m, 200_000, rng)
    yt, zt, _ = simulate(m, 50_000, rng)
    sm = psid_with_smoothing(y, z, Dims(1, 1, 1))
    assert abs(sm.backward.K[0, 0] * sm.backward.Cy[0, 0]) < 0.02
    r_filt = r2_score(zt, kalman_filter(sm.forward, yt).z_filt)
    # The state is pure noise, so the forward fit itself is loose; the backward pass adds little.
    assert r2_score(zt, smooth_decode(sm, yt)) == pytest.approx(r_filt, abs=0.01)


def test_alt_variant_uses_mean(rng):
    m = generate_random_model(GenConfig(n_x=(1, 2)), rng)
    y, z, _ = simulate(m, 50_000, rng)
    sm = psid_smoothing_alt(y, z, Dims(m.n_x, m.n_y, m.n_z))
    assert sm.combine == "mean"
