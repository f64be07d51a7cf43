import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import planar_scene
from foghorn.depth_completion import CompletionParams
from foghorn.fog_synthesis import (
    MIN_FOG_BETA,
    FogConfig,
    FogDensityError,
    beta_from_mor,
    dark_channel,
    estimate_atmospheric_light,
    mor_from_beta,
    simulate_scene,
    synthesize_fog,
    validate_beta,
)
from foghorn.imaging import planar_to_distance, srgb_to_linear
from foghorn.scenes import make_scene


def test_mor_values():
    assert mor_from_beta(0.02) == pytest.approx(149.8, abs=1e-9)
    assert mor_from_beta(2.996e-3) == pytest.approx(1000.0)
    assert mor_from_beta(0.005) == pytest.approx(599.2)
    with pytest.raises(ValueError):
        mor_from_beta(0.0)
    with pytest.raises(ValueError):
        beta_from_mor(-5)


@given(st.floats(1e-6, 10.0))
def test_mor_roundtrip(beta):
    assert beta_from_mor(mor_from_beta(beta)) == pytest.approx(beta, rel=1e-12)


@given(st.floats(1e-9, MIN_FOG_BETA, exclude_max=True))
def test_haze_rejected_unless_allowed(beta):
    with pytest.raises(FogDensityError, match="1 km"):
        validate_beta(beta)
    assert validate_beta(beta, allow_haze=True) == beta


def test_validate_beta_bounds():
    assert validate_beta(0) == 0.0
    assert validate_beta(MIN_FOG_BETA) == MIN_FOG_BETA
    for bad in (-0.01, float("nan"), float("inf")):
        with pytest.raises(FogDensityError):
            validate_beta(bad)
    with pytest.raises(ValueError):
        FogConfig(0.01, atmospheric_light=(1.2, 0.5, 0.5))


def test_dark_channel_window():
    img = np.ones((20, 20, 3))
    img[10, 10, 1] = 0.1
    dc = dark_channel(img)
    assert dc[10, 10] == 0.1 and dc[3, 3] == 0.1 and dc[2, 10] == 1.0


def test_atmospheric_light():
    gray = np.full((16, 16, 3), 0.37)
    assert np.array_equal(estimate_atmospheric_light(gray), [0.37, 0.37, 0.37])
    assert np.array_equal(estimate_atmospheric_light(gray, override=(0.9, 0.8, 0.7)), [0.9, 0.8, 0.7])
    with pytest.raises(ValueError):
        estimate_atmospheric_light(np.zeros((0, 4, 3)))


def test_atmospheric_light_round_trip():
    s = make_scene(5)
    t = np.exp(-0.03 * planar_to_distance(s.depth, s.camera))
    foggy = synthesize_fog(s.clear, t, (0.8, 0.8, 0.8))
    assert np.abs(estimate_atmospheric_light(foggy) - 0.8).max() < 0.05


def test_synthesize_fog_limits(rng):
    clear = rng.random((6, 5, 3))
    light = np.array([0.7, 0.75, 0.8])
    assert np.array_equal(synthesize_fog(clear, np.ones((6, 5)), light), clear)
    assert np.allclose(synthesize_fog(clear, np.zeros((6, 5)), light), light, atol=1e-12)
    same = np.broadcast_to(light, clear.shape)
    assert np.array_equal(synthesize_fog(same, rng.random((6, 5)), light), same)
    with pytest.raises(ValueError):
        synthesize_fog(clear, np.ones((5, 5)), light)


@given(arrays(np.float64, (4, 4, 3), elements=st.floats(0, 1)), arrays(np.float64, (4, 4), elements=st.floats(0, 1)),
       arrays(np.float64, 3, elements=st.floats(0, 1)))
def test_composite_is_convex_in_linear_rgb(clear, t, light):
    out = srgb_to_linear(synthesize_fog(clear, t, light))
    lo = np.minimum(srgb_to_linear(clear), srgb_to_linear(light))
    hi = np.maximum(srgb_to_linear(clear), srgb_to_linear(light))
    # the sRGB curve pieces meet with a ~1e-9 jump at the knee
    assert np.all(out >= lo - 1e-8) and np.all(out <= hi + 1e-8)


def test_contrast_decreases_with_beta():
    s = make_scene(2)
    dist = planar_to_distance(s.depth, s.camera)
    stds = [synthesize_fog(s.clear, np.exp(-b * dist), (0.8, 0.8, 0.82)).std(axis=(0, 1)) for b in (0.005, 0.01, 0.02)]
    assert np.all(np.diff(stds, axis=0) <= 0)


def test_simulate_clear_is_identity():
    s = make_scene(0, (32, 64))
    out, t = simulate_scene(s.clear, s.disparity, s.labels, s.camera, FogConfig(0.0), return_transmittance=True)
    assert np.array_equal(out, s.clear) and np.all(t == 1)


def test_lightest_fog_bounded_by_transmittance():
    s = make_scene(3, (48, 96))
    comp = CompletionParams(k=64)
    light, t_light = simulate_scene(s.clear, s.disparity, s.labels, s.camera, FogConfig(MIN_FOG_BETA), comp,
                                    return_transmittance=True)
    dense = simulate_scene(s.clear, s.disparity, s.labels, s.camera, FogConfig(0.02), comp)
    dev = np.abs(srgb_to_linear(light) - srgb_to_linear(s.clear))
    assert np.all(dev <= (1 - t_light)[..., None] + 1e-9)
    assert dev.mean() < np.abs(srgb_to_linear(dense) - srgb_to_linear(s.clear)).mean()


def test_simulate_planar_matches_closed_form():
    img, depth, disp, cam = planar_scene()
    light = (0.85, 0.86, 0.9)
    out = simulate_scene(img, disp, np.ones(depth.shape, int), cam, FogConfig(0.01, light), CompletionParams(k=24))
    t = np.exp(-0.01 * planar_to_distance(depth, cam))
    assert np.abs(out - synthesize_fog(img, t, light)).max() < 1e-3


def test_simulate_is_deterministic_and_checks_shapes():
    s = make_scene(4, (32, 64))
    cfg = FogConfig(0.01)
    comp = CompletionParams(k=32)
    a = simulate_scene(s.clear, s.disparity, s.labels, s.camera, cfg, comp, seed=9)
    b = simulate_scene(s.clear, s.disparity, s.labels, s.camera, cfg, comp, seed=9, workers=2)
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        simulate_scene(s.clear, s.disparity[:5], s.labels, s.camera, cfg)
