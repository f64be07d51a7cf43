import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import planar_scene
from foghorn.depth_completion import (
    MIN_DEPTH,
    CompletionParams,
    PlaneFitError,
    complete_depth,
    complete_transmittance,
    fit_plane_ransac,
    slic_superpixels,
)
from foghorn.imaging import planar_to_distance, srgb_to_lab


def _plane_points(rng, n, coeffs):
    xy = rng.uniform(0, 50, (n, 2))
    z = coeffs[0] * xy[:, 0] + coeffs[1] * xy[:, 1] + coeffs[2]
    return np.column_stack([xy, z])


def test_exact_plane(rng):
    plane = fit_plane_ransac(_plane_points(rng, 40, (2, 3, 5)))
    assert np.allclose(plane.coefficients, (2, 3, 5), atol=1e-9)


def test_plane_survives_outliers(rng):
    pts = _plane_points(rng, 200, (0.1, -0.2, 20.0))
    bad = rng.choice(200, 60, replace=False)
    pts[bad, 2] += rng.uniform(3, 30, 60)
    plane = fit_plane_ransac(pts, tol=0.5, seed=7)
    assert np.allclose(plane.coefficients, (0.1, -0.2, 20.0), atol=1e-9)


def test_plane_needs_three_noncollinear_points():
    with pytest.raises(PlaneFitError):
        fit_plane_ransac(np.array([[0, 0, 1.0], [1, 0, 2.0]]))
    with pytest.raises(PlaneFitError):
        fit_plane_ransac(np.array([[0, 0, 1.0], [1, 1, 2.0], [2, 2, 3.0], [3, 3, 4.0]]))


@given(st.integers(0, 2**31), st.floats(-1, 1), st.floats(-1, 1), st.floats(1, 100))
@settings(max_examples=30, deadline=None)
def test_noise_free_plane_recovered(seed, a, b, c):
    rng = np.random.default_rng(seed)
    plane = fit_plane_ransac(_plane_points(rng, 30, (a, b, c)), iters=50, seed=seed)
    assert np.allclose(plane.coefficients, (a, b, c), atol=1e-7)


def test_ransac_is_seeded(rng):
    pts = _plane_points(rng, 100, (1, 1, 1))
    pts[::3, 2] += rng.normal(0, 5, len(pts[::3]))
    assert fit_plane_ransac(pts, seed=3) == fit_plane_ransac(pts, seed=3)


def test_slic_uniform_and_two_tone():
    flat = np.zeros((64, 64, 3))
    seg = slic_superpixels(flat, 4)
    assert seg.max() == 3
    assert sorted(np.bincount(seg.ravel())) == [961, 1023, 1023, 1089]
    img = np.zeros((40, 40, 3))
    img[:, 20:] = 60.0
    seg = slic_superpixels(img, 2)
    assert len(np.unique(seg[:, :20])) == 1 and len(np.unique(seg[:, 20:])) == 1
    assert seg[0, 0] != seg[0, 39]
    with pytest.raises(ValueError):
        slic_superpixels(flat, 0)
    assert not slic_superpixels(flat, 1).any()


def test_slic_segments_are_connected(rng):
    from scipy.ndimage import label

    lab = srgb_to_lab(rng.random((32, 48, 3)))
    seg = slic_superpixels(lab, 24)
    for sp in np.unique(seg):
        assert label(seg == sp)[1] == 1


def test_complete_depth_fills_hole_and_outliers(rng):
    img, depth, disp, cam = planar_scene()
    disp = disp.copy()
    disp[20:30, 40:50] = np.nan
    idx = rng.choice(disp.size, disp.size // 20, replace=False)
    disp.flat[idx] *= rng.uniform(1.5, 3.0, idx.size)
    z = complete_depth(disp, srgb_to_lab(img), cam, CompletionParams(k=24))
    assert np.abs(z - depth).max() < 1e-9


def test_unfittable_superpixels_borrow_nearest_plane():
    img, depth, disp, cam = planar_scene(plane=(0.0, 0.0, 10.0))
    disp = disp.copy()
    disp[:, 48:] = np.nan
    seg = np.zeros(disp.shape, dtype=np.int32)
    seg[:, 48:] = 1
    z = complete_depth(disp, srgb_to_lab(img), cam, segments=seg)
    assert np.allclose(z, 10.0)


def test_complete_depth_errors():
    img, depth, disp, cam = planar_scene()
    with pytest.raises(ValueError):
        complete_depth(disp[:10], srgb_to_lab(img), cam)
    with pytest.raises(ValueError):
        complete_depth(np.full(disp.shape, np.nan), srgb_to_lab(img), cam, CompletionParams(k=8))
    with pytest.raises(ValueError):
        CompletionParams(min_valid_fraction=0)


def test_transmittance_from_completed_depth():
    img, depth, disp, cam = planar_scene()
    t = complete_transmittance(disp, srgb_to_lab(img), cam, 0.02, CompletionParams(k=24))
    expected = np.exp(-0.02 * planar_to_distance(depth, cam))
    assert np.abs(t - expected).max() < 1e-12
    assert t.max() <= 1 and t.min() > 0


def test_depth_is_clamped_positive():
    img, depth, disp, cam = planar_scene(plane=(-0.5, 0.0, 20.3))
    z = complete_depth(disp * np.where(depth > 0, 1, np.nan), srgb_to_lab(img), cam, CompletionParams(k=6))
    assert z.min() >= MIN_DEPTH


def test_workers_do_not_change_result():
    img, depth, disp, cam = planar_scene()
    disp = disp * np.random.default_rng(0).uniform(0.97, 1.03, disp.shape)
    lab = srgb_to_lab(img)
    one = complete_depth(disp, lab, cam, CompletionParams(k=24), workers=1)
    two = complete_depth(disp, lab, cam, CompletionParams(k=24), workers=3)
    assert np.array_equal(one, two)
