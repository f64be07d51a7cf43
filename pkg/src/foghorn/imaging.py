"""Color conversions and the depth / disparity / transmittance maps.

Rasters are plain numpy arrays laid out row-major as ``(height, width[, 3])``.
Missing disparity or depth is stored as NaN (``MISSING``), so a valid
zero disparity and an absent measurement can never be confused.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MISSING = np.nan

# sRGB primaries, D65 white.
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)
# White point taken from the matrix itself so that RGB (1, 1, 1) lands on a* = b* = 0.
_WHITE = _RGB_TO_XYZ.sum(axis=1)

_EPS = (6.0 / 29.0) ** 3
_KAPPA = 3.0 * (6.0 / 29.0) ** 2


@dataclass(frozen=True)
class CameraModel:
    """Rectified stereo rig; the principal point is the image center."""

    baseline: float  # meters
    focal_length: float  # pixels

    def __post_init__(self):
        if not (self.baseline > 0 and self.focal_length > 0):
            raise ValueError(
                f"camera baseline and focal length must be positive, got "
                f"baseline={self.baseline}, focal_length={self.focal_length}"
            )


# Cityscapes calibration, averaged over the cities.
CITYSCAPES_CAMERA = CameraModel(baseline=0.209313, focal_length=2262.52)


def as_rgb(img) -> np.ndarray:
    """Validate an RGB image and return it as float64 ``(H, W, 3)``."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) RGB image, got shape {img.shape}")
    if img.size and (img.min() < 0.0 or img.max() > 1.0 or not np.isfinite(img).all()):
        raise ValueError("RGB values must lie in [0, 1]")
    return img


def srgb_to_linear(c):
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(c):
    c = np.asarray(c, dtype=np.float64)
    return np.where(
        c <= 0.0031308, 12.92 * c, 1.055 * np.power(np.maximum(c, 0.0031308), 1 / 2.4) - 0.055
    )


def _f(t):
    return np.where(t > _EPS, np.cbrt(t), t / _KAPPA + 4.0 / 29.0)


def _f_inv(t):
    return np.where(t > 6.0 / 29.0, t**3, _KAPPA * (t - 4.0 / 29.0))


def srgb_to_lab(img) -> np.ndarray:
    """Convert sRGB in [0, 1] to CIELAB (D65). Returns ``(H, W, 3)`` L*, a*, b*."""
    img = as_rgb(img)
    xyz = srgb_to_linear(img) @ _RGB_TO_XYZ.T
    fx, fy, fz = (_f(xyz[..., i] / _WHITE[i]) for i in range(3))
    lab = np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)
    # cube roots of 1.0 can come back a hair off; keep L* inside its domain
    lab[..., 0] = np.clip(lab[..., 0], 0.0, 100.0)
    return lab


def lab_to_srgb(lab) -> np.ndarray:
    """Inverse of :func:`srgb_to_lab`. Out-of-gamut colors are clipped to [0, 1]."""
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = np.stack([_f_inv(f) * w for f, w in zip((fx, fy, fz), _WHITE)], axis=-1)
    rgb = linear_to_srgb(np.clip(xyz @ _XYZ_TO_RGB.T, 0.0, 1.0))
    return np.clip(rgb, 0.0, 1.0)


def luminance(img) -> np.ndarray:
    """Rec. 709 luma of gamma-encoded RGB."""
    img = np.asarray(img, dtype=np.float64)
    return img @ np.array([0.2126, 0.7152, 0.0722])


def disparity_to_depth(disparity, cam: CameraModel) -> np.ndarray:
    """Planar depth ``baseline * focal / d``; zero or missing disparity gives MISSING."""
    d = np.asarray(disparity, dtype=np.float64)
    if np.any(d[np.isfinite(d)] < 0):
        raise ValueError("disparity must be non-negative")
    valid = np.isfinite(d) & (d > 0)
    out = np.full(d.shape, MISSING)
    out[valid] = cam.baseline * cam.focal_length / d[valid]
    return out


def depth_to_disparity(depth, cam: CameraModel) -> np.ndarray:
    """Inverse of :func:`disparity_to_depth`; MISSING maps to MISSING."""
    z = np.asarray(depth, dtype=np.float64)
    out = np.full(z.shape, MISSING)
    valid = np.isfinite(z) & (z > 0)
    out[valid] = cam.baseline * cam.focal_length / z[valid]
    return out


def _ray_scale(shape, cam: CameraModel) -> np.ndarray:
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    return np.sqrt(1.0 + ((xs - cx) ** 2 + (ys - cy) ** 2) / cam.focal_length**2)


def planar_to_distance(depth, cam: CameraModel) -> np.ndarray:
    """Euclidean camera distance from planar (z) depth under a centered pinhole."""
    z = np.asarray(depth, dtype=np.float64)
    return z * _ray_scale(z.shape, cam)


def distance_to_planar(distance, cam: CameraModel) -> np.ndarray:
    d = np.asarray(distance, dtype=np.float64)
    return d / _ray_scale(d.shape, cam)


def transmittance_from_depth(distance, beta: float) -> np.ndarray:
    """Homogeneous-fog transmittance ``exp(-beta * distance)``; MISSING stays MISSING."""
    if beta < 0:
        raise ValueError(f"attenuation coefficient must be non-negative, got {beta}")
    distance = np.asarray(distance, dtype=np.float64)
    return np.exp(-beta * distance)


def instance_aware_labels(classes, instances=None) -> np.ndarray:
    """Give every (class, instance) pair its own label id.

    Ids are consecutive from 1 in order of first appearance along the
    raster scan, so the result is deterministic for a given input.
    """
    classes = np.asarray(classes)
    if instances is None:
        key = classes.astype(np.int64)
    else:
        instances = np.asarray(instances)
        if instances.shape != classes.shape:
            raise ValueError("class and instance maps differ in shape")
        key = classes.astype(np.int64) * (int(instances.max(initial=0)) + 1) + instances.astype(np.int64)
    _, first, inverse = np.unique(key.ravel(), return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return (order[inverse] + 1).reshape(classes.shape).astype(np.int32)
