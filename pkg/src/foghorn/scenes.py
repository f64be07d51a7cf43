"""Procedural street scenes with exact depth, for tests and demos.

A scene is a ground plane under a horizon, a row of box-shaped buildings and
cars standing on it, and sky behind everything. Each pixel gets a class id
from :data:`foghorn.evaluation.CITYSCAPES_CLASSES`, a planar depth, and a
noisy, partly missing disparity measurement; like a real stereo
matcher it returns nothing for the textureless sky.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .imaging import MISSING, CameraModel, depth_to_disparity

ROAD, SIDEWALK, BUILDING, VEGETATION, SKY, CAR = 1, 2, 3, 9, 11, 14
SKY_DEPTH = 1500.0
CAMERA_HEIGHT = 1.5

_BASE_COLORS = {
    ROAD: (0.30, 0.30, 0.32),
    SIDEWALK: (0.55, 0.50, 0.48),
    BUILDING: (0.55, 0.42, 0.35),
    VEGETATION: (0.20, 0.40, 0.15),
    SKY: (0.62, 0.72, 0.88),
    CAR: (0.60, 0.10, 0.10),
}


@dataclass
class Scene:
    clear: np.ndarray  # (H, W, 3) sRGB
    depth: np.ndarray  # planar depth, meters, no gaps
    disparity: np.ndarray  # measured, NaN where missing
    labels: np.ndarray  # class ids
    instances: np.ndarray  # 0 for stuff, 1.. per object
    camera: CameraModel


def make_scene(seed: int, shape=(96, 192), missing_fraction: float = 0.03, noise_px: float = 0.005) -> Scene:
    rng = np.random.default_rng(seed)
    h, w = shape
    cam = CameraModel(baseline=0.2, focal_length=float(w))
    horizon = h * rng.uniform(0.38, 0.5)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)

    depth = np.full(shape, SKY_DEPTH)
    labels = np.full(shape, SKY, dtype=np.int32)
    instances = np.zeros(shape, dtype=np.int32)

    below = ys > horizon + 0.5
    ground = np.minimum(cam.focal_length * CAMERA_HEIGHT / np.maximum(ys - horizon, 0.5), SKY_DEPTH)
    depth[below] = ground[below]
    curb = w * rng.uniform(0.1, 0.25)
    labels[below] = np.where(np.abs(xs[below] - w / 2) < (w / 2 - curb) * (ys[below] - horizon) / (h - horizon), ROAD, SIDEWALK)

    # far to near so that nearer boxes overwrite farther ones
    boxes = []
    for _ in range(rng.integers(3, 7)):
        boxes.append((rng.uniform(15, 200), BUILDING, rng.uniform(8, 30), rng.uniform(6, 25)))
    for _ in range(rng.integers(0, 3)):
        boxes.append((rng.uniform(6, 40), CAR, 1.5, 4.2))
    for _ in range(rng.integers(0, 3)):
        boxes.append((rng.uniform(10, 80), VEGETATION, rng.uniform(3, 8), rng.uniform(2, 6)))
    boxes.sort(key=lambda b: -b[0])
    for n, (z, cls, height_m, width_m) in enumerate(boxes, start=1):
        foot = horizon + cam.focal_length * CAMERA_HEIGHT / z
        top = foot - cam.focal_length * height_m / z
        half = cam.focal_length * width_m / z / 2
        cx = rng.uniform(0, w)
        if cls == BUILDING:
            cx = rng.choice([rng.uniform(0, w * 0.3), rng.uniform(w * 0.7, w)])
        # slight yaw so the face is a tilted plane rather than fronto-parallel
        tilt = rng.uniform(-0.05, 0.05) * z / cam.focal_length
        mask = (ys >= top) & (ys < foot) & (np.abs(xs - cx) < half)
        face = z + tilt * (xs - cx)
        mask &= face < depth
        depth[mask] = face[mask]
        labels[mask] = cls
        instances[mask] = n

    clear = np.zeros(shape + (3,))
    for cls, color in _BASE_COLORS.items():
        m = labels == cls
        jitter = rng.uniform(-0.04, 0.04, 3)
        clear[m] = np.clip(np.asarray(color) + jitter, 0, 1)
    texture = gaussian_filter(rng.normal(0, 0.06, shape), 1.0)[..., None]
    shade = 0.08 * np.sin(xs / rng.uniform(4, 12))[..., None] * (labels == BUILDING)[..., None]
    clear = np.clip(clear + texture * (labels != SKY)[..., None] + shade, 0.0, 1.0)

    disparity = depth_to_disparity(depth, cam)
    disparity = disparity + rng.normal(0, noise_px, shape)
    disparity[(disparity <= 0) | (labels == SKY)] = MISSING
    disparity[rng.random(shape) < missing_fraction] = MISSING
    return Scene(clear, depth, disparity, labels, instances, cam)


def write_clear_dataset(root, seeds, shape=(96, 192)) -> Path:
    """Write scenes as a clear dataset: images/, disparity/, labels/, instances/.

    All scenes share the camera of the given ``shape``; image ids are ``scene_<seed>``.
    """
    from . import io

    root = Path(root)
    for seed in seeds:
        s = make_scene(seed, shape)
        name = f"scene_{seed:04d}.png"
        io.write_rgb(root / "images" / name, s.clear)
        io.write_disparity(root / "disparity" / name, s.disparity)
        io.write_labels(root / "labels" / name, s.labels)
        io.write_labels(root / "instances" / name, s.instances)
    return root
