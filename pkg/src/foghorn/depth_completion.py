"""Depth denoising and completion by robust plane fitting on superpixels.

The disparity map is converted to depth, the clear image is segmented into
SLIC superpixels, and every superpixel with enough valid measurements gets a
RANSAC plane ``depth = a*x + b*y + c``. Outliers and holes are replaced by the
plane, superpixels without enough support borrow the plane of the nearest
completed superpixel, and the completed depth is mapped to transmittance.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .imaging import CameraModel, disparity_to_depth, planar_to_distance, transmittance_from_depth

# completed depths are kept strictly positive so that t stays in (0, 1]
MIN_DEPTH = 0.1
_TINY_T = np.finfo(np.float64).tiny


@dataclass(frozen=True)
class CompletionParams:
    k: int = 2048
    compactness: float = 10.0
    ransac_iters: int = 500
    inlier_tol: float = 0.5  # meters
    min_valid_fraction: float = 0.2

    def __post_init__(self):
        if self.k < 1 or self.ransac_iters < 1:
            raise ValueError("k and ransac_iters must be positive")
        if not (self.compactness > 0 and self.inlier_tol > 0):
            raise ValueError("compactness and inlier_tol must be positive")
        if not 0 < self.min_valid_fraction <= 1:
            raise ValueError("min_valid_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class Plane:
    a: float
    b: float
    c: float

    def __call__(self, x, y):
        return self.a * np.asarray(x, dtype=np.float64) + self.b * np.asarray(y, dtype=np.float64) + self.c

    @property
    def coefficients(self) -> tuple[float, float, float]:
        return (self.a, self.b, self.c)


class PlaneFitError(ValueError):
    pass


def _seed_centers(h: int, w: int, k: int) -> np.ndarray:
    """Exactly ``k`` seeds: rows of evenly spaced centers, rows spread evenly."""
    rows = min(h, max(1, int(round(np.sqrt(k * h / w)))))
    per_row = np.full(rows, k // rows)
    per_row[: k % rows] += 1
    seeds = []
    for r, n in enumerate(per_row):
        y = (r + 0.5) * h / rows
        for c in range(n):
            seeds.append(((c + 0.5) * w / n, y))
    return np.array(seeds)


@njit(cache=True)
def _slic_iterate(lab, centers, step, compactness, n_iter):
    h, w, _ = lab.shape
    k = centers.shape[0]
    labels = np.zeros((h, w), dtype=np.int32)
    dist = np.empty((h, w))
    m2 = (compactness / step) ** 2
    radius = int(np.ceil(step))
    for _ in range(n_iter):
        dist[:] = np.inf
        for i in range(k):
            cx, cy = centers[i, 3], centers[i, 4]
            x0 = max(0, int(cx) - radius)
            x1 = min(w, int(cx) + radius + 1)
            y0 = max(0, int(cy) - radius)
            y1 = min(h, int(cy) + radius + 1)
            for y in range(y0, y1):
                for x in range(x0, x1):
                    dl = lab[y, x, 0] - centers[i, 0]
                    da = lab[y, x, 1] - centers[i, 1]
                    db = lab[y, x, 2] - centers[i, 2]
                    dx = x - cx
                    dy = y - cy
                    d = dl * dl + da * da + db * db + m2 * (dx * dx + dy * dy)
                    if d < dist[y, x]:
                        dist[y, x] = d
                        labels[y, x] = i
        sums = np.zeros((k, 5))
        counts = np.zeros(k)
        for y in range(h):
            for x in range(w):
                i = labels[y, x]
                if dist[y, x] == np.inf:
                    continue
                sums[i, 0] += lab[y, x, 0]
                sums[i, 1] += lab[y, x, 1]
                sums[i, 2] += lab[y, x, 2]
                sums[i, 3] += x
                sums[i, 4] += y
                counts[i] += 1
        for i in range(k):
            if counts[i] > 0:
                for j in range(5):
                    centers[i, j] = sums[i, j] / counts[i]
    # pixels no window reached go to the nearest center in the joint space
    for y in range(h):
        for x in range(w):
            if dist[y, x] == np.inf:
                best = np.inf
                for i in range(k):
                    dl = lab[y, x, 0] - centers[i, 0]
                    da = lab[y, x, 1] - centers[i, 1]
                    db = lab[y, x, 2] - centers[i, 2]
                    dx = x - centers[i, 3]
                    dy = y - centers[i, 4]
                    d = dl * dl + da * da + db * db + m2 * (dx * dx + dy * dy)
                    if d < best:
                        best = d
                        labels[y, x] = i
    return labels


@njit(cache=True)
def _enforce_connectivity(labels, min_size):
    """Relabel 4-connected fragments; fragments below ``min_size`` join the
    segment adjacent to their first pixel in raster order."""
    h, w = labels.shape
    out = -np.ones((h, w), dtype=np.int32)
    queue_y = np.empty(h * w, dtype=np.int64)
    queue_x = np.empty(h * w, dtype=np.int64)
    dy = (0, 1, 0, -1)
    dx = (1, 0, -1, 0)
    next_id = 0
    for sy in range(h):
        for sx in range(w):
            if out[sy, sx] >= 0:
                continue
            adjacent = -1
            for n in range(4):
                ny, nx = sy + dy[n], sx + dx[n]
                if 0 <= ny < h and 0 <= nx < w and out[ny, nx] >= 0:
                    adjacent = out[ny, nx]
                    break
            out[sy, sx] = next_id
            queue_y[0] = sy
            queue_x[0] = sx
            head, tail = 0, 1
            while head < tail:
                y, x = queue_y[head], queue_x[head]
                head += 1
                for n in range(4):
                    ny, nx = y + dy[n], x + dx[n]
                    if 0 <= ny < h and 0 <= nx < w and out[ny, nx] < 0 and labels[ny, nx] == labels[sy, sx]:
                        out[ny, nx] = next_id
                        queue_y[tail] = ny
                        queue_x[tail] = nx
                        tail += 1
            if tail < min_size and adjacent >= 0:
                for j in range(tail):
                    out[queue_y[j], queue_x[j]] = adjacent
            else:
                next_id += 1
    return out


def slic_superpixels(lab, k: int, compactness: float = 10.0, n_iter: int = 10) -> np.ndarray:
    """Segment a CIELAB image into about ``k`` 4-connected superpixels.

    Plain SLIC: k-means in (L*, a*, b*, x, y) with the spatial distance scaled
    by ``compactness / S`` where ``S = sqrt(N / k)``, followed by a pass that
    folds small disconnected fragments into a neighbor. Ids run ``0 .. n-1``
    in raster order of first appearance.
    """
    lab = np.ascontiguousarray(lab, dtype=np.float64)
    h, w = lab.shape[:2]
    if not 1 <= k <= h * w:
        raise ValueError(f"superpixel count must be in [1, {h * w}], got {k}")
    if k == 1:
        return np.zeros((h, w), dtype=np.int32)
    step = np.sqrt(h * w / k)
    xy = _seed_centers(h, w, k)
    xi = np.clip(xy[:, 0].astype(int), 0, w - 1)
    yi = np.clip(xy[:, 1].astype(int), 0, h - 1)
    centers = np.column_stack([lab[yi, xi], xy])
    labels = _slic_iterate(lab, centers, step, float(compactness), n_iter)
    return _enforce_connectivity(labels, max(1, int(step * step / 4)))


def fit_plane_ransac(points, iters: int = 500, tol: float = 0.5, seed=0) -> Plane:
    """Fit ``depth = a*x + b*y + c`` to ``(x, y, depth)`` rows with RANSAC.

    The hypothesis with the most inliers (``|residual| <= tol``) wins, ties
    going to the earliest sample; it is then refit by least squares on its
    inliers until the inlier set stops changing.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    if n < 3:
        raise PlaneFitError(f"need at least 3 points to fit a plane, got {n}")
    design = np.column_stack([pts[:, 0], pts[:, 1], np.ones(n)])
    z = pts[:, 2]
    if np.linalg.matrix_rank(design) < 3:
        raise PlaneFitError("points are collinear")

    rng = np.random.default_rng(seed)
    samples = rng.integers(0, n, size=(iters, 3))
    systems = design[samples]
    det = np.linalg.det(systems)
    scale = np.abs(pts[:, :2]).max() + 1.0
    ok = np.abs(det) > 1e-9 * scale**2
    if not ok.any():
        raise PlaneFitError(f"all {iters} samples were degenerate")
    coeffs = np.linalg.solve(systems[ok], z[samples[ok]][..., None])[..., 0]

    best_count, best = -1, None
    chunk = max(1, 2_000_000 // n)
    for start in range(0, len(coeffs), chunk):
        block = coeffs[start : start + chunk]
        counts = (np.abs(design @ block.T - z[:, None]) <= tol).sum(axis=0)
        i = int(np.argmax(counts))
        if counts[i] > best_count:
            best_count, best = int(counts[i]), block[i]

    inliers = np.abs(design @ best - z) <= tol
    for _ in range(10):
        if inliers.sum() < 3 or np.linalg.matrix_rank(design[inliers]) < 3:
            break
        best = np.linalg.lstsq(design[inliers], z[inliers], rcond=None)[0]
        updated = np.abs(design @ best - z) <= tol
        if np.array_equal(updated, inliers):
            break
        inliers = updated
    return Plane(*(float(v) for v in best))


def _fit_superpixel(args):
    sp, xs, ys, zs, params, seed = args
    valid = np.isfinite(zs)
    if valid.sum() < 3 or valid.mean() < params.min_valid_fraction:
        return None
    pts = np.column_stack([xs[valid], ys[valid], zs[valid]])
    try:
        return fit_plane_ransac(pts, params.ransac_iters, params.inlier_tol, seed=(seed, sp))
    except PlaneFitError:
        return None


def complete_depth(
    disparity,
    lab,
    cam: CameraModel,
    params: CompletionParams = CompletionParams(),
    seed: int = 0,
    workers: int = 1,
    segments=None,
) -> np.ndarray:
    """Planar depth with holes filled and outliers replaced, no NaN left."""
    disparity = np.asarray(disparity, dtype=np.float64)
    lab = np.asarray(lab, dtype=np.float64)
    if disparity.shape != lab.shape[:2]:
        raise ValueError(f"disparity {disparity.shape} does not match image {lab.shape[:2]}")
    h, w = disparity.shape
    depth = disparity_to_depth(disparity, cam)
    if segments is None:
        segments = slic_superpixels(lab, min(params.k, h * w), params.compactness)
    n_sp = int(segments.max()) + 1

    flat = segments.ravel()
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(n_sp + 1))
    ys_all, xs_all = np.divmod(order, w)
    z_all = depth.ravel()[order]

    jobs = []
    for sp in range(n_sp):
        sl = slice(bounds[sp], bounds[sp + 1])
        jobs.append((sp, xs_all[sl].astype(np.float64), ys_all[sl].astype(np.float64), z_all[sl], params, seed))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            planes = list(pool.map(_fit_superpixel, jobs))
    else:
        planes = [_fit_superpixel(job) for job in jobs]

    fitted = [i for i, p in enumerate(planes) if p is not None]
    if not fitted:
        raise ValueError("no superpixel has enough valid disparity to fit a plane")
    centroids = np.array([[job[1].mean(), job[2].mean()] for job in jobs])
    fc = centroids[fitted]

    out = depth.ravel().copy()
    for sp, (_, xs, ys, zs, _, _) in enumerate(jobs):
        plane = planes[sp]
        if plane is None:
            d2 = ((fc - centroids[sp]) ** 2).sum(axis=1)
            plane = planes[fitted[int(np.argmin(d2))]]
            replace = np.ones(len(zs), dtype=bool)
        else:
            pred = plane(xs, ys)
            replace = ~np.isfinite(zs) | (np.abs(zs - pred) > params.inlier_tol)
        idx = order[bounds[sp] : bounds[sp + 1]][replace]
        out[idx] = plane(xs[replace], ys[replace])
    return np.maximum(out.reshape(h, w), MIN_DEPTH)


def complete_transmittance(
    disparity,
    lab,
    cam: CameraModel,
    beta: float,
    params: CompletionParams = CompletionParams(),
    seed: int = 0,
    workers: int = 1,
) -> np.ndarray:
    """Complete the disparity map and convert it to an initial transmittance map."""
    z = complete_depth(disparity, lab, cam, params, seed=seed, workers=workers)
    t = transmittance_from_depth(planar_to_distance(z, cam), beta)
    return np.clip(t, _TINY_T, 1.0)
