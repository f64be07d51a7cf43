"""Dual-reference cross-bilateral filtering of a transmittance map.

Each output pixel is a normalized sum over its square neighborhood, where a
neighbor ``q`` of ``p`` is weighted by

    G_s(|q - p|) * ( [h(q) == h(p)] + mu * G_c(|J(q) - J(p)|) )

with ``h`` a label map and ``J`` the CIELAB reference image. The semantic
term only mixes pixels that share a label; the color term recovers depth
edges the labels miss.

``filter_exact`` evaluates the sum directly and serves as the oracle.
``filter_grid`` splits the weight into its two terms and evaluates each on
its own bilateral grid: a stack of 2D spatial grids, one per label, and a 5D
(y, x, L*, a*, b*) grid for the color term. The 5D grid is processed in
spatial tiles with a halo wide enough that tiling never changes the result.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product

import numpy as np
from numba import njit, prange
from scipy.ndimage import correlate1d


@dataclass(frozen=True)
class FilterParams:
    mu: float = 5.0
    sigma_s: float = 20.0  # pixels
    sigma_c: float = 10.0  # CIELAB units
    window_radius: int | None = None  # defaults to ceil(3 * sigma_s)

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError(f"mu must be non-negative, got {self.mu}")
        if not (self.sigma_s > 0 and self.sigma_c > 0):
            raise ValueError("sigma_s and sigma_c must be positive")
        if self.window_radius is not None and self.window_radius < 1:
            raise ValueError("window_radius must be at least 1")

    @property
    def radius(self) -> int:
        if self.window_radius is not None:
            return int(self.window_radius)
        return int(math.ceil(3.0 * self.sigma_s))


class GridMemoryError(MemoryError):
    pass


DEFAULT_MAX_GRID_BYTES = 1 << 30


def _check_inputs(t_hat, lab, labels):
    t_hat = np.ascontiguousarray(t_hat, dtype=np.float64)
    lab = np.ascontiguousarray(lab, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if t_hat.ndim != 2:
        raise ValueError(f"transmittance must be 2D, got shape {t_hat.shape}")
    if lab.shape != t_hat.shape + (3,) or labels.shape != t_hat.shape:
        raise ValueError(
            f"dimension mismatch: transmittance {t_hat.shape}, "
            f"reference image {lab.shape}, labels {labels.shape}"
        )
    return t_hat, lab, labels


@njit(parallel=True, cache=True)
def _exact_kernel(t_hat, lab, labels, mu, sigma_s, sigma_c, radius, use_labels):
    h, w = t_hat.shape
    out = np.empty((h, w))
    inv_s = 1.0 / (2.0 * sigma_s * sigma_s)
    inv_c = 1.0 / (2.0 * sigma_c * sigma_c)
    for y in prange(h):
        for x in range(w):
            num = 0.0
            den = 0.0
            for qy in range(max(0, y - radius), min(h, y + radius + 1)):
                dy = qy - y
                for qx in range(max(0, x - radius), min(w, x + radius + 1)):
                    dx = qx - x
                    gs = math.exp(-(dx * dx + dy * dy) * inv_s)
                    dl = lab[qy, qx, 0] - lab[y, x, 0]
                    da = lab[qy, qx, 1] - lab[y, x, 1]
                    db = lab[qy, qx, 2] - lab[y, x, 2]
                    wgt = mu * math.exp(-(dl * dl + da * da + db * db) * inv_c)
                    if use_labels and labels[qy, qx] == labels[y, x]:
                        wgt += 1.0
                    num += gs * wgt * t_hat[qy, qx]
                    den += gs * wgt
            out[y, x] = num / den
    return out


def filter_exact(t_hat, lab, labels, params: FilterParams = FilterParams()) -> np.ndarray:
    """Brute-force evaluation over the ``(2r+1)^2`` window. O(N r^2)."""
    t_hat, lab, labels = _check_inputs(t_hat, lab, labels)
    return _exact_kernel(
        t_hat, lab, labels, float(params.mu), float(params.sigma_s), float(params.sigma_c), params.radius, True
    )


def filter_color_exact(t_hat, lab, params: FilterParams = FilterParams()) -> np.ndarray:
    """Plain cross-bilateral filter with the color reference only."""
    t_hat, lab, labels = _check_inputs(t_hat, lab, np.zeros(np.shape(t_hat), dtype=np.int64))
    return _exact_kernel(
        t_hat, lab, labels, 1.0, float(params.sigma_s), float(params.sigma_c), params.radius, False
    )


# --- grid implementation -------------------------------------------------------


def _blur_kernel(sigma_cells: float, radius_cells: int) -> np.ndarray:
    # linear splat followed by linear slice adds two tents of variance 1/6 each
    s2 = max(sigma_cells**2 - 1.0 / 3.0, 1e-6)
    offs = np.arange(-radius_cells, radius_cells + 1, dtype=np.float64)
    return np.exp(-(offs**2) / (2.0 * s2))


def _strides(shape):
    return np.array([int(np.prod(shape[i + 1 :])) for i in range(len(shape))], dtype=np.int64)


def _splat(base, frac, values, shape):
    """Multilinear splat of ``values`` (n, m) at integer cells ``base`` plus ``frac``."""
    ncell = int(np.prod(shape))
    strides = _strides(shape)
    grids = np.zeros((values.shape[1], ncell))
    for corner in product((0, 1), repeat=base.shape[1]):
        c = np.array(corner)
        idx = (base + c) @ strides
        wgt = np.prod(np.where(c, frac, 1.0 - frac), axis=1)
        for j in range(values.shape[1]):
            grids[j] += np.bincount(idx, weights=wgt * values[:, j], minlength=ncell)
    return grids.reshape((values.shape[1],) + tuple(shape))


def _slice(grids, base, frac):
    """Multilinear interpolation of each grid in ``grids`` at ``base + frac``."""
    flat = grids.reshape(grids.shape[0], -1)
    strides = _strides(grids.shape[1:])
    out = np.zeros((grids.shape[0], len(base)))
    for corner in product((0, 1), repeat=base.shape[1]):
        c = np.array(corner)
        idx = (base + c) @ strides
        wgt = np.prod(np.where(c, frac, 1.0 - frac), axis=1)
        out += flat[:, idx] * wgt
    return out


def _cells(coords):
    base = np.floor(coords)
    return base.astype(np.int64), coords - base


def _blur(grids, kernels):
    for axis, k in enumerate(kernels, start=1):
        grids = correlate1d(grids, k, axis=axis, mode="constant", cval=0.0)
    return grids


def semantic_term(t_hat, labels, params: FilterParams = FilterParams()):
    """Per-label spatial smoothing of ``(t_hat, 1)``; returns numerator, denominator."""
    h, w = t_hat.shape
    cell = params.sigma_s / 2.0
    radius_cells = int(math.ceil(params.radius / cell))
    kern = _blur_kernel(params.sigma_s / cell, radius_cells)
    shape = (int(math.floor((h - 1) / cell)) + 2, int(math.floor((w - 1) / cell)) + 2)

    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    _, starts = np.unique(flat[order], return_index=True)
    bounds = list(starts) + [len(flat)]
    ys, xs = np.divmod(order, w)
    base, frac = _cells(np.column_stack([ys / cell, xs / cell]))
    values = np.column_stack([t_hat.ravel()[order], np.ones(len(order))])

    num = np.empty(h * w)
    den = np.empty(h * w)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        grids = _blur(_splat(base[lo:hi], frac[lo:hi], values[lo:hi], shape), (kern, kern))
        n, d = _slice(grids, base[lo:hi], frac[lo:hi])
        num[order[lo:hi]] = n
        den[order[lo:hi]] = d
    return num.reshape(h, w), den.reshape(h, w)


class _ColorGrid:
    """Cell geometry of the 5D color grid shared by every tile."""

    def __init__(self, lab, params: FilterParams, tile: int):
        h, w = lab.shape[:2]
        self.shape2d = (h, w)
        cell_s = params.sigma_s / 2.0
        cell_c = params.sigma_c / 2.0
        rs = int(math.ceil(params.radius / cell_s))
        rc = int(math.ceil(3.0 * params.sigma_c / cell_c))
        ks = _blur_kernel(params.sigma_s / cell_s, rs)
        kc = _blur_kernel(params.sigma_c / cell_c, rc)
        self.kernels = (ks, ks, kc, kc, kc)
        colors = lab.reshape(-1, 3)
        self.color_base, self.color_frac = _cells((colors - colors.min(axis=0)) / cell_c)
        self.row_base, self.row_frac = _cells(np.arange(h) / cell_s)
        self.col_base, self.col_frac = _cells(np.arange(w) / cell_s)
        # a sliced cell reads splats up to rs cells away, which come from pixels one cell further
        self.halo = rs + 2
        step = max(1, int(tile // cell_s))
        ny, nx = int(self.row_base[-1]) + 1, int(self.col_base[-1]) + 1
        self.tiles = [
            (cy, min(ny, cy + step), cx, min(nx, cx + step))
            for cy in range(0, ny, step)
            for cx in range(0, nx, step)
        ]

    def rows(self, c0, c1):
        return int(np.searchsorted(self.row_base, c0)), int(np.searchsorted(self.row_base, c1))

    def cols(self, c0, c1):
        return int(np.searchsorted(self.col_base, c0)), int(np.searchsorted(self.col_base, c1))

    def tile_bytes(self, c):
        cy0, cy1, cx0, cx1 = c
        h = self.halo
        sy0, sy1 = self.rows(cy0 - h, cy1 + h)
        sx0, sx1 = self.cols(cx0 - h, cx1 + h)
        w = self.shape2d[1]
        idx = (np.arange(sy0, sy1)[:, None] * w + np.arange(sx0, sx1)[None, :]).ravel()
        cb = self.color_base[idx]
        color_cells = np.prod(cb.max(axis=0) - cb.min(axis=0) + 2)
        spatial = (self.row_base[sy1 - 1] - self.row_base[sy0] + 2) * (self.col_base[sx1 - 1] - self.col_base[sx0] + 2)
        # splat, blur and correlate1d's output each hold a (2, ...) float64 grid
        return int(spatial * color_cells * 2 * 8 * 3)


def estimate_grid_bytes(lab, params: FilterParams = FilterParams(), tile: int = 256) -> int:
    """Peak bytes of the largest color-grid tile."""
    grid = _ColorGrid(np.asarray(lab, dtype=np.float64), params, tile)
    return max(grid.tile_bytes(c) for c in grid.tiles)


def color_term(t_hat, lab, params: FilterParams = FilterParams(), tile: int = 256, workers: int = 1,
               max_grid_bytes: int = DEFAULT_MAX_GRID_BYTES):
    """Numerator and denominator of the color term on a tiled 5D grid.

    Tiles are aligned to grid cells and splat a halo around themselves, so the
    result does not depend on ``tile`` or ``workers``.
    """
    h, w = t_hat.shape
    grid = _ColorGrid(lab, params, tile)
    need = max(grid.tile_bytes(c) for c in grid.tiles)
    if need > max_grid_bytes:
        raise GridMemoryError(
            f"color grid needs about {need / 2**20:.0f} MiB per tile, above the "
            f"{max_grid_bytes / 2**20:.0f} MiB cap; lower the tile size or raise the cap"
        )
    t_flat = t_hat.ravel()
    num = np.empty((h, w))
    den = np.empty((h, w))

    def run(c):
        cy0, cy1, cx0, cx1 = c
        sy0, sy1 = grid.rows(cy0 - grid.halo, cy1 + grid.halo)
        sx0, sx1 = grid.cols(cx0 - grid.halo, cx1 + grid.halo)
        oy0, oy1 = grid.rows(cy0, cy1)
        ox0, ox1 = grid.cols(cx0, cx1)
        yy, xx = np.meshgrid(np.arange(sy0, sy1), np.arange(sx0, sx1), indexing="ij")
        yy, xx = yy.ravel(), xx.ravel()
        idx = yy * w + xx
        base = np.column_stack([grid.row_base[yy], grid.col_base[xx], grid.color_base[idx]])
        frac = np.column_stack([grid.row_frac[yy], grid.col_frac[xx], grid.color_frac[idx]])
        base = base - base.min(axis=0)
        shape = tuple(int(v) for v in base.max(axis=0) + 2)
        values = np.column_stack([t_flat[idx], np.ones(len(idx))])
        grids = _blur(_splat(base, frac, values, shape), grid.kernels)
        inner = (yy >= oy0) & (yy < oy1) & (xx >= ox0) & (xx < ox1)
        n, d = _slice(grids, base[inner], frac[inner])
        return (oy0, oy1, ox0, ox1), n, d

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, grid.tiles))
    else:
        results = [run(c) for c in grid.tiles]
    for (oy0, oy1, ox0, ox1), n, d in results:
        num[oy0:oy1, ox0:ox1] = n.reshape(oy1 - oy0, ox1 - ox0)
        den[oy0:oy1, ox0:ox1] = d.reshape(oy1 - oy0, ox1 - ox0)
    return num, den


def filter_grid(t_hat, lab, labels, params: FilterParams = FilterParams(), tile: int = 256,
                workers: int = 1, max_grid_bytes: int = DEFAULT_MAX_GRID_BYTES) -> np.ndarray:
    """Grid-accelerated version of :func:`filter_exact`."""
    t_hat, lab, labels = _check_inputs(t_hat, lab, labels)
    n_sem, d_sem = semantic_term(t_hat, labels, params)
    if params.mu == 0:
        out = n_sem / d_sem
    else:
        n_col, d_col = color_term(t_hat, lab, params, tile=tile, workers=workers, max_grid_bytes=max_grid_bytes)
        out = (n_sem + params.mu * n_col) / (d_sem + params.mu * d_col)
    # every weight is non-negative, so only rounding can leave the input range
    return np.clip(out, t_hat.min(), t_hat.max())
