"""Numpy implementations of the hot kernels.

Same contracts as the compiled module ``packmap.kernels._core``; these are the
fallback when the extension is unavailable (or forced via PACKMAP_PURE_PYTHON=1).

Integer work (Bresenham traversal, hit counting) is bit-identical to the
compiled path. Floating-point reductions may differ in the last ulp because
numpy sums pairwise.
"""

from __future__ import annotations

import numpy as np


def raycast(px: float, py: float, angles: np.ndarray, segments: np.ndarray, range_max: float) -> np.ndarray:
    """Distance from (px, py) along each angle to the nearest segment hit.

    ``segments`` is (S, 4) rows of ``x1 y1 x2 y2``. Beams with no hit within
    ``range_max`` return +inf. Parallel/degenerate intersections are ignored.
    """
    angles = np.asarray(angles, dtype=float)
    segments = np.asarray(segments, dtype=float)
    if segments.size == 0:
        return np.full(angles.shape, np.inf)
    dx = np.cos(angles)[:, None]
    dy = np.sin(angles)[:, None]
    ax = segments[None, :, 0]
    ay = segments[None, :, 1]
    ex = (segments[:, 2] - segments[:, 0])[None, :]
    ey = (segments[:, 3] - segments[:, 1])[None, :]
    aox = ax - px
    aoy = ay - py
    denom = dx * ey - dy * ex
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (aox * ey - aoy * ex) / denom
        s = (aox * dy - aoy * dx) / denom
    valid = (np.abs(denom) > 1e-300) & (s >= 0.0) & (s <= 1.0) & (t > 1e-12) & (t <= range_max)
    t = np.where(valid, t, np.inf)
    return t.min(axis=1)


def integrate_rays(
    cells: np.ndarray,
    cx0: int,
    cy0: int,
    ex: np.ndarray,
    ey: np.ndarray,
    l_free: float,
    l_occ: float,
    l_min: float,
    l_max: float,
) -> None:
    """Accumulate one scan into a log-odds grid, in place.

    Every cell on the Bresenham ray from (cx0, cy0) to each endpoint (endpoint
    excluded) counts one free hit; each endpoint cell counts one occupied hit.
    Counts are applied as a single batched update followed by one clamp, so the
    result is independent of beam order.
    """
    h, w = cells.shape
    ex = np.asarray(ex, dtype=np.int64)
    ey = np.asarray(ey, dtype=np.int64)
    free_counts = np.zeros((h, w), dtype=np.int64)
    occ_counts = np.zeros((h, w), dtype=np.int64)
    np.add.at(occ_counts, (ey, ex), 1)

    n = ex.shape[0]
    x = np.full(n, cx0, dtype=np.int64)
    y = np.full(n, cy0, dtype=np.int64)
    dx = np.abs(ex - x)
    dy = -np.abs(ey - y)
    sx = np.where(x < ex, 1, -1)
    sy = np.where(y < ey, 1, -1)
    err = dx + dy
    active = (x != ex) | (y != ey)
    if active.any():
        np.add.at(free_counts, (y[active], x[active]), 1)
    while active.any():
        e2 = 2 * err
        step_x = active & (e2 >= dy)
        step_y = active & (e2 <= dx)
        err = np.where(step_x, err + dy, err)
        x = np.where(step_x, x + sx, x)
        err = np.where(step_y, err + dx, err)
        y = np.where(step_y, y + sy, y)
        active = (x != ex) | (y != ey)
        if active.any():
            np.add.at(free_counts, (y[active], x[active]), 1)
    np.clip(cells + free_counts * l_free + occ_counts * l_occ, l_min, l_max, out=cells)


def score_offsets_nearest(
    raster: np.ndarray, px: np.ndarray, py: np.ndarray, dx: np.ndarray, dy: np.ndarray
) -> np.ndarray:
    """Mean raster value of the point set under each integer cell offset.

    Points falling outside the raster contribute 0.
    """
    h, w = raster.shape
    xx = np.asarray(px, dtype=np.int64)[None, :] + np.asarray(dx, dtype=np.int64)[:, None]
    yy = np.asarray(py, dtype=np.int64)[None, :] + np.asarray(dy, dtype=np.int64)[:, None]
    inside = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
    flat = raster.ravel()
    idx = np.where(inside, yy * w + xx, 0)
    vals = np.where(inside, flat[idx], 0.0)
    return vals.sum(axis=1) / px.shape[0]


def score_offsets_bilinear(
    raster: np.ndarray, fx: np.ndarray, fy: np.ndarray, dx: np.ndarray, dy: np.ndarray
) -> np.ndarray:
    """Bilinear variant of :func:`score_offsets_nearest` with continuous
    cell-center coordinates and continuous offsets (all in cell units)."""
    h, w = raster.shape
    xx = np.asarray(fx, dtype=float)[None, :] + np.asarray(dx, dtype=float)[:, None]
    yy = np.asarray(fy, dtype=float)[None, :] + np.asarray(dy, dtype=float)[:, None]
    inside = (xx >= 0.0) & (xx <= w - 1.0) & (yy >= 0.0) & (yy <= h - 1.0)
    x0 = np.clip(np.floor(xx), 0, w - 2).astype(np.int64)
    y0 = np.clip(np.floor(yy), 0, h - 2).astype(np.int64)
    tx = np.clip(xx - x0, 0.0, 1.0)
    ty = np.clip(yy - y0, 0.0, 1.0)
    flat = raster.ravel()
    base = y0 * w + x0
    v00 = flat[base]
    v01 = flat[base + 1]
    v10 = flat[base + w]
    v11 = flat[base + w + 1]
    vals = (1.0 - ty) * ((1.0 - tx) * v00 + tx * v01) + ty * ((1.0 - tx) * v10 + tx * v11)
    vals = np.where(inside, vals, 0.0)
    return vals.sum(axis=1) / fx.shape[0]


def mean_log_prob(
    dist: np.ndarray, cx: np.ndarray, cy: np.ndarray, inv_two_sigma2: float, log_floor: float
) -> float:
    """Mean per-beam log-likelihood under a Gaussian of endpoint distance to
    the nearest occupied cell, floored by the outlier term. Out-of-grid
    endpoints take the floor."""
    h, w = dist.shape
    cx = np.asarray(cx, dtype=np.int64)
    cy = np.asarray(cy, dtype=np.int64)
    inside = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
    d = np.where(inside, dist[np.clip(cy, 0, h - 1), np.clip(cx, 0, w - 1)], np.inf)
    lp = np.maximum(-(d * d) * inv_two_sigma2, log_floor)
    return float(lp.mean())
