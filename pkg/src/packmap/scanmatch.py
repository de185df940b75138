"""Two-level correlative scan matching.

The reference scan is rasterized into a Gaussian-blurred likelihood lookup
(probability of a query endpoint landing near reference structure). The pose
window around the initial guess is searched exhaustively at coarse resolution
on integer cell offsets, then refined around the coarse peak with bilinear
sub-cell sampling. Deterministic and derivative-free; exact score ties resolve
toward the initial guess, so unobservable directions (e.g. translation along a
featureless corridor) return the initial value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from packmap import kernels
from packmap.grid import scan_endpoints
from packmap.se2 import Pose2
from packmap.world import LaserScan


class MatchDegenerateError(ValueError):
    """Query scan has too few usable returns to match."""


@dataclass(frozen=True)
class MatchConfig:
    window_xy: float = 0.3
    window_theta: float = math.radians(15.0)
    coarse_step_xy: float = 0.05
    coarse_step_theta: float = math.radians(1.0)
    fine_step_xy: float = 0.01
    fine_step_theta: float = math.radians(0.25)
    raster_resolution: float = 0.025
    sigma: float = 0.1
    beam_step: int = 2  # query subsampling for scoring
    min_valid_beams: int = 10
    range_max: float = 12.0

    def widened(self, xy: float, theta: float) -> "MatchConfig":
        from dataclasses import replace

        return replace(self, window_xy=xy, window_theta=theta)


@dataclass(frozen=True)
class MatchResult:
    pose: Pose2
    score: float


def _likelihood_raster(ref_points: np.ndarray, cfg: MatchConfig):
    """Blurred endpoint lookup covering the reference points plus the search
    window; returns (raster, origin_x, origin_y).

    Each raster cell holds exp(-d^2 / 2 sigma^2) where d is measured from the
    cell center to the (averaged) true endpoint position in the nearest
    occupied cell, so the peak is not quantized to the raster lattice.
    """
    pad = cfg.window_xy + 4.0 * cfg.sigma + 2.0 * cfg.raster_resolution
    xmin, ymin = ref_points.min(axis=0) - pad
    xmax, ymax = ref_points.max(axis=0) + pad
    res = cfg.raster_resolution
    w = int(math.ceil((xmax - xmin) / res)) + 1
    h = int(math.ceil((ymax - ymin) / res)) + 1
    ix = np.floor((ref_points[:, 0] - xmin) / res).astype(np.int64)
    iy = np.floor((ref_points[:, 1] - ymin) / res).astype(np.int64)
    occ = np.zeros((h, w), dtype=bool)
    occ[iy, ix] = True
    sum_x = np.zeros((h, w))
    sum_y = np.zeros((h, w))
    cnt = np.zeros((h, w))
    np.add.at(sum_x, (iy, ix), ref_points[:, 0])
    np.add.at(sum_y, (iy, ix), ref_points[:, 1])
    np.add.at(cnt, (iy, ix), 1.0)
    rep_x = np.where(cnt > 0, sum_x / np.maximum(cnt, 1.0), 0.0)
    rep_y = np.where(cnt > 0, sum_y / np.maximum(cnt, 1.0), 0.0)

    niy, nix = ndimage.distance_transform_edt(~occ, return_distances=False, return_indices=True)
    near_x = rep_x[niy, nix]
    near_y = rep_y[niy, nix]
    cx = xmin + (np.arange(w) + 0.5) * res
    cy = ymin + (np.arange(h) + 0.5) * res
    dx = cx[None, :] - near_x
    dy = cy[:, None] - near_y
    d2 = dx * dx + dy * dy
    raster = np.exp(-d2 / (2.0 * cfg.sigma * cfg.sigma))
    return raster, float(xmin), float(ymin)


def _query_points(scan: LaserScan, cfg: MatchConfig) -> np.ndarray:
    """Sensor-frame endpoints of the query scan, subsampled."""
    pts = scan_endpoints(Pose2(), scan.angle_min, scan.angle_increment, scan.ranges, cfg.range_max)
    return pts[:: cfg.beam_step]


def scan_match(
    ref_scan: LaserScan,
    ref_pose: Pose2,
    query_scan: LaserScan,
    initial: Pose2,
    cfg: MatchConfig = MatchConfig(),
) -> MatchResult:
    """Align ``query_scan`` against ``ref_scan`` drawn at ``ref_pose``.

    Returns the best pose in the shared (reference) frame and a normalized
    score in [0, 1]. The initial guess should lie within the search window of
    the true relative pose for a meaningful result.
    """
    ref_points = scan_endpoints(ref_pose, ref_scan.angle_min, ref_scan.angle_increment, ref_scan.ranges, cfg.range_max)
    if ref_points.shape[0] < cfg.min_valid_beams:
        raise MatchDegenerateError("reference scan has too few returns")
    q_body = _query_points(query_scan, cfg)
    if q_body.shape[0] < cfg.min_valid_beams:
        raise MatchDegenerateError("query scan has too few returns")

    raster, ox, oy = _likelihood_raster(ref_points, cfg)
    res = cfg.raster_resolution
    return _search(raster, ox, oy, res, q_body, initial, cfg)


def match_to_raster(
    raster: np.ndarray, ox: float, oy: float, res: float, q_body: np.ndarray, initial: Pose2, cfg: MatchConfig
) -> MatchResult:
    """Search an externally built likelihood raster (reuse between queries)."""
    return _search(raster, ox, oy, res, q_body, initial, cfg)


def _search(raster, ox, oy, res, q_body, initial, cfg) -> MatchResult:
    n_t = max(1, int(round(cfg.window_theta / cfg.coarse_step_theta)))
    thetas = initial.theta + np.arange(-n_t, n_t + 1) * cfg.coarse_step_theta
    n_xy = max(1, int(round(cfg.window_xy / cfg.coarse_step_xy)))
    step_cells = max(1, int(round(cfg.coarse_step_xy / res)))
    off_1d = step_cells * np.arange(-n_xy, n_xy + 1, dtype=np.int64)
    dxg, dyg = np.meshgrid(off_1d, off_1d, indexing="ij")
    dx = dxg.ravel()
    dy = dyg.ravel()
    off_cost = np.abs(dx) + np.abs(dy)  # tie-break: prefer the initial guess

    best = (-1.0, math.inf, 0.0, 0.0, initial.theta)  # score, cost, dx_m, dy_m, theta
    for k, theta in enumerate(thetas):
        c, s = math.cos(theta), math.sin(theta)
        wx = initial.x + c * q_body[:, 0] - s * q_body[:, 1]
        wy = initial.y + s * q_body[:, 0] + c * q_body[:, 1]
        px = np.floor((wx - ox) / res).astype(np.int64)
        py = np.floor((wy - oy) / res).astype(np.int64)
        scores = kernels.score_offsets_nearest(raster, px, py, dx, dy)
        theta_cost = abs(k - n_t) * step_cells  # comparable units: cells
        i = int(np.lexsort((off_cost + theta_cost, -scores))[0])
        if scores[i] > best[0] + 1e-15 or (
            abs(scores[i] - best[0]) <= 1e-15 and off_cost[i] + theta_cost < best[1]
        ):
            best = (float(scores[i]), float(off_cost[i] + theta_cost), float(dx[i] * res), float(dy[i] * res), float(theta))

    # fine stage around the coarse peak
    n_tf = max(1, int(round(cfg.coarse_step_theta / cfg.fine_step_theta)))
    f_thetas = best[4] + np.arange(-n_tf, n_tf + 1) * cfg.fine_step_theta
    n_f = max(1, int(round(cfg.coarse_step_xy / cfg.fine_step_xy)))
    f_off = np.arange(-n_f, n_f + 1) * cfg.fine_step_xy
    fdxg, fdyg = np.meshgrid(best[2] + f_off, best[3] + f_off, indexing="ij")
    fdx = fdxg.ravel()
    fdy = fdyg.ravel()
    f_cost = np.abs(fdx - 0.0) + np.abs(fdy - 0.0)

    fbest = (-1.0, math.inf, best[2], best[3], best[4])
    for k, theta in enumerate(f_thetas):
        c, s = math.cos(theta), math.sin(theta)
        fx = (initial.x + c * q_body[:, 0] - s * q_body[:, 1] - ox) / res - 0.5
        fy = (initial.y + s * q_body[:, 0] + c * q_body[:, 1] - oy) / res - 0.5
        scores = kernels.score_offsets_bilinear(raster, fx, fy, fdx / res, fdy / res)
        theta_cost = abs(theta - initial.theta)
        cost = f_cost + theta_cost
        i = int(np.lexsort((cost, -scores))[0])
        if scores[i] > fbest[0] + 1e-15 or (abs(scores[i] - fbest[0]) <= 1e-15 and cost[i] < fbest[1]):
            fbest = (float(scores[i]), float(cost[i]), float(fdx[i]), float(fdy[i]), float(theta))

    pose = Pose2(initial.x + fbest[2], initial.y + fbest[3], fbest[4])
    return MatchResult(pose=pose, score=float(min(1.0, max(0.0, fbest[0]))))
