import math
from pathlib import Path

import numpy as np
import pytest

ENV_DIR = Path(__file__).resolve().parent.parent / "envs"


@pytest.fixture(scope="session")
def square_env_path() -> Path:
    return ENV_DIR / "square_4x4.env"


@pytest.fixture(scope="session")
def office_env_path() -> Path:
    return ENV_DIR / "office_10x8.env"


def brute_force_raycast(px: float, py: float, angle: float, segments: np.ndarray, range_max: float) -> float:
    """Independent per-beam nearest-intersection oracle (scalar, explicit)."""
    best = math.inf
    dx, dy = math.cos(angle), math.sin(angle)
    for x1, y1, x2, y2 in segments:
        ex, ey = x2 - x1, y2 - y1
        denom = dx * ey - dy * ex
        if abs(denom) < 1e-300:
            continue
        aox, aoy = x1 - px, y1 - py
        t = (aox * ey - aoy * ex) / denom
        s = (aox * dy - aoy * dx) / denom
        if 0.0 <= s <= 1.0 and 1e-12 < t <= range_max and t < best:
            best = t
    return best


def bresenham_cells(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Textbook integer Bresenham including both endpoints (oracle copy)."""
    cells = []
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        cells.append((x, y))
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy
    return cells


def oracle_ternary_map(
    poses,
    scans,
    resolution: float,
    origin_xy: tuple[float, float],
    shape: tuple[int, int],
    range_max: float,
    l_occ: float = 0.85,
    l_free: float = -0.4,
    l_min: float = -4.0,
    l_max: float = 4.0,
    occupied_threshold: float = 0.85,
    free_threshold: float = -0.85,
) -> np.ndarray:
    """Naive ray-trace mapping oracle: per-scan batched count update + clamp.

    Written independently of the package grid/kernels; used to pin the exact
    rasterization the mapping backends must reproduce at zero noise.
    """
    h, w = shape
    ox, oy = origin_xy
    cells = np.zeros((h, w), dtype=np.float64)
    for pose, scan in zip(poses, scans):
        free = np.zeros((h, w), dtype=np.int64)
        occ = np.zeros((h, w), dtype=np.int64)
        cx0 = math.floor((pose.x - ox) / resolution)
        cy0 = math.floor((pose.y - oy) / resolution)
        for i, r in enumerate(scan.ranges):
            if not math.isfinite(r) or r >= range_max * 0.999:
                continue
            ang = pose.theta + scan.angle_min + i * scan.angle_increment
            exw = pose.x + r * math.cos(ang)
            eyw = pose.y + r * math.sin(ang)
            cx1 = math.floor((exw - ox) / resolution)
            cy1 = math.floor((eyw - oy) / resolution)
            if not (0 <= cx1 < w and 0 <= cy1 < h):
                continue
            path = bresenham_cells(cx0, cy0, cx1, cy1)
            for (cx, cy) in path[:-1]:
                free[cy, cx] += 1
            occ[cy1, cx1] += 1
        cells = np.clip(cells + free * l_free + occ * l_occ, l_min, l_max)
    out = np.zeros((h, w), dtype=np.int8)
    out[cells > occupied_threshold] = 1
    out[cells < free_threshold] = -1
    return out
