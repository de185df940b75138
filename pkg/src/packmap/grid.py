"""Log-odds occupancy grid with ternary export and lazy growth.

Cells are stored row-major as ``cells[iy, ix]`` with the world position of the
cell (0, 0) corner given by ``origin`` (grid axes are world-axis aligned; the
origin's theta is kept for the export format and is always 0 here). Updates
batch one scan's free/occupied hit counts and apply a single clamped log-odds
increment, so the result is independent of beam order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from packmap import kernels
from packmap.se2 import Pose2

L_MIN_DEFAULT = -4.0
L_MAX_DEFAULT = 4.0
OCCUPIED_THRESHOLD = 0.85
FREE_THRESHOLD = -0.85
L_OCC_HIT = 0.85
L_FREE_TRAVERSE = -0.4

TERNARY_OCCUPIED = 1
TERNARY_UNKNOWN = 0
TERNARY_FREE = -1

# Canonical log-odds when reconstructing a grid from a ternary map.
CANONICAL_OCC = 2.0
CANONICAL_FREE = -2.0


@dataclass
class OccupancyGrid:
    resolution: float
    width: int
    height: int
    origin: Pose2
    cells: np.ndarray = field(default=None)  # type: ignore[assignment]
    l_min: float = L_MIN_DEFAULT
    l_max: float = L_MAX_DEFAULT
    occupied_threshold: float = OCCUPIED_THRESHOLD
    free_threshold: float = FREE_THRESHOLD

    def __post_init__(self) -> None:
        if self.cells is None:
            self.cells = np.zeros((self.height, self.width), dtype=np.float64)
        if self.cells.shape != (self.height, self.width):
            raise ValueError("cells shape does not match width/height")
        if abs(self.origin.theta) > 1e-12:
            raise ValueError("grid origin must be axis-aligned (theta = 0)")
        self._dist_cache: np.ndarray | None = None

    # -- coordinates ---------------------------------------------------------

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        ix = int(math.floor((x - self.origin.x) / self.resolution))
        iy = int(math.floor((y - self.origin.y) / self.resolution))
        return ix, iy

    def world_to_cells(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(pts, dtype=float)
        ix = np.floor((pts[:, 0] - self.origin.x) / self.resolution).astype(np.int64)
        iy = np.floor((pts[:, 1] - self.origin.y) / self.resolution).astype(np.int64)
        return ix, iy

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (
            self.origin.x + (ix + 0.5) * self.resolution,
            self.origin.y + (iy + 0.5) * self.resolution,
        )

    def contains_cell(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the covered world rectangle."""
        return (
            self.origin.x,
            self.origin.y,
            self.origin.x + self.width * self.resolution,
            self.origin.y + self.height * self.resolution,
        )

    # -- updates -------------------------------------------------------------

    def ensure_contains(self, pts: np.ndarray) -> None:
        """Grow (by doubling) until every point lies strictly inside."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        if pts.size == 0:
            return
        xmin, ymin = pts.min(axis=0)
        xmax, ymax = pts.max(axis=0)
        x0, y0, x1, y1 = self.extent
        pad = self.resolution
        if xmin >= x0 + pad and ymin >= y0 + pad and xmax < x1 - pad and ymax < y1 - pad:
            return
        new_x0, new_y0, new_x1, new_y1 = x0, y0, x1, y1
        while xmin < new_x0 + pad:
            new_x0 -= (new_x1 - new_x0)
        while ymin < new_y0 + pad:
            new_y0 -= (new_y1 - new_y0)
        while xmax >= new_x1 - pad:
            new_x1 += (new_x1 - new_x0)
        while ymax >= new_y1 - pad:
            new_y1 += (new_y1 - new_y0)
        # Snap the new origin onto the existing cell lattice.
        shift_x = int(round((x0 - new_x0) / self.resolution))
        shift_y = int(round((y0 - new_y0) / self.resolution))
        new_w = self.width + shift_x + int(round((new_x1 - x1) / self.resolution))
        new_h = self.height + shift_y + int(round((new_y1 - y1) / self.resolution))
        grown = np.zeros((new_h, new_w), dtype=np.float64)
        grown[shift_y : shift_y + self.height, shift_x : shift_x + self.width] = self.cells
        self.cells = grown
        self.width = new_w
        self.height = new_h
        self.origin = Pose2(x0 - shift_x * self.resolution, y0 - shift_y * self.resolution, 0.0)
        self._dist_cache = None

    def integrate_scan(
        self,
        pose: Pose2,
        endpoints: np.ndarray,
        l_occ: float = L_OCC_HIT,
        l_free: float = L_FREE_TRAVERSE,
        grow: bool = True,
    ) -> None:
        """Ray-trace world-frame ``endpoints`` (N, 2) from ``pose`` into the grid."""
        endpoints = np.asarray(endpoints, dtype=float).reshape(-1, 2)
        if endpoints.size == 0:
            return
        if grow:
            self.ensure_contains(np.vstack([endpoints, [[pose.x, pose.y]]]))
        cx0, cy0 = self.world_to_cell(pose.x, pose.y)
        ex, ey = self.world_to_cells(endpoints)
        inside = (ex >= 0) & (ex < self.width) & (ey >= 0) & (ey < self.height)
        if not inside.all():
            ex, ey = ex[inside], ey[inside]
        if ex.size == 0 or not self.contains_cell(cx0, cy0):
            return
        kernels.integrate_rays(self.cells, cx0, cy0, ex, ey, l_free, l_occ, self.l_min, self.l_max)
        self._dist_cache = None

    # -- queries -------------------------------------------------------------

    def ternary(self) -> np.ndarray:
        """int8 classification: +1 occupied, -1 free, 0 unknown."""
        out = np.zeros(self.cells.shape, dtype=np.int8)
        out[self.cells > self.occupied_threshold] = TERNARY_OCCUPIED
        out[self.cells < self.free_threshold] = TERNARY_FREE
        return out

    def occupied_mask(self) -> np.ndarray:
        return self.cells > self.occupied_threshold

    def occupied_distance_field(self) -> np.ndarray:
        """Distance (meters, between cell centers) to the nearest occupied cell.

        All-inf when the grid has no occupied cell. Cached until the next update.
        """
        if self._dist_cache is None:
            occ = self.occupied_mask()
            if not occ.any():
                self._dist_cache = np.full(self.cells.shape, np.inf)
            else:
                self._dist_cache = ndimage.distance_transform_edt(~occ) * self.resolution
        return self._dist_cache

    def copy(self) -> "OccupancyGrid":
        dup = OccupancyGrid(
            resolution=self.resolution,
            width=self.width,
            height=self.height,
            origin=self.origin,
            cells=self.cells.copy(),
            l_min=self.l_min,
            l_max=self.l_max,
            occupied_threshold=self.occupied_threshold,
            free_threshold=self.free_threshold,
        )
        dup._dist_cache = self._dist_cache
        return dup


def grid_from_ternary(
    ternary: np.ndarray, resolution: float, origin: Pose2, l_occ: float = CANONICAL_OCC, l_free: float = CANONICAL_FREE
) -> OccupancyGrid:
    """Rebuild a log-odds grid from a ternary map using canonical values."""
    cells = np.zeros(ternary.shape, dtype=np.float64)
    cells[ternary == TERNARY_OCCUPIED] = l_occ
    cells[ternary == TERNARY_FREE] = l_free
    h, w = ternary.shape
    return OccupancyGrid(resolution=resolution, width=w, height=h, origin=origin, cells=cells)


def scan_endpoints(pose: Pose2, angle_min: float, angle_increment: float, ranges: np.ndarray, range_max: float) -> np.ndarray:
    """World-frame hit points of a scan's finite returns (max-range returns excluded)."""
    ranges = np.asarray(ranges, dtype=float)
    hit = np.isfinite(ranges) & (ranges < range_max * 0.999)
    if not hit.any():
        return np.empty((0, 2))
    idx = np.nonzero(hit)[0]
    ang = pose.theta + angle_min + idx * angle_increment
    r = ranges[idx]
    return np.column_stack([pose.x + r * np.cos(ang), pose.y + r * np.sin(ang)])
