"""Ground-truth 2D world: wall-segment environments, disk-robot kinematics,
and noisy sensor synthesis (lidar, IMU, odometry).

The robot is a disk of configurable radius driven by body-frame velocities
(first-order Euler). Walls stop translation at contact; rotation always
applies. All randomness flows through numpy Generators so runs are
reproducible under a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from packmap import kernels
from packmap.se2 import Pose2, Twist2, wrap_angle

BODY_RADIUS_DEFAULT = 0.15
GRAVITY = 9.81


class EnvironmentFileError(ValueError):
    """Raised for unparseable or invariant-violating environment files."""


@dataclass(frozen=True)
class Environment:
    """Walls as (S, 4) segment rows ``x1 y1 x2 y2`` plus their AABB."""

    walls: np.ndarray
    bounds: tuple[float, float, float, float]

    @classmethod
    def from_segments(cls, segments: np.ndarray) -> "Environment":
        segments = np.asarray(segments, dtype=float).reshape(-1, 4)
        if segments.shape[0] == 0:
            raise EnvironmentFileError("environment has no wall segments")
        lengths = np.hypot(segments[:, 2] - segments[:, 0], segments[:, 3] - segments[:, 1])
        if (lengths <= 0.0).any():
            bad = int(np.nonzero(lengths <= 0.0)[0][0])
            raise EnvironmentFileError(f"segment {bad} has zero length")
        xs = np.concatenate([segments[:, 0], segments[:, 2]])
        ys = np.concatenate([segments[:, 1], segments[:, 3]])
        return cls(walls=segments, bounds=(float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max())))

    @property
    def size(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.bounds
        return (x1 - x0, y1 - y0)

    def contains(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.bounds
        return x0 <= x <= x1 and y0 <= y <= y1


def load_environment(path: str | Path) -> Environment:
    """Parse a segment-list environment file: one ``x1 y1 x2 y2`` per line,
    ``#`` comments and blank lines ignored."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise EnvironmentFileError(f"cannot read environment file {path}: {exc}") from exc
    segments = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise EnvironmentFileError(f"{path}:{lineno}: expected 4 numbers, got {len(parts)}")
        try:
            segments.append([float(p) for p in parts])
        except ValueError as exc:
            raise EnvironmentFileError(f"{path}:{lineno}: {exc}") from exc
    return Environment.from_segments(np.array(segments, dtype=float).reshape(-1, 4))


@dataclass(frozen=True)
class LidarConfig:
    beam_count: int = 360
    angle_min: float = -math.pi
    angle_max: float = math.pi
    range_min: float = 0.1
    range_max: float = 12.0
    range_noise_sigma: float = 0.01
    scan_rate: float = 10.0

    def __post_init__(self) -> None:
        if self.beam_count < 2:
            raise ValueError("beam_count must be >= 2")
        if not self.range_min < self.range_max:
            raise ValueError("range_min must be < range_max")
        if not self.angle_min < self.angle_max:
            raise ValueError("angles must be strictly increasing")

    @property
    def angle_increment(self) -> float:
        # Beams cover [angle_min, angle_max) so a 360 deg scan has no
        # duplicate wrap beam.
        return (self.angle_max - self.angle_min) / self.beam_count


@dataclass(frozen=True)
class LaserScan:
    timestamp: float
    angle_min: float
    angle_increment: float
    ranges: np.ndarray  # meters; +inf = no return

    def __post_init__(self) -> None:
        object.__setattr__(self, "ranges", np.asarray(self.ranges, dtype=np.float64))

    @property
    def beam_count(self) -> int:
        return int(self.ranges.shape[0])

    def angles(self) -> np.ndarray:
        return self.angle_min + np.arange(self.beam_count) * self.angle_increment


@dataclass(frozen=True)
class ImuSample:
    timestamp: float
    accel: tuple[float, float, float]
    gyro: tuple[float, float, float]


@dataclass(frozen=True)
class NoiseModel:
    odom_trans_sigma: float = 0.03  # m of noise per m traveled
    odom_rot_sigma: float = 0.05  # rad of noise per rad turned
    lidar_sigma: float = 0.01
    imu_accel_sigma: float = 0.05
    imu_gyro_sigma: float = 0.01
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for name in ("odom_trans_sigma", "odom_rot_sigma", "lidar_sigma", "imu_accel_sigma", "imu_gyro_sigma"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")

    def make_rng(self) -> np.random.Generator:
        return np.random.default_rng(self.rng_seed)

    @classmethod
    def zero(cls, seed: int = 0) -> "NoiseModel":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, seed)


ZERO_NOISE = NoiseModel.zero()


def _point_segment_distances(px: float, py: float, segments: np.ndarray) -> np.ndarray:
    ax, ay = segments[:, 0], segments[:, 1]
    bx, by = segments[:, 2], segments[:, 3]
    ex, ey = bx - ax, by - ay
    seg_len2 = ex * ex + ey * ey
    t = np.clip(((px - ax) * ex + (py - ay) * ey) / seg_len2, 0.0, 1.0)
    cx = ax + t * ex
    cy = ay + t * ey
    return np.hypot(px - cx, py - cy)


def min_wall_distance(env: Environment, x: float, y: float) -> float:
    return float(_point_segment_distances(x, y, env.walls).min())


def step_true_pose(
    env: Environment, pose: Pose2, cmd: Twist2, dt: float, body_radius: float = BODY_RADIUS_DEFAULT
) -> Pose2:
    """Advance the true pose one step; translation saturates at wall contact.

    Body-frame velocities are rotated at the starting heading (first-order
    Euler). If the swept disk would touch a wall, the position stops where the
    disk first contacts (distance == body_radius) and only rotation applies
    beyond that point.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    new_theta = wrap_angle(pose.theta + cmd.wz * dt)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    dx = (c * cmd.vx - s * cmd.vy) * dt
    dy = (s * cmd.vx + c * cmd.vy) * dt
    step = math.hypot(dx, dy)
    if step == 0.0:
        return Pose2(pose.x, pose.y, new_theta)

    frac = _max_free_fraction(env, pose.x, pose.y, dx, dy, body_radius)
    return Pose2(pose.x + frac * dx, pose.y + frac * dy, new_theta)


def _max_free_fraction(env: Environment, x0: float, y0: float, dx: float, dy: float, radius: float) -> float:
    """Largest s in [0, 1] keeping the disk at (x0 + s dx, y0 + s dy) wall-free."""
    d_start = min_wall_distance(env, x0, y0)
    candidates = [1.0]
    for seg in env.walls:
        s_hit = _disk_segment_contact(x0, y0, dx, dy, radius, seg)
        if s_hit is not None:
            candidates.append(s_hit)
    s_best = min(candidates)
    if s_best < 1.0:
        s_best = max(0.0, s_best - 1e-9)
    # Already in contact: only allow motion that does not reduce clearance.
    if d_start < radius:
        d_end = min_wall_distance(env, x0 + s_best * dx, y0 + s_best * dy)
        if d_end < d_start:
            return 0.0
    return s_best


def _disk_segment_contact(
    x0: float, y0: float, dx: float, dy: float, r: float, seg: np.ndarray
) -> float | None:
    """First s in [0, 1] where a disk moving along (dx, dy) touches ``seg``."""
    ax, ay, bx, by = seg
    ex, ey = bx - ax, by - ay
    seg_len = math.hypot(ex, ey)
    ux, uy = ex / seg_len, ey / seg_len
    nx, ny = -uy, ux  # unit normal
    hits: list[float] = []

    # Face contact: |n . (p(s) - a)| = r with the foot inside the segment.
    n_dot_d = nx * dx + ny * dy
    n_dot_p0 = nx * (x0 - ax) + ny * (y0 - ay)
    if abs(n_dot_d) > 1e-15:
        for target in (r, -r):
            s_c = (target - n_dot_p0) / n_dot_d
            if 0.0 <= s_c <= 1.0:
                px, py = x0 + s_c * dx, y0 + s_c * dy
                proj = (px - ax) * ux + (py - ay) * uy
                if 0.0 <= proj <= seg_len:
                    # Keep only approaching contacts.
                    side = n_dot_p0 if n_dot_p0 != 0.0 else target
                    if side * n_dot_d < 0.0:
                        hits.append(s_c)

    # Endpoint contact: |p(s) - e|^2 = r^2.
    for exx, eyy in ((ax, ay), (bx, by)):
        fx, fy = x0 - exx, y0 - eyy
        a_coef = dx * dx + dy * dy
        b_coef = 2.0 * (fx * dx + fy * dy)
        c_coef = fx * fx + fy * fy - r * r
        disc = b_coef * b_coef - 4.0 * a_coef * c_coef
        if disc < 0.0 or a_coef == 0.0:
            continue
        sq = math.sqrt(disc)
        for s_c in ((-b_coef - sq) / (2.0 * a_coef), (-b_coef + sq) / (2.0 * a_coef)):
            if 0.0 <= s_c <= 1.0:
                # Approaching if the radial velocity is inward at contact.
                rvx, rvy = fx + s_c * dx, fy + s_c * dy
                if rvx * dx + rvy * dy < 0.0:
                    hits.append(s_c)

    return min(hits) if hits else None


def simulate_scan(
    env: Environment,
    true_pose: Pose2,
    cfg: LidarConfig,
    noise: NoiseModel,
    rng: np.random.Generator | None = None,
    timestamp: float = 0.0,
) -> LaserScan:
    """Raycast one revolution from ``true_pose`` with Gaussian range noise.

    No intersection within range_max leaves the sentinel (+inf); finite hits
    are clamped to [range_min, range_max].
    """
    if rng is None:
        rng = noise.make_rng()
    angles = true_pose.theta + cfg.angle_min + np.arange(cfg.beam_count) * cfg.angle_increment
    ranges = kernels.raycast(true_pose.x, true_pose.y, angles, env.walls, cfg.range_max)
    hit = np.isfinite(ranges)
    if noise.lidar_sigma > 0.0 and hit.any():
        ranges = ranges.copy()
        ranges[hit] += rng.normal(0.0, noise.lidar_sigma, size=int(hit.sum()))
    ranges = np.where(hit, np.clip(ranges, cfg.range_min, cfg.range_max), np.inf)
    return LaserScan(timestamp=timestamp, angle_min=cfg.angle_min, angle_increment=cfg.angle_increment, ranges=ranges)


def measure_odometry(
    prev_true: Pose2, cur_true: Pose2, noise: NoiseModel, rng: np.random.Generator | None = None
) -> Pose2:
    """Body-frame relative motion prev^-1 * cur, perturbed by noise scaled by
    the translation/rotation magnitudes (zero motion stays exactly zero)."""
    if rng is None:
        rng = noise.make_rng()
    delta = prev_true.delta_to(cur_true)
    dist = delta.translation_norm()
    rot = abs(delta.theta)
    sig_t = noise.odom_trans_sigma * dist
    sig_r = noise.odom_rot_sigma * rot
    nx = rng.normal(0.0, sig_t) if sig_t > 0.0 else 0.0
    ny = rng.normal(0.0, sig_t) if sig_t > 0.0 else 0.0
    nr = rng.normal(0.0, sig_r) if sig_r > 0.0 else 0.0
    return Pose2(delta.x + nx, delta.y + ny, delta.theta + nr)


def simulate_imu(
    true_pose_history: list[Pose2],
    noise: NoiseModel,
    dt: float,
    rng: np.random.Generator | None = None,
    timestamp: float = 0.0,
) -> ImuSample:
    """IMU sample from the last poses: finite-difference yaw rate and planar
    body acceleration, with gravity on +z (the robot never tilts)."""
    if len(true_pose_history) < 2:
        raise ValueError("need at least 2 poses of history")
    if rng is None:
        rng = noise.make_rng()
    p2 = true_pose_history[-1]
    p1 = true_pose_history[-2]
    gyro_z = wrap_angle(p2.theta - p1.theta) / dt
    if len(true_pose_history) >= 3:
        p0 = true_pose_history[-3]
        v1 = ((p1.x - p0.x) / dt, (p1.y - p0.y) / dt)
        v2 = ((p2.x - p1.x) / dt, (p2.y - p1.y) / dt)
        aw = ((v2[0] - v1[0]) / dt, (v2[1] - v1[1]) / dt)
    else:
        aw = (0.0, 0.0)
    c, s = math.cos(p2.theta), math.sin(p2.theta)
    ax = c * aw[0] + s * aw[1]
    ay = -s * aw[0] + c * aw[1]
    accel = np.array([ax, ay, GRAVITY])
    gyro = np.array([0.0, 0.0, gyro_z])
    if noise.imu_accel_sigma > 0.0:
        accel = accel + rng.normal(0.0, noise.imu_accel_sigma, size=3)
    if noise.imu_gyro_sigma > 0.0:
        gyro = gyro + rng.normal(0.0, noise.imu_gyro_sigma, size=3)
    return ImuSample(timestamp=timestamp, accel=tuple(float(v) for v in accel), gyro=tuple(float(v) for v in gyro))
