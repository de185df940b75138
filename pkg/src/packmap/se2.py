"""Planar rigid-motion (SE(2)) types and algebra shared by every subsystem.

Poses are (x, y, theta) with theta always wrapped to (-pi, pi]. Composition
follows the usual convention: ``a.compose(b)`` places ``b`` in ``a``'s frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    wrapped -= math.pi
    if wrapped == -math.pi:
        return math.pi
    return wrapped


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    """Vectorized :func:`wrap_angle` mapping to (-pi, pi]."""
    wrapped = np.mod(np.asarray(theta, dtype=float) + np.pi, TWO_PI) - np.pi
    return np.where(wrapped == -np.pi, np.pi, wrapped)


@dataclass(frozen=True, slots=True)
class Pose2:
    """SE(2) pose; theta is wrapped at construction."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))

    def compose(self, other: "Pose2") -> "Pose2":
        """Return self * other (other expressed in self's frame)."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(-(c * self.x + s * self.y), -(-s * self.x + c * self.y), -self.theta)

    def delta_to(self, other: "Pose2") -> "Pose2":
        """Relative motion taking self to other, expressed in self's frame."""
        return self.inverse().compose(other)

    def apply(self, x: float, y: float) -> tuple[float, float]:
        """Map a point from this pose's frame into the parent frame."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return self.x + c * x - s * y, self.y + s * x + c * y

    def apply_points(self, pts: np.ndarray) -> np.ndarray:
        """Map an (N, 2) array of points into the parent frame."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        pts = np.asarray(pts, dtype=float)
        out = np.empty_like(pts)
        out[:, 0] = self.x + c * pts[:, 0] - s * pts[:, 1]
        out[:, 1] = self.y + s * pts[:, 0] + c * pts[:, 1]
        return out

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.theta)

    def translation_norm(self) -> float:
        return math.hypot(self.x, self.y)


def compose_se2(a: Pose2, b: Pose2) -> Pose2:
    """Functional alias for :meth:`Pose2.compose`."""
    return a.compose(b)


@dataclass(frozen=True, slots=True)
class Twist2:
    """Body-frame velocity command: forward, lateral, yaw rate."""

    vx: float = 0.0
    vy: float = 0.0
    wz: float = 0.0

    def clamped(self, vx_max: float = 0.3, vy_max: float = 0.3, wz_max: float = 1.0) -> "Twist2":
        return Twist2(
            min(max(self.vx, -vx_max), vx_max),
            min(max(self.vy, -vy_max), vy_max),
            min(max(self.wz, -wz_max), wz_max),
        )

    def within_limits(self, vx_max: float = 0.3, vy_max: float = 0.3, wz_max: float = 1.0) -> bool:
        return abs(self.vx) <= vx_max and abs(self.vy) <= vy_max and abs(self.wz) <= wz_max
