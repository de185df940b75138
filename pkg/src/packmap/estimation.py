"""Odometry pipeline: Madgwick orientation from raw IMU, SE(2) odometry
integration, and complementary yaw fusion.

The Madgwick step is the IMU-only (gyro+accel) variant: gyro quaternion
integration corrected by one normalized gradient-descent step toward gravity
alignment, scaled by beta. No magnetometer, so yaw is corrected only by the
odometry blend downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from packmap.se2 import Pose2, wrap_angle
from packmap.world import ImuSample


@dataclass(frozen=True)
class Quaternion:
    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def normalized(self) -> "Quaternion":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize zero quaternion")
        return Quaternion(self.w / n, self.x / n, self.y / n, self.z / n)

    def multiply(self, o: "Quaternion") -> "Quaternion":
        return Quaternion(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )

    def rotate_vector(self, v: tuple[float, float, float]) -> tuple[float, float, float]:
        """Rotate a world vector by this orientation (body->world uses inverse)."""
        q = self
        vx, vy, vz = v
        # q * (0, v) * q_conj
        tw = -q.x * vx - q.y * vy - q.z * vz
        tx = q.w * vx + q.y * vz - q.z * vy
        ty = q.w * vy + q.z * vx - q.x * vz
        tz = q.w * vz + q.x * vy - q.y * vx
        return (
            -tw * q.x + tx * q.w - ty * q.z + tz * q.y,
            -tw * q.y + ty * q.w - tz * q.x + tx * q.z,
            -tw * q.z + tz * q.w - tx * q.y + ty * q.x,
        )

    def yaw(self) -> float:
        """Z-axis (heading) angle, ZYX convention."""
        return math.atan2(2.0 * (self.w * self.z + self.x * self.y), 1.0 - 2.0 * (self.y**2 + self.z**2))

    def tilt_error_to_gravity(self, accel: tuple[float, float, float]) -> float:
        """Angle between the accelerometer direction and where this orientation
        expects gravity; 0 when roll/pitch agree."""
        ax, ay, az = accel
        n = math.sqrt(ax * ax + ay * ay + az * az)
        if n == 0.0:
            return 0.0
        # expected gravity direction in body frame
        gx = 2.0 * (self.x * self.z - self.w * self.y)
        gy = 2.0 * (self.w * self.x + self.y * self.z)
        gz = self.w**2 - self.x**2 - self.y**2 + self.z**2
        dot = (ax * gx + ay * gy + az * gz) / n
        return math.acos(max(-1.0, min(1.0, dot)))


def madgwick_update(q: Quaternion, imu: ImuSample, beta: float, dt: float) -> Quaternion:
    """One IMU-only Madgwick step; result renormalized.

    Zero-norm accelerometer readings fall back to pure gyro integration for
    the step (no gravity correction is possible).
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    if beta < 0.0:
        raise ValueError("beta must be >= 0")
    gx, gy, gz = imu.gyro
    rate = Quaternion(0.0, gx, gy, gz)
    q_dot = q.multiply(rate)
    q_dot = Quaternion(0.5 * q_dot.w, 0.5 * q_dot.x, 0.5 * q_dot.y, 0.5 * q_dot.z)

    ax, ay, az = imu.accel
    a_norm = math.sqrt(ax * ax + ay * ay + az * az)
    if a_norm > 0.0 and beta > 0.0:
        ax, ay, az = ax / a_norm, ay / a_norm, az / a_norm
        w, x, y, z = q.w, q.x, q.y, q.z
        # objective: rotated gravity minus measured direction
        f1 = 2.0 * (x * z - w * y) - ax
        f2 = 2.0 * (w * x + y * z) - ay
        f3 = 2.0 * (0.5 - x * x - y * y) - az
        # gradient = J^T f
        s0 = -2.0 * y * f1 + 2.0 * x * f2
        s1 = 2.0 * z * f1 + 2.0 * w * f2 - 4.0 * x * f3
        s2 = -2.0 * w * f1 + 2.0 * z * f2 - 4.0 * y * f3
        s3 = 2.0 * x * f1 + 2.0 * y * f2
        s_norm = math.sqrt(s0 * s0 + s1 * s1 + s2 * s2 + s3 * s3)
        if s_norm > 0.0:
            q_dot = Quaternion(
                q_dot.w - beta * s0 / s_norm,
                q_dot.x - beta * s1 / s_norm,
                q_dot.y - beta * s2 / s_norm,
                q_dot.z - beta * s3 / s_norm,
            )
    q_new = Quaternion(
        q.w + q_dot.w * dt,
        q.x + q_dot.x * dt,
        q.y + q_dot.y * dt,
        q.z + q_dot.z * dt,
    )
    return q_new.normalized()


@dataclass(frozen=True)
class OdomState:
    pose: Pose2
    timestamp: float


def blend_yaw(yaw_a: float, yaw_b: float, alpha: float) -> float:
    """Wrap-aware interpolation from yaw_a toward yaw_b by alpha in [0, 1]."""
    return wrap_angle(yaw_a + alpha * wrap_angle(yaw_b - yaw_a))


def fuse_odometry(state: OdomState, odom_delta: Pose2, imu_yaw: float, alpha: float, timestamp: float | None = None) -> OdomState:
    """Compose the odometry delta, then blend heading toward the IMU yaw.

    alpha = 0 reproduces pure odometry; alpha = 1 takes the IMU yaw exactly.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    raw = state.pose.compose(odom_delta)
    fused_yaw = blend_yaw(raw.theta, imu_yaw, alpha)
    t = state.timestamp if timestamp is None else timestamp
    return OdomState(pose=Pose2(raw.x, raw.y, fused_yaw), timestamp=t)
