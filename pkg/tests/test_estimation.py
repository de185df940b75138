import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from packmap.estimation import OdomState, Quaternion, blend_yaw, fuse_odometry, madgwick_update
from packmap.se2 import Pose2, wrap_angle
from packmap.world import ImuSample


def quat_from_axis_angle(ax, ay, az, angle):
    n = math.sqrt(ax * ax + ay * ay + az * az)
    s = math.sin(angle / 2.0)
    return Quaternion(math.cos(angle / 2.0), ax / n * s, ay / n * s, az / n * s)


def static_sample(q_true: Quaternion) -> ImuSample:
    """Accel a tilted-but-static IMU would measure: gravity in the body frame."""
    # body = R(q)^T * world; use the conjugate rotation
    conj = Quaternion(q_true.w, -q_true.x, -q_true.y, -q_true.z)
    g = conj.rotate_vector((0.0, 0.0, 9.81))
    return ImuSample(0.0, g, (0.0, 0.0, 0.0))


class TestMadgwick:
    def test_gravity_aligned_fixed_point(self):
        q = Quaternion()
        imu = ImuSample(0.0, (0.0, 0.0, 9.81), (0.0, 0.0, 0.0))
        out = madgwick_update(q, imu, beta=0.1, dt=0.01)
        assert out.w == pytest.approx(1.0, abs=1e-12)
        assert (out.x, out.y, out.z) == pytest.approx((0, 0, 0), abs=1e-12)

    def test_beta_zero_pure_yaw_integration(self):
        q = Quaternion()
        dt = 1e-3
        imu = ImuSample(0.0, (0.0, 0.0, 9.81), (0.0, 0.0, 1.0))
        out = madgwick_update(q, imu, beta=0.0, dt=dt)
        assert out.yaw() == pytest.approx(dt, rel=1e-6)

    def test_zero_accel_falls_back_to_gyro(self):
        q = Quaternion()
        imu = ImuSample(0.0, (0.0, 0.0, 0.0), (0.0, 0.0, 0.5))
        out = madgwick_update(q, imu, beta=0.5, dt=0.01)
        assert out.yaw() == pytest.approx(0.005, abs=1e-7)

    def test_converges_from_10deg_tilt(self):
        q_true = quat_from_axis_angle(1, 0, 0, math.radians(10.0))
        imu = static_sample(q_true)
        q = Quaternion()  # estimate starts level -> 10 deg of tilt error
        assert math.degrees(q.tilt_error_to_gravity(imu.accel)) == pytest.approx(10.0, abs=1e-6)
        for _ in range(200):  # 2 s at 100 Hz
            q = madgwick_update(q, imu, beta=0.1, dt=0.01)
        assert math.degrees(q.tilt_error_to_gravity(imu.accel)) < 1.0

    def test_norm_stable_over_many_steps(self):
        rng = np.random.default_rng(0)
        q = Quaternion()
        for _ in range(10_000):
            imu = ImuSample(
                0.0,
                tuple(rng.normal(0, 2, 3) + [0, 0, 9.81]),
                tuple(rng.normal(0, 1, 3)),
            )
            q = madgwick_update(q, imu, beta=0.1, dt=0.005)
            assert abs(q.norm() - 1.0) < 1e-6


class TestFusion:
    def test_alpha_zero_pure_odometry(self):
        s = OdomState(Pose2(1, 1, 0.5), 0.0)
        out = fuse_odometry(s, Pose2(0.1, 0, 0.2), imu_yaw=2.0, alpha=0.0)
        want = s.pose.compose(Pose2(0.1, 0, 0.2))
        assert out.pose.as_tuple() == pytest.approx(want.as_tuple())

    def test_alpha_one_takes_imu_yaw(self):
        s = OdomState(Pose2(0, 0, 0), 0.0)
        out = fuse_odometry(s, Pose2(0.1, 0, 0.0), imu_yaw=1.234, alpha=1.0)
        assert out.pose.theta == pytest.approx(1.234)

    def test_wrap_aware_mean(self):
        # 179 deg and -179 deg average to +-180, never 0.
        got = blend_yaw(math.radians(179.0), math.radians(-179.0), 0.5)
        assert abs(got) == pytest.approx(math.pi, abs=1e-9)

    def test_wrap_aware_mean_oracle(self):
        # oracle: mean direction on the unit circle
        rng = np.random.default_rng(3)
        for _ in range(100):
            a, b = rng.uniform(-math.pi, math.pi, 2)
            if abs(wrap_angle(b - a)) > math.pi - 1e-3:
                continue  # antipodal: mean direction ill-defined
            got = blend_yaw(a, b, 0.5)
            want = math.atan2(
                (math.sin(a) + math.sin(b)) / 2.0, (math.cos(a) + math.cos(b)) / 2.0
            )
            assert wrap_angle(got - want) == pytest.approx(0.0, abs=1e-9)

    @given(
        yaw_a=st.floats(-3.0, 3.0),
        yaw_b=st.floats(-3.0, 3.0),
        alpha=st.floats(0.0, 1.0),
    )
    def test_invariant_under_2pi_shifts(self, yaw_a, yaw_b, alpha):
        base = blend_yaw(yaw_a, yaw_b, alpha)
        shifted_a = blend_yaw(yaw_a + 2 * math.pi, yaw_b, alpha)
        shifted_b = blend_yaw(yaw_a, yaw_b - 2 * math.pi, alpha)
        assert wrap_angle(base - shifted_a) == pytest.approx(0.0, abs=1e-9)
        assert wrap_angle(base - shifted_b) == pytest.approx(0.0, abs=1e-9)

    def test_bad_alpha_rejected(self):
        with pytest.raises(ValueError):
            fuse_odometry(OdomState(Pose2(), 0.0), Pose2(), 0.0, alpha=1.5)
