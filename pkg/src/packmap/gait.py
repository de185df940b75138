"""Low-level locomotion layer: trot gait, 2-link leg IK, servo calibration,
and the byte-exact command frame that crosses the HL->LL boundary.

Joint order is 4 legs x (shoulder, thigh, shin), legs ordered FL, FR, RL, RR.
Thigh angles are measured from straight-down (positive forward), shin angles
are knee flexion from fully extended (knee-backward branch). Angles produced
by the gait are joint-local and may be negative; calibration shifts them into
the servos' 0-180 degree range of motion and clamps.
"""

from __future__ import annotations

import math
import queue
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from packmap.se2 import Twist2

LEG_NAMES = ("fl", "fr", "rl", "rr")
JOINT_NAMES = tuple(f"{leg}_{joint}" for leg in LEG_NAMES for joint in ("shoulder", "thigh", "shin"))
SYNC_BYTE = 0xA5
FRAME_LENGTH = 14  # sync + 12 angles + checksum


class WorkspaceError(ValueError):
    """IK target outside the leg's reachable annulus."""


class FrameError(ValueError):
    """Base class for LL frame decode failures."""


class FrameLengthError(FrameError):
    pass


class FrameSyncError(FrameError):
    pass


class FrameChecksumError(FrameError):
    pass


@dataclass(frozen=True)
class ServoCommand:
    """12 joint angles in degrees. The [0, 180] ROM invariant is enforced at
    the module exits (calibration clamps, the wire encoder rejects)."""

    angles: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.angles) != 12:
            raise ValueError("ServoCommand needs exactly 12 angles")
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))

    def within_rom(self) -> bool:
        return all(0.0 <= a <= 180.0 for a in self.angles)

    def as_array(self) -> np.ndarray:
        return np.array(self.angles, dtype=float)


@dataclass(frozen=True)
class CalibrationTable:
    offsets: tuple[float, ...]
    zero_pose: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.offsets) != 12 or len(self.zero_pose) != 12:
            raise ValueError("calibration needs 12 offsets and 12 zero-pose angles")
        for z, o in zip(self.zero_pose, self.offsets):
            if not 0.0 <= z + o <= 180.0:
                raise ValueError(f"zero_pose + offset = {z + o} outside [0, 180]")

    @classmethod
    def neutral(cls) -> "CalibrationTable":
        zero = tuple(90.0 if i % 3 == 0 else 45.0 for i in range(12))
        return cls(offsets=(0.0,) * 12, zero_pose=zero)


def load_calibration(path: str | Path) -> CalibrationTable:
    """Parse a calibration file: 12 lines of ``joint_name zero offset``."""
    entries: dict[str, tuple[float, float]] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'joint_name zero offset'")
        entries[parts[0]] = (float(parts[1]), float(parts[2]))
    missing = [n for n in JOINT_NAMES if n not in entries]
    if missing:
        raise ValueError(f"{path}: missing joints {missing}")
    zero = tuple(entries[n][0] for n in JOINT_NAMES)
    off = tuple(entries[n][1] for n in JOINT_NAMES)
    return CalibrationTable(offsets=off, zero_pose=zero)


@dataclass(frozen=True)
class GaitParams:
    # Defaults keep joint rates gentle enough that adjacent 50 Hz control
    # ticks never jump a joint by 5 degrees, even at the command limits.
    cycle_period: float = 0.8
    duty_factor: float = 0.35
    step_height: float = 0.025
    stance_depth: float = 0.04
    l1: float = 0.09
    l2: float = 0.09
    hip_x: float = 0.12  # half the hip wheelbase
    hip_y: float = 0.08  # half the hip track width
    lateral_gain_deg: float = 30.0  # shoulder degrees per m/s of lateral sweep

    def __post_init__(self) -> None:
        if not 0.0 < self.duty_factor < 1.0:
            raise ValueError("duty_factor must be in (0, 1)")
        if not self.step_height < self.l1 + self.l2 - self.stance_depth:
            raise ValueError("step_height must leave the foot reachable at full lift")

    @property
    def stand_height(self) -> float:
        return self.l1 + self.l2 - self.stance_depth


# Hip positions (x forward, y left) per leg, units of (hip_x, hip_y).
_HIP_SIGNS = np.array([[+1, +1], [+1, -1], [-1, +1], [-1, -1]], dtype=float)  # FL FR RL RR
_PAIR_OFFSET = np.array([0.0, 0.5, 0.5, 0.0])  # FL/RR together, FR/RL half a cycle later


def _ik_arrays(foot_forward: np.ndarray, foot_down: np.ndarray, l1: float, l2: float):
    """Vectorized planar 2-link IK, knee-backward branch (degrees)."""
    f = np.asarray(foot_forward, dtype=float)
    d = np.asarray(foot_down, dtype=float)
    r2 = f * f + d * d
    r = np.sqrt(r2)
    lo, hi = abs(l1 - l2), l1 + l2
    bad = (r < lo - 1e-12) | (r > hi + 1e-12)
    if bad.any():
        raise WorkspaceError(f"IK target at r={float(np.asarray(r)[bad].flat[0]):.4f} outside [{lo:.4f}, {hi:.4f}]")
    cos_flex = np.clip((r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2), -1.0, 1.0)
    flex = np.arccos(cos_flex)  # 0 = fully extended
    phi = np.arctan2(f, d)  # from straight-down toward forward
    alpha = np.arctan2(l2 * np.sin(flex), l1 + l2 * np.cos(flex))
    thigh = np.degrees(phi + alpha)
    shin = np.degrees(flex)
    return thigh, shin


def leg_ik(foot_forward: float, foot_down: float, l1: float, l2: float) -> tuple[float, float]:
    """Planar 2-link IK for one leg; returns (thigh_deg, shin_deg)."""
    thigh, shin = _ik_arrays(np.array([foot_forward]), np.array([foot_down]), l1, l2)
    return float(thigh[0]), float(shin[0])


def leg_fk(thigh_deg: float, shin_deg: float, l1: float, l2: float) -> tuple[float, float]:
    """Forward kinematics matching :func:`leg_ik` conventions."""
    t = math.radians(thigh_deg)
    s = math.radians(shin_deg)
    forward = l1 * math.sin(t) + l2 * math.sin(t - s)
    down = l1 * math.cos(t) + l2 * math.cos(t - s)
    return forward, down


def _sweep_profile(leg_phase: np.ndarray, duty: float):
    """Normalized foot sweep p in [-1, 1] plus swing-lift fraction in [0, 1].

    Stance (phase < duty) sweeps linearly +1 -> -1; swing returns on a cosine
    with a sinusoidal lift. Continuous across both transitions.
    """
    lp = np.mod(leg_phase, 1.0)
    stance = lp < duty
    tau_st = lp / duty
    tau_sw = (lp - duty) / (1.0 - duty)
    p = np.where(stance, 1.0 - 2.0 * tau_st, -1.0 + (1.0 - np.cos(math.pi * tau_sw)))
    lift = np.where(stance, 0.0, np.sin(math.pi * tau_sw))
    return p, lift


def gait_joint_angles(
    vx: np.ndarray, vy: np.ndarray, wz: np.ndarray, phase: np.ndarray, params: GaitParams
) -> np.ndarray:
    """Batch gait solver: (N,) command components -> (N, 12) joint-local degrees.

    This is the full gait computation; :func:`twist_to_joints` is the scalar
    wrapper. Kept batchable so bulk property checks run at array speed.
    """
    vx = np.atleast_1d(np.asarray(vx, dtype=float))
    vy = np.atleast_1d(np.asarray(vy, dtype=float))
    wz = np.atleast_1d(np.asarray(wz, dtype=float))
    phase = np.atleast_1d(np.asarray(phase, dtype=float))
    n = vx.shape[0]
    out = np.empty((n, 12), dtype=float)

    stance_time = params.cycle_period * params.duty_factor
    moving = (np.abs(vx) + np.abs(vy) + np.abs(wz)) > 1e-12

    for leg in range(4):
        hx = _HIP_SIGNS[leg, 0] * params.hip_x
        hy = _HIP_SIGNS[leg, 1] * params.hip_y
        v_leg_x = vx - wz * hy
        v_leg_y = vy + wz * hx
        p, lift = _sweep_profile(phase + _PAIR_OFFSET[leg], params.duty_factor)
        lift = np.where(moving, lift, 0.0)
        foot_x = 0.5 * v_leg_x * stance_time * p
        foot_down = params.stand_height - params.step_height * lift
        thigh, shin = _ik_arrays(foot_x, foot_down, params.l1, params.l2)
        shoulder = params.lateral_gain_deg * v_leg_y * p
        out[:, 3 * leg + 0] = shoulder
        out[:, 3 * leg + 1] = thigh
        out[:, 3 * leg + 2] = shin
    return out


def twist_to_joints(cmd: Twist2, phase: float, params: GaitParams) -> ServoCommand:
    """Trot-gait joint targets (uncalibrated) for one command at one phase."""
    angles = gait_joint_angles(
        np.array([cmd.vx]), np.array([cmd.vy]), np.array([cmd.wz]), np.array([phase]), params
    )
    return ServoCommand(angles=tuple(angles[0]))


def apply_calibration(raw: ServoCommand, cal: CalibrationTable) -> ServoCommand:
    """Shift joint-local angles into servo space and clamp to the 0-180 ROM."""
    vals = raw.as_array() + np.array(cal.zero_pose) + np.array(cal.offsets)
    return ServoCommand(angles=tuple(np.clip(vals, 0.0, 180.0)))


def ll_encode(cmd: ServoCommand) -> bytes:
    """Encode to the wire frame: sync, 12 angle bytes (whole degrees), checksum.

    Angles are quantized to the nearest degree; values outside [0, 180] are a
    caller error (calibrate first).
    """
    vals = [int(round(a)) for a in cmd.angles]
    if any(v < 0 or v > 180 for v in vals):
        raise ValueError("angles outside [0, 180]; apply calibration before encoding")
    payload = bytes(vals)
    checksum = sum(payload) % 256
    return bytes([SYNC_BYTE]) + payload + bytes([checksum])


def ll_decode(frame: bytes) -> ServoCommand:
    if len(frame) != FRAME_LENGTH:
        raise FrameLengthError(f"frame length {len(frame)} != {FRAME_LENGTH}")
    if frame[0] != SYNC_BYTE:
        raise FrameSyncError(f"bad sync byte 0x{frame[0]:02X}")
    payload = frame[1:13]
    if sum(payload) % 256 != frame[13]:
        raise FrameChecksumError("checksum mismatch")
    if any(v > 180 for v in payload):
        raise FrameError("angle byte above 180")
    return ServoCommand(angles=tuple(float(v) for v in payload))


class ServoLink:
    """Single-consumer HL->LL channel carrying encoded frames.

    The LL side decodes and keeps the latest commanded pose, mirroring a
    microcontroller that simply chases the last frame it heard.
    """

    def __init__(self, maxsize: int = 64) -> None:
        self._queue: queue.Queue[bytes] = queue.Queue(maxsize=maxsize)
        self.last_command: ServoCommand | None = None
        self.frames_received = 0

    def send(self, cmd: ServoCommand) -> None:
        self._queue.put(ll_encode(cmd))

    def service(self) -> ServoCommand | None:
        """Drain pending frames (LL side); returns the newest decoded command."""
        newest = None
        while True:
            try:
                frame = self._queue.get_nowait()
            except queue.Empty:
                break
            newest = ll_decode(frame)
            self.frames_received += 1
        if newest is not None:
            self.last_command = newest
        return newest
