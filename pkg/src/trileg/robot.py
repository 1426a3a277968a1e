"""Quasi-static simulator of the tri-leg robot.

The robot sits in a 50 x 50 mm workspace under three orthogonal coil
pairs.  Morphology tracks the applied voltages through calibrated
piecewise-linear response tables:

* Vertical drive ``vz`` bends all three legs together; body height relaxes
  toward the squat curve value (negative voltage lifts the body, positive
  squats it).
* Horizontal drive creates per-leg hinge torques.  The legs are magnetized
  along their axes with a downward tilt, so the differential hinge torque
  on leg ``l`` is proportional to ``-(B_h . r_l)``: driving the field away
  from a leg lifts it, driving toward a leg presses it down and lifts the
  other two once the torque threshold is cleared.
* Alternating horizontal drive walks the robot.  A footstep fires on each
  drive sign flip whose preceding lobe peak exceeded the stiction deadband;
  the stride direction is the sign of the lobe that opened the stride, and
  each footstep covers half of the per-cycle step-curve displacement.
* With exactly one leg anchored (the other two torque-lifted), horizontal
  drive pivots the body about the anchor at ``rot_rate`` degrees per step
  per volt above the deadband, signed by the drive's tangential component.

All state transitions are deterministic given the seed; identical voltage
sequences reproduce trajectories bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .actuation import CoilMatrix, GaitSignal, VoltageTriple, drive_sign, gait_sample
from .config import WORKSPACE_MM, Config, RobotConfig, SimConfig
from .errors import ValidationError

SQUAT_MIN_MM = -5.0  # z excursion limits relative to rest height
LIFT_MAX_MM = 3.0
_QUIET_RESET_STEPS = 5  # zero-drive steps before a stride tracker resets


@dataclass(frozen=True)
class RobotState:
    """Snapshot of the robot's pose and morphology at one control step."""

    x: float
    y: float
    psi: float
    z: float
    h: tuple[float, float, float]
    v: VoltageTriple
    t: int

    @property
    def p(self) -> tuple[float, float]:
        return (self.x, self.y)

    def as_dict(self) -> dict:
        return {
            "p": [self.x, self.y],
            "psi": self.psi,
            "z": self.z,
            "h": list(self.h),
            "v": [self.v.vx, self.v.vy, self.v.vz],
            "t": self.t,
        }


class ResponseCurves:
    """Piecewise-linear voltage-response tables digitized from bench data."""

    def __init__(self, robot_cfg: RobotConfig) -> None:
        self.squat_x, self.squat_y = _anchor_arrays("squat_curve", robot_cfg.squat_curve)
        self.step_x, self.step_y = _anchor_arrays("step_curve", robot_cfg.step_curve)
        self.lift_x, self.lift_y = _anchor_arrays("lift_curve", robot_cfg.lift_curve)
        if robot_cfg.stiction_v <= 0:
            raise ValidationError("stiction_v must be positive")
        self.stiction_v = float(robot_cfg.stiction_v)
        self.rot_rate_deg = float(robot_cfg.rot_rate_deg)


def _anchor_arrays(name: str, anchors) -> tuple[np.ndarray, np.ndarray]:
    if not anchors:
        raise ValidationError(f"{name}: empty anchor table")
    arr = np.asarray(anchors, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError(f"{name}: anchors must be (volts, mm) pairs")
    xs = np.ascontiguousarray(arr[:, 0])
    ys = np.ascontiguousarray(arr[:, 1])
    if np.any(np.diff(xs) <= 0):
        raise ValidationError(f"{name}: anchor volts must be strictly increasing")
    return xs, ys


def eval_curve(curve: tuple[np.ndarray, np.ndarray] | list, v: float) -> float:
    """Interpolate a (volts, mm) anchor table, constant beyond the ends."""
    if isinstance(curve, tuple):
        xs, ys = curve
    else:
        xs, ys = _anchor_arrays("curve", curve)
    return float(kernels.interp_clamped(xs, ys, float(v)))


class LegGeometry:
    """Leg magnetization directions, hinge axes and the lift threshold.

    The three legs sit 120 degrees apart in the body plane; their
    magnetization tilts ``leg_tilt_deg`` below the plane, which is what
    gives horizontal fields a grip on individual legs.
    """

    def __init__(self, robot_cfg: RobotConfig) -> None:
        az = np.deg2rad(np.asarray(robot_cfg.leg_azimuth_deg, dtype=np.float64))
        if az.shape != (3,):
            raise ValidationError("exactly three legs expected")
        self.azimuth = az
        self.tilt = math.radians(robot_cfg.leg_tilt_deg)
        if not (0.0 < self.tilt < math.pi / 2):
            raise ValidationError("leg tilt must be in (0, 90) degrees")
        self.moment = float(robot_cfg.magnet_moment_am2)
        if self.moment <= 0:
            raise ValidationError("magnet moment must be positive")
        self.lift_threshold_nm = float(robot_cfg.lift_threshold_nm)
        if self.lift_threshold_nm <= 0:
            raise ValidationError("lift threshold must be positive")

    def moment_body(self, leg: int) -> np.ndarray:
        """Unit magnetization of ``leg`` in the body frame."""
        c, s = math.cos(self.tilt), math.sin(self.tilt)
        a = self.azimuth[leg]
        return np.array([c * math.cos(a), c * math.sin(a), -s])

    def leg_dir_world(self, leg: int, psi: float) -> tuple[float, float]:
        a = self.azimuth[leg] + psi
        return (math.cos(a), math.sin(a))

    def hinge_torques(self, psi: float, b_h: tuple[float, float]) -> np.ndarray:
        """Differential hinge-axis torque per leg (N*m) from a horizontal field.

        The common-mode component (all legs bending together under a
        vertical field) is the squat degree of freedom and is excluded.
        """
        out = np.empty(3)
        s = math.sin(self.tilt)
        for leg in range(3):
            rx, ry = self.leg_dir_world(leg, psi)
            out[leg] = -self.moment * s * (b_h[0] * rx + b_h[1] * ry)
        return out


class _StrideTracker:
    """Per-axis bookkeeping for the alternating gait.

    A stride is two footsteps (one full drive cycle).  The lobe that opens
    a stride fixes the walk direction; each sign flip whose lobe peak beat
    the stiction threshold fires one footstep.
    """

    __slots__ = ("last_sign", "lobe_peak", "lead_sign", "flips", "quiet")

    def __init__(self) -> None:
        self.reset()

    def reset(self) -> None:
        self.last_sign = 0
        self.lobe_peak = 0.0
        self.lead_sign = 0
        self.flips = 0
        self.quiet = 0

    def update(self, v: float) -> tuple[bool, float, int]:
        """Feed one drive sample; returns (flip_fired, ended_lobe_peak, lead)."""
        s = drive_sign(v)
        if s == 0:
            self.quiet += 1
            if self.quiet >= _QUIET_RESET_STEPS:
                self.reset()
            return (False, 0.0, 0)
        self.quiet = 0
        if self.lead_sign == 0:
            self.lead_sign = s
        if self.last_sign == 0 or s == self.last_sign:
            self.last_sign = s
            self.lobe_peak = max(self.lobe_peak, abs(v))
            return (False, 0.0, 0)
        # Sign flip: the previous lobe ended.
        ended_peak = self.lobe_peak
        lead = self.lead_sign
        self.flips += 1
        if self.flips >= 2:
            self.flips = 0
            self.lead_sign = s
        self.last_sign = s
        self.lobe_peak = abs(v)
        return (True, ended_peak, lead)


class Simulator:
    """Single-owner state machine advancing the robot at the control rate."""

    def __init__(self, config: Config | None = None) -> None:
        self.config = (config or Config()).validate()
        self.curves = ResponseCurves(self.config.robot)
        self.geometry = LegGeometry(self.config.robot)
        self.coil = CoilMatrix(self.config.actuation.k)
        self.sim_cfg: SimConfig = self.config.sim
        self.z0 = float(self.config.robot.z0_mm)
        self.contact_eps = float(self.config.robot.contact_eps_mm)
        self.relax = float(self.config.robot.relax)
        self._trackers = (_StrideTracker(), _StrideTracker())
        self._rng = np.random.default_rng(self.sim_cfg.seed)
        self.state = self._rest_state()

    # -- lifecycle -----------------------------------------------------

    def _rest_state(
        self, x: float | None = None, y: float | None = None, psi: float = 0.0
    ) -> RobotState:
        half = WORKSPACE_MM / 2.0
        return RobotState(
            x=half if x is None else x,
            y=half if y is None else y,
            psi=psi,
            z=self.z0,
            h=(0.0, 0.0, 0.0),
            v=VoltageTriple(),
            t=0,
        )

    def reset(self, seed: int | None = None, randomize_pose: bool = False) -> RobotState:
        """Return to a standing rest state, optionally at a seeded random pose."""
        if seed is None:
            seed = self.sim_cfg.seed
        self._rng = np.random.default_rng(seed)
        for tracker in self._trackers:
            tracker.reset()
        if randomize_pose:
            # Central 30 x 30 mm region, heading anywhere on the circle.
            x = float(self._rng.uniform(10.0, 40.0))
            y = float(self._rng.uniform(10.0, 40.0))
            psi = float(self._rng.uniform(0.0, 2.0 * math.pi))
            self.state = self._rest_state(x, y, psi)
        else:
            self.state = self._rest_state()
        return self.state

    # -- stepping ------------------------------------------------------

    def step(self, v_applied: VoltageTriple) -> RobotState:
        """Advance one 100 ms control step under an already-projected voltage."""
        state = self.state
        _validate_state(state, self.z0, self.contact_eps)
        v_applied.require_finite("applied voltage")
        if max(abs(v_applied.vx), abs(v_applied.vy), abs(v_applied.vz)) > self.config.actuation.v_max + 1e-9:
            raise ValidationError("applied voltage exceeds the safety envelope")

        cfg = self.sim_cfg
        b = self.coil.k @ v_applied.as_array()
        threshold = self.geometry.lift_threshold_nm

        # (a) body height relaxes toward the squat curve value
        z_target = self.z0 + eval_curve((self.curves.squat_x, self.curves.squat_y), v_applied.vz)
        z = state.z + self.relax * (z_target - state.z)
        z = min(max(z, self.z0 + SQUAT_MIN_MM), self.z0 + LIFT_MAX_MM)

        # (b) per-leg lift from differential hinge torque
        hinge = self.geometry.hinge_torques(state.psi, (b[0], b[1]))
        lifted = hinge > threshold
        field_scale = self.geometry.moment * math.sin(self.geometry.tilt)
        h_new = []
        for leg in range(3):
            if lifted[leg]:
                # Equivalent drive volts for the lift table: torque mapped
                # back through the nominal 1 mT/V field scale.
                u_volts = hinge[leg] / (field_scale * 1e-3)
                target = eval_curve((self.curves.lift_x, self.curves.lift_y), u_volts)
                h_new.append(state.h[leg] + self.relax * (target - state.h[leg]))
            else:
                # Without holding torque the leg falls back within one
                # control period; the instant drop also guarantees the
                # at-least-one-contact invariant (per-leg drives sum to
                # zero, so at most two legs carry lift torque).
                h_new.append(0.0)

        # (c) footsteps from alternating drive
        x, y = state.x, state.y
        stiction = self.curves.stiction_v * cfg.friction_scale
        fired_any = False
        for axis, v_axis in ((0, v_applied.vx), (1, v_applied.vy)):
            fired, peak, lead = self._trackers[axis].update(v_axis)
            if fired and peak > stiction:
                advance = eval_curve((self.curves.step_x, self.curves.step_y), lead * peak) / 2.0
                ex, ey = _axis_world(axis, state.psi)
                x += advance * ex
                y += advance * ey
                fired_any = True

        # (d) pivot about a single anchored leg
        psi = state.psi
        v_h = math.hypot(v_applied.vx, v_applied.vy)
        if not fired_any and int(np.count_nonzero(lifted)) == 2 and v_h > stiction:
            anchor = int(np.flatnonzero(~lifted)[0])
            rx, ry = self.geometry.leg_dir_world(anchor, state.psi)
            s_rot = drive_sign(v_applied.vx * ry - v_applied.vy * rx)
            if s_rot != 0:
                psi += s_rot * math.radians(self.curves.rot_rate_deg) * (v_h - stiction)

        # (e) optional displacement noise, then workspace containment
        if cfg.noise_std_mm > 0.0:
            x += float(self._rng.normal(0.0, cfg.noise_std_mm))
            y += float(self._rng.normal(0.0, cfg.noise_std_mm))
        x = min(max(x, 0.0), WORKSPACE_MM)
        y = min(max(y, 0.0), WORKSPACE_MM)

        self.state = RobotState(
            x=x, y=y, psi=psi, z=z, h=(h_new[0], h_new[1], h_new[2]),
            v=v_applied, t=state.t + 1,
        )
        return self.state

    def run_gait_cycle(self, sig: GaitSignal) -> tuple[RobotState, float]:
        """Step through one full signal period; returns net displacement (mm).

        Displacement is measured along the drive axis rotated by the
        starting heading (zero for a vertical-axis signal, which cannot
        translate the centroid).
        """
        if sig.amplitude > self.config.actuation.v_max + 1e-9:
            raise ValidationError("gait amplitude exceeds the voltage cap")
        dt = self.sim_cfg.dt
        n_steps = int(round(1.0 / (sig.frequency * dt)))
        if n_steps < 2:
            raise ValidationError("gait period must span at least two control steps")
        start = self.state
        for k in range(n_steps):
            sample = gait_sample(sig, k * dt)
            v = {
                "x": VoltageTriple(sample, 0.0, 0.0),
                "y": VoltageTriple(0.0, sample, 0.0),
                "z": VoltageTriple(0.0, 0.0, sample),
            }[sig.axis]
            self.step(v)
        dx = self.state.x - start.x
        dy = self.state.y - start.y
        if sig.axis == "z":
            return self.state, float(math.hypot(dx, dy))
        ex, ey = _axis_world({"x": 0, "y": 1}[sig.axis], start.psi)
        return self.state, float(dx * ex + dy * ey)

    # -- introspection -------------------------------------------------

    def torque_lifted_mask(self, state: RobotState, v: VoltageTriple) -> np.ndarray:
        """Which legs the given drive would lift from the given state."""
        b = self.coil.k @ v.as_array()
        return self.geometry.hinge_torques(state.psi, (b[0], b[1])) > self.geometry.lift_threshold_nm


def _axis_world(axis: int, psi: float) -> tuple[float, float]:
    c, s = math.cos(psi), math.sin(psi)
    return (c, s) if axis == 0 else (-s, c)


def _validate_state(state: RobotState, z0: float, contact_eps: float) -> None:
    values = [state.x, state.y, state.psi, state.z, *state.h]
    if not all(math.isfinite(v) for v in values):
        raise ValidationError("non-finite robot state")
    if not (0.0 <= state.x <= WORKSPACE_MM and 0.0 <= state.y <= WORKSPACE_MM):
        raise ValidationError("centroid outside workspace")
    if not (z0 + SQUAT_MIN_MM - 1e-9 <= state.z <= z0 + LIFT_MAX_MM + 1e-9):
        raise ValidationError("body height out of range")
    if any(h < 0 for h in state.h):
        raise ValidationError("negative leg height")
    if min(state.h) > contact_eps:
        raise ValidationError("no leg in contact")


def replace_state(state: RobotState, **kw) -> RobotState:
    """Functional update helper for tests and tooling."""
    return replace(state, **kw)
