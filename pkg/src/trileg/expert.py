"""Scripted expert: parses motion instructions and drives the simulator.

The controller is a small finite-state machine over gait phases.  Walking
follows the crouch / lift / alternate decomposition; rotation parks the
robot on a single anchored leg and holds a pivot drive; recovery ramps all
axes back to zero.  Every emitted increment is feasible, so the expert
never trips the safety guard.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

from .actuation import SafetyEnvelope, VoltageTriple, apply_increment, realized_increment
from .config import Config
from .errors import InstructionParseError
from .primitives import (
    Kind,
    PrimitiveSpec,
    TrialResult,
    check_frame,
    judge_trial,
    wrap_angle_deg,
)
from .robot import RobotState, Simulator

# Drive levels (volts).  The pivot drive needs both lifted legs above the
# 1.2 V torque onset: their per-leg drive is beta/2 -/+ 0.866*gamma, so
# beta = 2.47 with |gamma| = 0.02 leaves ~0.017 V of margin while the
# vector norm stays inside the per-axis 2.5 V cap at any heading.
GAIT_DRIVE_V = 2.0
LIFT_DRIVE_V = 2.0
PIVOT_RADIAL_V = 2.47
PIVOT_TANGENTIAL_V = 0.02
WALK_CROUCH_V = 1.4
FORWARD_STOP_MARGIN_MM = 0.5


class Phase(str, Enum):
    IDLE = "idle"
    CROUCH = "crouch"
    LIFT_A = "lift_a"
    SWING_A = "swing_a"
    LIFT_B = "lift_b"
    SWING_B = "swing_b"
    RECOVER = "recover"


LEGAL_TRANSITIONS: frozenset[tuple[Phase, Phase]] = frozenset(
    {
        (Phase.IDLE, Phase.CROUCH),
        (Phase.CROUCH, Phase.LIFT_A),
        (Phase.LIFT_A, Phase.SWING_A),
        (Phase.SWING_A, Phase.LIFT_B),
        (Phase.LIFT_B, Phase.SWING_B),
        (Phase.SWING_B, Phase.LIFT_A),
        (Phase.IDLE, Phase.RECOVER),
        (Phase.CROUCH, Phase.RECOVER),
        (Phase.LIFT_A, Phase.RECOVER),
        (Phase.SWING_A, Phase.RECOVER),
        (Phase.LIFT_B, Phase.RECOVER),
        (Phase.SWING_B, Phase.RECOVER),
        (Phase.RECOVER, Phase.IDLE),
    }
)


@dataclass(frozen=True)
class GaitPhase:
    phase: Phase = Phase.IDLE
    steps_in_phase: int = 0


@dataclass(frozen=True)
class InstructionSpec:
    """Parsed motion instruction."""

    kind: Kind
    psi_star_deg: float | None = None
    target_leg: int | None = None
    distance_mm: float | None = None
    axis: str = "x"
    stand_up: bool = False  # recovery variant: return everything to rest


_KEYWORDS = {
    "SQUAT", "STAND_UP", "LIFT_LEG", "LIFT_BACK_LEG",
    "ROTATE_LEFT", "ROTATE_RIGHT", "FORWARD", "RECOVER",
}

BACK_LEG_INDEX = 0  # the leg at azimuth 180 degrees points backward


def parse_instruction(text: str) -> InstructionSpec:
    """Parse the constrained instruction grammar (case-insensitive).

    Examples: ``SQUAT``, ``LIFT_LEG 1``, ``ROTATE_LEFT 30``,
    ``FORWARD 10 X``, ``RECOVER 2``, ``STAND_UP``.
    """
    tokens = text.strip().split()
    if not tokens:
        raise InstructionParseError("empty instruction", 0)
    keyword = tokens[0].upper()
    if keyword not in _KEYWORDS:
        raise InstructionParseError(f"unknown keyword {tokens[0]!r}", 0)

    def number(idx: int, what: str) -> float:
        if idx >= len(tokens):
            raise InstructionParseError(f"missing {what}", idx)
        try:
            return float(tokens[idx])
        except ValueError:
            raise InstructionParseError(f"bad {what} {tokens[idx]!r}", idx) from None

    def no_extra(after: int) -> None:
        if len(tokens) > after:
            raise InstructionParseError(f"unexpected token {tokens[after]!r}", after)

    if keyword == "SQUAT":
        no_extra(1)
        return InstructionSpec(kind=Kind.SQUAT)
    if keyword == "STAND_UP":
        no_extra(1)
        return InstructionSpec(kind=Kind.RECOVERY, stand_up=True)
    if keyword == "LIFT_BACK_LEG":
        no_extra(1)
        return InstructionSpec(kind=Kind.LIFT_LEG, target_leg=BACK_LEG_INDEX)
    if keyword == "LIFT_LEG":
        leg = int(number(1, "leg index"))
        if not 0 <= leg <= 2:
            raise InstructionParseError(f"leg index {leg} out of range", 1)
        no_extra(2)
        return InstructionSpec(kind=Kind.LIFT_LEG, target_leg=leg)
    if keyword in ("ROTATE_LEFT", "ROTATE_RIGHT"):
        deg = number(1, "angle")
        if deg <= 0:
            raise InstructionParseError("rotation angle must be positive", 1)
        no_extra(2)
        if keyword == "ROTATE_LEFT":
            return InstructionSpec(kind=Kind.ROTATE_LEFT, psi_star_deg=deg)
        return InstructionSpec(kind=Kind.ROTATE_RIGHT, psi_star_deg=-deg)
    if keyword == "FORWARD":
        dist = number(1, "distance")
        if dist <= 0:
            raise InstructionParseError("distance must be positive", 1)
        axis = "x"
        if len(tokens) > 2:
            axis = tokens[2].lower()
            if axis not in ("x", "y"):
                raise InstructionParseError(f"bad axis {tokens[2]!r}", 2)
            no_extra(3)
        return InstructionSpec(kind=Kind.FORWARD, distance_mm=dist, axis=axis)
    # RECOVER <leg>
    leg = int(number(1, "leg index"))
    if not 0 <= leg <= 2:
        raise InstructionParseError(f"leg index {leg} out of range", 1)
    no_extra(2)
    return InstructionSpec(kind=Kind.RECOVERY, target_leg=leg)


def primitive_spec_for(instr: InstructionSpec, config: Config) -> PrimitiveSpec:
    """Success-criterion spec matching a parsed instruction."""
    cfg = config.primitives
    over: dict = {"contact_eps": config.robot.contact_eps_mm}
    if instr.kind in (Kind.ROTATE_LEFT, Kind.ROTATE_RIGHT):
        over["psi_star_deg"] = instr.psi_star_deg
    if instr.kind is Kind.FORWARD:
        over["d_fwd"] = instr.distance_mm if instr.distance_mm else cfg.d_fwd_mm
        over["axis"] = instr.axis
    if instr.kind in (Kind.LIFT_LEG, Kind.RECOVERY):
        over["target_leg"] = 0 if instr.target_leg is None else instr.target_leg
    return PrimitiveSpec.from_config(instr.kind, cfg, **over)


class ExpertPolicy:
    """Finite-state controller executing one instruction."""

    def __init__(self, instr: InstructionSpec, config: Config, sim: Simulator) -> None:
        self.instr = instr
        self.config = config
        self.sim = sim
        self.envelope = SafetyEnvelope(config.actuation.v_max, config.actuation.dv_max)
        self.gait = GaitPhase()
        self._origin: RobotState | None = None
        self._crouch_dwell = 3

    # -- helpers ---------------------------------------------------------

    def _toward(self, v: VoltageTriple, target: tuple[float, float, float]) -> VoltageTriple:
        cap = self.envelope.dv_max
        return VoltageTriple(
            min(max(target[0] - v.vx, -cap), cap),
            min(max(target[1] - v.vy, -cap), cap),
            min(max(target[2] - v.vz, -cap), cap),
        )

    def _advance(self, phase: Phase) -> None:
        if phase is self.gait.phase:
            self.gait = replace(self.gait, steps_in_phase=self.gait.steps_in_phase + 1)
        else:
            self.gait = GaitPhase(phase=phase, steps_in_phase=0)

    def _pivot_target(self, state: RobotState, direction: int) -> tuple[float, float, float]:
        """Drive toward anchor leg 0 plus a tangential nudge to set spin."""
        a = self.sim.geometry.azimuth[0] + state.psi
        rx, ry = math.cos(a), math.sin(a)
        tx, ty = -ry, rx
        gamma = -PIVOT_TANGENTIAL_V * direction
        return (PIVOT_RADIAL_V * rx + gamma * tx, PIVOT_RADIAL_V * ry + gamma * ty, 0.0)

    def _lift_target(self, state: RobotState, leg: int) -> tuple[float, float, float]:
        """Drive the field away from the target leg to lift it."""
        rx, ry = self.sim.geometry.leg_dir_world(leg, state.psi)
        return (-LIFT_DRIVE_V * rx, -LIFT_DRIVE_V * ry, 0.0)

    # -- the policy ------------------------------------------------------

    def next_action(self, state: RobotState) -> tuple[VoltageTriple, GaitPhase]:
        """Increment for the current state; always inside the envelope."""
        if self._origin is None:
            self._origin = state
        v = state.v
        kind = self.instr.kind
        phase = self.gait.phase

        if kind is Kind.SQUAT:
            self._advance(Phase.CROUCH)
            dv = self._toward(v, (0.0, 0.0, GAIT_DRIVE_V))

        elif kind is Kind.LIFT_LEG:
            if phase is Phase.IDLE:
                self._advance(Phase.CROUCH)
                dv = self._toward(v, (0.0, 0.0, 1.2))
            elif phase is Phase.CROUCH and self.gait.steps_in_phase < self._crouch_dwell:
                self._advance(Phase.CROUCH)
                dv = self._toward(v, (0.0, 0.0, 1.2))
            else:
                self._advance(Phase.LIFT_A)
                dv = self._toward(v, self._lift_target(state, self.instr.target_leg))

        elif kind in (Kind.ROTATE_LEFT, Kind.ROTATE_RIGHT):
            err = wrap_angle_deg(
                math.degrees(self._origin.psi - state.psi) + self.instr.psi_star_deg
            )
            eps = self.config.primitives.eps_psi_deg
            if phase is Phase.RECOVER or abs(err) <= eps / 2.0:
                # target reached (or close enough that the drop-out of the
                # pivot drive stops rotation on its own): ramp everything off
                self._advance(Phase.RECOVER if phase is not Phase.IDLE else Phase.IDLE)
                dv = self._toward(v, (0.0, 0.0, 0.0))
            elif phase is Phase.IDLE:
                self._advance(Phase.CROUCH)
                dv = self._toward(v, (0.0, 0.0, 0.0))
            else:
                self._advance(Phase.LIFT_A)
                direction = 1 if err > 0 else -1
                dv = self._toward(v, self._pivot_target(state, direction))

        elif kind is Kind.FORWARD:
            dv = self._forward_action(state)

        else:  # RECOVERY / STAND_UP
            self._advance(Phase.RECOVER)
            dv = self._toward(v, (0.0, 0.0, 0.0))

        return dv, self.gait

    def _forward_action(self, state: RobotState) -> VoltageTriple:
        instr = self.instr
        v = state.v
        origin = self._origin
        ex, ey = _axis_world(instr.axis, origin.psi)
        along = (state.x - origin.x) * ex + (state.y - origin.y) * ey
        target_mm = (instr.distance_mm or self.config.primitives.d_fwd_mm) + FORWARD_STOP_MARGIN_MM

        phase = self.gait.phase
        if phase is Phase.RECOVER or along >= target_mm:
            self._advance(Phase.RECOVER)
            return self._toward(v, (0.0, 0.0, 0.0))

        drive = v.vx if instr.axis == "x" else v.vy

        if phase is Phase.IDLE:
            self._advance(Phase.CROUCH)
            return self._toward(v, _with_axis(instr.axis, 0.0, WALK_CROUCH_V))
        if phase is Phase.CROUCH:
            if abs(v.vz - WALK_CROUCH_V) > 1e-9:
                self._advance(Phase.CROUCH)
                return self._toward(v, _with_axis(instr.axis, 0.0, WALK_CROUCH_V))
            self._advance(Phase.LIFT_A)
            return self._toward(v, _with_axis(instr.axis, GAIT_DRIVE_V, WALK_CROUCH_V))
        if phase is Phase.LIFT_A:
            if abs(drive - GAIT_DRIVE_V) > 1e-9:
                self._advance(Phase.LIFT_A)
            else:
                self._advance(Phase.SWING_A)
                return self._toward(v, _with_axis(instr.axis, -GAIT_DRIVE_V, WALK_CROUCH_V))
            return self._toward(v, _with_axis(instr.axis, GAIT_DRIVE_V, WALK_CROUCH_V))
        if phase is Phase.SWING_A:
            if abs(drive + GAIT_DRIVE_V) > 1e-9:
                self._advance(Phase.SWING_A)
                return self._toward(v, _with_axis(instr.axis, -GAIT_DRIVE_V, WALK_CROUCH_V))
            self._advance(Phase.LIFT_B)
            return self._toward(v, _with_axis(instr.axis, -GAIT_DRIVE_V, WALK_CROUCH_V))
        if phase is Phase.LIFT_B:
            self._advance(Phase.SWING_B)
            return self._toward(v, _with_axis(instr.axis, GAIT_DRIVE_V, WALK_CROUCH_V))
        # SWING_B: ramp back to +drive, then start the next stride.
        if abs(drive - GAIT_DRIVE_V) > 1e-9:
            self._advance(Phase.SWING_B)
            return self._toward(v, _with_axis(instr.axis, GAIT_DRIVE_V, WALK_CROUCH_V))
        self._advance(Phase.LIFT_A)
        return self._toward(v, _with_axis(instr.axis, GAIT_DRIVE_V, WALK_CROUCH_V))


def _with_axis(axis: str, drive: float, vz: float) -> tuple[float, float, float]:
    return (drive, 0.0, vz) if axis == "x" else (0.0, drive, vz)


def _axis_world(axis: str, psi: float) -> tuple[float, float]:
    c, s = math.cos(psi), math.sin(psi)
    return (c, s) if axis == "x" else (-s, c)


@dataclass
class Rollout:
    trajectory: list[RobotState]
    voltages: list[VoltageTriple]
    phases: list[GaitPhase]
    result: TrialResult


def rollout(
    instr: InstructionSpec | str,
    sim: Simulator,
    config: Config,
    max_steps: int | None = None,
    recorder=None,
) -> Rollout:
    """Close the loop at the control rate until success or the step budget.

    ``recorder``, when given, is called as ``recorder(state, v, dv)`` for
    the initial state (with zero increment) and after every step.
    """
    if isinstance(instr, str):
        instr = parse_instruction(instr)
    spec = primitive_spec_for(instr, config)
    if max_steps is None:
        max_steps = spec.t_max
    policy = ExpertPolicy(instr, config, sim)
    env = policy.envelope

    state = sim.state
    trajectory = [state]
    voltages = [state.v]
    phases = [policy.gait]
    if recorder is not None:
        recorder(state, state.v, VoltageTriple())

    run = 1 if check_frame(spec, trajectory[0], state)[0] else 0
    steps = 0
    while run < spec.t_s and steps < max_steps:
        dv, gait = policy.next_action(state)
        v_new = apply_increment(state.v, dv, env)
        dv_real = realized_increment(state.v, v_new)
        state = sim.step(v_new)
        trajectory.append(state)
        voltages.append(v_new)
        phases.append(gait)
        if recorder is not None:
            recorder(state, v_new, dv_real)
        ok, _ = check_frame(spec, trajectory[0], state)
        run = run + 1 if ok else 0
        steps += 1

    result = judge_trial(spec, trajectory, voltages)
    return Rollout(trajectory=trajectory, voltages=voltages, phases=phases, result=result)


# Prompt presets for downstream policy hosts.  These are plain template
# strings; the gateway and CLI hand them out verbatim.
INSTRUCTION_PRESETS = {
    "action_history": (
        "You are a voltage controller. You can control the voltage to move the "
        "trileg robot as shown in the images. Current image is <Im0>. Past images "
        "are <Im1>, <Im2>. Current state is {s0}. Previous states are {s1} and "
        "{s2}. Previous actions are {a1} and {a2}. What is the next action?"
    ),
    "concise": (
        "You are a voltage controller. You can control the voltage to move the "
        "trileg robot as shown in the images. Current image is <Im0>. Past images "
        "are <Im1>, <Im2>. Current state is {s0}. Previous states are {s1} and "
        "{s2}. What is the next action?"
    ),
    "detailed": (
        "You are a voltage controller. You can control the voltage to move the "
        "trileg robot as shown in the images. Current image is <Im0>. Past images "
        "are <Im1>, <Im2>. Current state is {s0}. Previous states are {s1} and "
        "{s2}. The robot is white with three legs, each equipped with a magnet. "
        "You control the voltage to manipulate the magnetic field, which in turn "
        "moves the robot. The robot's state represents the current strength of "
        "the magnetic field (in x, y, z directions). An action involves adjusting "
        "the magnetic field in a specific direction. For the robot to walk, it "
        "must first crouch, then lift a leg, and subsequently alternate between "
        "legs to move. You can observe the state of the robot from the images "
        "and correlate it with the numerical values. What is the next action?"
    ),
}
