"""Success criteria for the five motion primitives and trial judging.

A trial succeeds when its kind-specific predicate holds on ``t_s``
consecutive frames, with the window ending no later than the ``t_max``
budget.  Exceeding the 2.5 V absolute voltage limit anywhere in the trial
is a safety-guard violation and forces failure regardless of the motion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .actuation import VoltageTriple
from .config import PrimitiveConfig
from .errors import ValidationError
from .robot import RobotState

SAFETY_LIMIT_V = 2.5


class Kind(str, Enum):
    SQUAT = "squat"
    LIFT_LEG = "lift_leg"
    ROTATE_LEFT = "rotate_left"
    ROTATE_RIGHT = "rotate_right"
    FORWARD = "forward"
    RECOVERY = "recovery"


class Violation(str, Enum):
    NONE = "none"
    SAFETY_GUARD = "safety_guard"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class PrimitiveSpec:
    """Thresholds and budget for one primitive trial."""

    kind: Kind
    h_min: float = 2.0           # squat: minimum body-height drop (mm)
    a_min: float = 0.10          # squat alternative: silhouette growth fraction
    use_area: bool = False
    h_lift: float = 2.0          # lift: minimum leg height (mm)
    psi_star_deg: float = 30.0   # rotate: target heading change (signed)
    eps_psi_deg: float = 5.0
    d_r: float = 3.0             # rotate: centroid drift bound (mm)
    d_fwd: float = 10.0          # forward: required axial displacement (mm)
    d_perp: float = 5.0          # forward: lateral bound (mm)
    h_drop: float = 0.5          # recovery: leg back in contact below this (mm)
    d_s: float = 3.0             # recovery: drift bound (mm)
    t_max: int = 300
    t_s: int = 10
    target_leg: int | None = None        # lift / recovery
    axis: str = "x"                      # forward drive axis (body frame)
    contact_eps: float = 0.1

    def __post_init__(self):
        if self.t_s <= 0 or self.t_max <= 0 or self.t_s > self.t_max:
            raise ValidationError("need 0 < t_s <= t_max")
        if self.eps_psi_deg <= 0 or self.eps_psi_deg >= 90:
            raise ValidationError("eps_psi must be in (0, 90) degrees")
        if self.kind in (Kind.LIFT_LEG, Kind.RECOVERY):
            if self.target_leg is None or not 0 <= self.target_leg <= 2:
                raise ValidationError(f"{self.kind.value} needs target_leg in 0..2")
        if self.axis not in ("x", "y"):
            raise ValidationError("forward axis must be x or y")

    @staticmethod
    def from_config(kind: Kind, cfg: PrimitiveConfig, **overrides) -> "PrimitiveSpec":
        base = dict(
            h_min=cfg.h_min_mm, a_min=cfg.area_min_frac, h_lift=cfg.h_lift_mm,
            eps_psi_deg=cfg.eps_psi_deg, d_r=cfg.d_r_mm, d_fwd=cfg.d_fwd_mm,
            d_perp=cfg.d_perp_mm, h_drop=cfg.h_drop_mm, d_s=cfg.d_s_mm,
            t_max=cfg.t_max, t_s=cfg.t_s,
        )
        base.update(overrides)
        return PrimitiveSpec(kind=kind, **base)


@dataclass
class TrialResult:
    success: bool
    steps_used: int
    violation: Violation
    final_metrics: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.success and self.violation is not Violation.NONE:
            raise ValidationError("a successful trial cannot carry a violation")


def wrap_angle_deg(a: float) -> float:
    """Wrap an angle difference into (-180, 180]."""
    a = math.fmod(a, 360.0)
    if a > 180.0:
        a -= 360.0
    elif a <= -180.0:
        a += 360.0
    return a


def check_frame(
    spec: PrimitiveSpec,
    state0: RobotState,
    state_t: RobotState,
    area_ratio: float | None = None,
) -> tuple[bool, dict[str, float]]:
    """Evaluate the kind-specific predicate between a start and a later frame.

    ``area_ratio`` (silhouette_t / silhouette_0) feeds the optional squat
    area criterion when ``spec.use_area`` is set.
    """
    dz = state_t.z - state0.z
    dpsi = wrap_angle_deg(math.degrees(state_t.psi - state0.psi))
    drift = math.hypot(state_t.x - state0.x, state_t.y - state0.y)
    metrics = {"dz": dz, "dpsi_deg": dpsi, "drift": drift}

    kind = spec.kind
    if kind is Kind.SQUAT:
        ok = dz <= -spec.h_min
        if spec.use_area:
            if area_ratio is None:
                raise ValidationError("area criterion requested without area_ratio")
            metrics["area_ratio"] = area_ratio
            ok = ok or (area_ratio - 1.0 >= spec.a_min)
        return ok, metrics

    if kind is Kind.LIFT_LEG:
        leg = spec.target_leg
        others = [state_t.h[i] for i in range(3) if i != leg]
        metrics["h_target"] = state_t.h[leg]
        ok = state_t.h[leg] >= spec.h_lift and all(h <= spec.contact_eps for h in others)
        return ok, metrics

    if kind in (Kind.ROTATE_LEFT, Kind.ROTATE_RIGHT):
        err = abs(wrap_angle_deg(dpsi - spec.psi_star_deg))
        metrics["heading_err_deg"] = err
        return err <= spec.eps_psi_deg and drift < spec.d_r, metrics

    if kind is Kind.FORWARD:
        ex, ey = _axis_world(spec.axis, state0.psi)
        dx, dy = state_t.x - state0.x, state_t.y - state0.y
        along = dx * ex + dy * ey
        lateral = -dx * ey + dy * ex
        metrics["along"] = along
        metrics["lateral"] = lateral
        ok = (
            along >= spec.d_fwd
            and abs(lateral) <= spec.d_perp
            and abs(dpsi) <= spec.eps_psi_deg
        )
        return ok, metrics

    if kind is Kind.RECOVERY:
        leg = spec.target_leg
        metrics["h_target"] = state_t.h[leg]
        ok = (
            state_t.h[leg] <= spec.h_drop
            and drift < spec.d_s
            and abs(dpsi) <= spec.eps_psi_deg
        )
        return ok, metrics

    raise ValidationError(f"unknown primitive kind {kind!r}")


def _axis_world(axis: str, psi: float) -> tuple[float, float]:
    c, s = math.cos(psi), math.sin(psi)
    return (c, s) if axis == "x" else (-s, c)


def judge_trial(
    spec: PrimitiveSpec,
    trajectory: list[RobotState],
    voltages: list[VoltageTriple],
    area_ratios: list[float] | None = None,
    v_limit: float = SAFETY_LIMIT_V,
) -> TrialResult:
    """Judge a full trial trajectory.

    Success requires a window of ``t_s`` consecutive satisfying frames
    ending at or before frame index ``t_max``; any voltage sample above the
    absolute limit forces a safety-guard failure.  ``steps_used`` is the
    index of the last frame of the first sustained window (or of the last
    frame examined on failure).
    """
    if not trajectory:
        raise ValidationError("empty trajectory")
    if len(voltages) != len(trajectory):
        raise ValidationError("trajectory and voltage lists must align")
    if area_ratios is not None and len(area_ratios) != len(trajectory):
        raise ValidationError("area_ratios must align with the trajectory")

    for volt in voltages:
        if max(abs(volt.vx), abs(volt.vy), abs(volt.vz)) > v_limit:
            return TrialResult(
                success=False,
                steps_used=len(trajectory) - 1,
                violation=Violation.SAFETY_GUARD,
                final_metrics=check_frame(
                    spec, trajectory[0], trajectory[-1],
                    area_ratios[-1] if area_ratios else None,
                )[1],
            )

    state0 = trajectory[0]
    run = 0
    last_metrics: dict[str, float] = {}
    horizon = min(len(trajectory) - 1, spec.t_max)
    for idx in range(0, horizon + 1):
        ratio = area_ratios[idx] if area_ratios is not None else None
        ok, last_metrics = check_frame(spec, state0, trajectory[idx], ratio)
        run = run + 1 if ok else 0
        if run >= spec.t_s:
            return TrialResult(
                success=True, steps_used=idx, violation=Violation.NONE,
                final_metrics=last_metrics,
            )
    return TrialResult(
        success=False, steps_used=horizon, violation=Violation.TIMEOUT,
        final_metrics=last_metrics,
    )


def success_rate(results: list[TrialResult]) -> tuple[float, dict[str, int]]:
    """Fraction of successes plus counts per violation class."""
    if not results:
        raise ValidationError("no trial results")
    counts = {v.value: 0 for v in Violation}
    wins = 0
    for res in results:
        counts[res.violation.value] += 1
        wins += int(res.success)
    return wins / len(results), counts


def macro_average(rates: list[float]) -> float:
    """Unweighted mean of per-primitive success rates."""
    if not rates:
        raise ValidationError("no rates to average")
    return sum(rates) / len(rates)
