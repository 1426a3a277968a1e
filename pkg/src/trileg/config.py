"""Calibration file: one JSON document shared by every subsystem.

Schema (all keys optional, defaults below):

    actuation:  k (3x3 tesla/volt), v_max, dv_max, randomize_scale
    robot:      squat_curve / step_curve / lift_curve anchor tables,
                stiction_v, rot_rate_deg, lift_threshold_nm, leg geometry,
                z0_mm, contact_eps_mm, relax, body_radius_mm, squat_spread
    sim:        dt, friction_scale, noise_std_mm, seed
    primitives: success-criterion thresholds and budgets
    codec:      dv_range, step
    gateway:    frame_window, pace_hz, record_root

The file path is taken from ``--config`` on the CLI or the
``TRILEG_CONFIG`` environment variable; otherwise defaults apply.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ValidationError

ENV_CONFIG = "TRILEG_CONFIG"

# Workspace footprint (mm); the coil rig's usable central region.
WORKSPACE_MM = 50.0


def _default_k() -> list[list[float]]:
    # 1 mT per volt on each axis, no cross-coupling.
    return [[1e-3, 0.0, 0.0], [0.0, 1e-3, 0.0], [0.0, 0.0, 1e-3]]


@dataclass
class ActuationConfig:
    k: list[list[float]] = field(default_factory=_default_k)
    v_max: float = 2.5
    dv_max: float = 0.5
    randomize_scale: float = 0.05


@dataclass
class RobotConfig:
    # (volts, mm) anchors; vertical response of the body height.
    squat_curve: list[list[float]] = field(
        default_factory=lambda: [[-2.0, 3.0], [-0.8, 0.0], [0.8, 0.0], [2.0, -5.0]]
    )
    # (volts, mm) anchors; net centroid displacement per full gait cycle,
    # signed by walk direction.
    step_curve: list[list[float]] = field(
        default_factory=lambda: [[-2.0, -15.0], [-1.2, 0.0], [1.2, 0.0], [2.0, 12.0]]
    )
    # (volts, mm) anchors; single-leg height versus per-leg drive.
    lift_curve: list[list[float]] = field(
        default_factory=lambda: [[0.0, 0.0], [1.2, 0.0], [2.0, 3.0]]
    )
    stiction_v: float = 1.2
    rot_rate_deg: float = 3.0  # degrees per step per volt above the deadband
    # Hinge-axis torque (N*m) above which a leg leaves the ground.  The
    # default aligns leg-lift onset with the 1.2 V locomotion deadband:
    # sin(30 deg) * 1 A*m^2 * 1 mT/V * 1.2 V.
    lift_threshold_nm: float = 6.0e-4
    leg_azimuth_deg: list[float] = field(default_factory=lambda: [180.0, 60.0, 300.0])
    leg_tilt_deg: float = 30.0
    magnet_moment_am2: float = 1.0
    z0_mm: float = 10.0
    contact_eps_mm: float = 0.1
    relax: float = 0.5
    body_radius_mm: float = 6.0
    squat_spread: float = 0.25


@dataclass
class SimConfig:
    dt: float = 0.1
    friction_scale: float = 1.0
    noise_std_mm: float = 0.0
    seed: int = 0


@dataclass
class PrimitiveConfig:
    h_min_mm: float = 2.0
    h_lift_mm: float = 2.0
    eps_psi_deg: float = 5.0
    d_r_mm: float = 3.0
    d_fwd_mm: float = 10.0
    d_perp_mm: float = 5.0
    h_drop_mm: float = 0.5
    d_s_mm: float = 3.0
    t_max: int = 300
    t_s: int = 10
    area_min_frac: float = 0.10


@dataclass
class CodecConfig:
    dv_range: float = 0.5
    step: float = 0.1


@dataclass
class GatewayConfig:
    frame_window: int = 3
    pace_hz: float = 10.0
    record_root: str = "episodes"


@dataclass
class Config:
    actuation: ActuationConfig = field(default_factory=ActuationConfig)
    robot: RobotConfig = field(default_factory=RobotConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    primitives: PrimitiveConfig = field(default_factory=PrimitiveConfig)
    codec: CodecConfig = field(default_factory=CodecConfig)
    gateway: GatewayConfig = field(default_factory=GatewayConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        """Stable hex digest of the full calibration, embedded in episodes."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def validate(self) -> "Config":
        a = self.actuation
        if a.v_max <= 0 or a.dv_max <= 0:
            raise ValidationError("v_max and dv_max must be positive")
        if not (0.0 <= a.randomize_scale < 1.0):
            raise ValidationError("randomize_scale must be in [0, 1)")
        r = self.robot
        for name in ("squat_curve", "step_curve", "lift_curve"):
            _check_curve(name, getattr(r, name))
        if r.stiction_v <= 0:
            raise ValidationError("stiction_v must be positive")
        if len(r.leg_azimuth_deg) != 3:
            raise ValidationError("exactly three legs expected")
        gaps = sorted(
            (r.leg_azimuth_deg[i] - r.leg_azimuth_deg[0]) % 360.0 for i in range(3)
        )
        if any(abs(g - e) > 1e-6 for g, e in zip(gaps, (0.0, 120.0, 240.0))):
            raise ValidationError("leg azimuths must be 120 degrees apart")
        if not (0.0 < r.relax <= 1.0):
            raise ValidationError("relax must be in (0, 1]")
        s = self.sim
        if s.dt <= 0 or s.friction_scale <= 0 or s.noise_std_mm < 0:
            raise ValidationError("invalid sim config")
        p = self.primitives
        if p.t_s > p.t_max:
            raise ValidationError("t_s must not exceed t_max")
        if p.eps_psi_deg >= 90.0:
            raise ValidationError("eps_psi must be below 90 degrees")
        c = self.codec
        if c.step <= 0 or c.dv_range <= 0:
            raise ValidationError("codec step and dv_range must be positive")
        ratio = c.dv_range / c.step
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValidationError("dv_range must be an exact multiple of step")
        return self


def _check_curve(name: str, anchors: list[list[float]]) -> None:
    if not anchors:
        raise ValidationError(f"{name}: empty anchor table")
    xs = [p[0] for p in anchors]
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise ValidationError(f"{name}: anchor volts must be strictly increasing")
    if not math.isclose(_interp_pairs(anchors, 0.0), 0.0, abs_tol=1e-9):
        raise ValidationError(f"{name}: curve must pass through (0, 0)")


def _interp_pairs(anchors: list[list[float]], v: float) -> float:
    xs = [p[0] for p in anchors]
    ys = [p[1] for p in anchors]
    if v <= xs[0]:
        return ys[0]
    if v >= xs[-1]:
        return ys[-1]
    for k in range(1, len(xs)):
        if v < xs[k]:
            x0, x1, y0, y1 = xs[k - 1], xs[k], ys[k - 1], ys[k]
            return y0 + (y1 - y0) * (v - x0) / (x1 - x0)
    return ys[-1]


def _merge(dst: dict, src: dict) -> dict:
    for key, value in src.items():
        if key in dst and isinstance(dst[key], dict) and isinstance(value, dict):
            _merge(dst[key], value)
        else:
            dst[key] = value
    return dst


def config_from_dict(data: dict) -> Config:
    base = Config().to_dict()
    unknown = set(data) - set(base)
    if unknown:
        raise ValidationError(f"unknown config sections: {sorted(unknown)}")
    merged = _merge(base, data)
    cfg = Config(
        actuation=ActuationConfig(**merged["actuation"]),
        robot=RobotConfig(**merged["robot"]),
        sim=SimConfig(**merged["sim"]),
        primitives=PrimitiveConfig(**merged["primitives"]),
        codec=CodecConfig(**merged["codec"]),
        gateway=GatewayConfig(**merged["gateway"]),
    )
    return cfg.validate()


def load_config(path: str | Path | None = None) -> Config:
    """Load calibration from ``path``, the env var, or defaults."""
    if path is None:
        path = os.environ.get(ENV_CONFIG)
    if path is None:
        return Config()
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"config {path}: top level must be an object")
    return config_from_dict(data)


def save_config(cfg: Config, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
