"""Coil actuation: voltages to fields to torques, plus the safety layer.

The three orthogonal coil pairs produce an approximately uniform field in
the workspace, linear in the applied voltages:

    B = K @ V          (K calibrated, tesla per volt)
    tau = m x B        (torque on a leg magnet, N*m)

Every voltage command passes through ``project_voltage`` first, which
clamps the per-step increment and then the absolute value onto the
hardware limits (per-axis box constraints, so the sequential clamp equals
the joint infinity-norm projection).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

_SIGN_EPS = 1e-9  # below this a drive sample counts as zero


@dataclass(frozen=True)
class VoltageTriple:
    """Per-axis coil voltages in volts."""

    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0

    def __post_init__(self):
        # Plain floats keep text encodings (repr, %.4f) canonical even
        # when callers pass numpy scalars.
        for name in ("vx", "vy", "vz"):
            value = getattr(self, name)
            if type(value) is not float:
                object.__setattr__(self, name, float(value))

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.vz], dtype=np.float64)

    @staticmethod
    def from_array(a) -> "VoltageTriple":
        x, y, z = (float(v) for v in a)
        return VoltageTriple(x, y, z)

    def require_finite(self, what: str = "voltage") -> "VoltageTriple":
        if not all(math.isfinite(v) for v in (self.vx, self.vy, self.vz)):
            raise ValidationError(f"non-finite {what}: {self}")
        return self


@dataclass(frozen=True)
class FieldTriple:
    """Magnetic field components in tesla."""

    bx: float = 0.0
    by: float = 0.0
    bz: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.bx, self.by, self.bz], dtype=np.float64)


@dataclass(frozen=True)
class SafetyEnvelope:
    """Hardware limits: absolute per-axis cap and per-step rate cap."""

    v_max: float = 2.5
    dv_max: float = 0.5

    def __post_init__(self):
        if not (self.v_max > 0 and self.dv_max > 0):
            raise ValidationError("safety envelope caps must be positive")
        if not (math.isfinite(self.v_max) and math.isfinite(self.dv_max)):
            raise ValidationError("safety envelope caps must be finite")


class CoilMatrix:
    """Calibrated 3x3 linear map from coil voltages to field components."""

    def __init__(self, k) -> None:
        k = np.asarray(k, dtype=np.float64)
        if k.shape != (3, 3):
            raise ValidationError(f"coil matrix must be 3x3, got {k.shape}")
        if not np.all(np.isfinite(k)):
            raise ValidationError("coil matrix entries must be finite")
        if abs(np.linalg.det(k)) < 1e-30:
            raise ValidationError("coil matrix must be invertible")
        self.k = k

    @staticmethod
    def identity(tesla_per_volt: float = 1e-3) -> "CoilMatrix":
        return CoilMatrix(np.eye(3) * tesla_per_volt)


class MagnetMoment:
    """A leg magnet's moment (A*m^2), direction and magnitude, world frame."""

    def __init__(self, m) -> None:
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (3,):
            raise ValidationError("magnetic moment must be a 3-vector")
        if not np.all(np.isfinite(m)):
            raise ValidationError("magnetic moment must be finite")
        if float(np.linalg.norm(m)) == 0.0:
            raise ValidationError("magnetic moment must be nonzero")
        self.m = m


@dataclass(frozen=True)
class GaitSignal:
    """Sinusoidal drive used for the alternating gait."""

    amplitude: float
    frequency: float
    axis: str = "y"
    phase: float = 0.0

    def __post_init__(self):
        if self.frequency <= 0:
            raise ValidationError("gait frequency must be positive")
        if self.amplitude < 0:
            raise ValidationError("gait amplitude must be non-negative")
        if self.axis not in ("x", "y", "z"):
            raise ValidationError(f"gait axis must be x, y or z, got {self.axis!r}")

    @staticmethod
    def from_signed_amplitude(
        amplitude: float, frequency: float, axis: str = "y", phase: float = 0.0
    ) -> "GaitSignal":
        """Fold a signed amplitude into the phase (negative => half-period shift)."""
        if amplitude < 0:
            return GaitSignal(-amplitude, frequency, axis, phase + math.pi)
        return GaitSignal(amplitude, frequency, axis, phase)


def project_voltage(
    prev: VoltageTriple, dv: VoltageTriple, env: SafetyEnvelope
) -> VoltageTriple:
    """Project a requested increment onto the safety envelope.

    Each axis of ``dv`` is clamped to ``[-dv_max, +dv_max]``, then the sum
    ``prev + dv`` is clamped to ``[-v_max, +v_max]``.  Idempotent on
    already-feasible inputs.

    Raises:
        ValidationError: any non-finite input component.
    """
    prev.require_finite("previous voltage")
    dv.require_finite("voltage increment")

    def one(p: float, d: float) -> float:
        d = min(max(d, -env.dv_max), env.dv_max)
        return min(max(p + d, -env.v_max), env.v_max)

    return VoltageTriple(one(prev.vx, dv.vx), one(prev.vy, dv.vy), one(prev.vz, dv.vz))


def voltage_to_field(v: VoltageTriple, k: CoilMatrix) -> FieldTriple:
    """Exact matrix-vector product B = K @ V."""
    v.require_finite()
    b = k.k @ v.as_array()
    return FieldTriple(float(b[0]), float(b[1]), float(b[2]))


def torque(m: MagnetMoment, b: FieldTriple) -> np.ndarray:
    """Right-handed cross product tau = m x B (N*m).

    Orthogonal to both inputs to machine precision.
    """
    ba = b.as_array()
    if not np.all(np.isfinite(ba)):
        raise ValidationError("field must be finite")
    return np.cross(m.m, ba)


def gait_sample(sig: GaitSignal, t: float) -> float:
    """Drive voltage at time ``t``: amplitude * sin(2*pi*f*t + phase)."""
    if t < 0:
        raise ValidationError("gait time must be non-negative")
    return sig.amplitude * math.sin(2.0 * math.pi * sig.frequency * t + sig.phase)


def randomize_coil_matrix(k: CoilMatrix, scale: float, seed: int) -> CoilMatrix:
    """Perturb each entry by an independent factor uniform in [1-scale, 1+scale].

    Deterministic for a given seed.  Degenerate draws (singular result) are
    resampled; with mild scales this never triggers.
    """
    if not (0.0 <= scale < 1.0):
        raise ValidationError(f"randomization scale must be in [0, 1), got {scale}")
    if scale == 0.0:
        return CoilMatrix(k.k.copy())
    rng = np.random.default_rng(seed)
    for _ in range(64):
        factors = rng.uniform(1.0 - scale, 1.0 + scale, size=(3, 3))
        candidate = k.k * factors
        if abs(np.linalg.det(candidate)) > 1e-30:
            return CoilMatrix(candidate)
    raise ValidationError("could not draw an invertible perturbed coil matrix")


def drive_sign(v: float) -> int:
    """Sign of a drive sample, treating |v| below 1e-9 as zero."""
    if v > _SIGN_EPS:
        return 1
    if v < -_SIGN_EPS:
        return -1
    return 0


# The signal generator accepts commands on a 0.1 mV grid; snapping both the
# request and the projected output keeps every applied voltage exactly
# representable as 4-decimal text, which makes recorded episodes replay
# bit-for-bit.
GRID_DECIMALS = 4
_GRID = 10.0**GRID_DECIMALS


def snap_to_grid(x: float) -> float:
    """Round a voltage onto the 1e-4 V command grid."""
    return round(x * _GRID) / _GRID


def apply_increment(
    prev: VoltageTriple, dv: VoltageTriple, env: SafetyEnvelope
) -> VoltageTriple:
    """Full apply pipeline: grid-snap the request, project, snap the output.

    Starting from a grid-exact ``prev`` the output is grid-exact too (the
    envelope bounds are grid values), so the realized increment never
    exceeds ``dv_max`` and text round-trips preserve bits.
    """
    dv = dv.require_finite("voltage increment")
    snapped = VoltageTriple(snap_to_grid(dv.vx), snap_to_grid(dv.vy), snap_to_grid(dv.vz))
    out = project_voltage(prev, snapped, env)
    return VoltageTriple(snap_to_grid(out.vx), snap_to_grid(out.vy), snap_to_grid(out.vz))


def realized_increment(prev: VoltageTriple, new: VoltageTriple) -> VoltageTriple:
    """Grid-exact difference ``new - prev`` as actually applied."""
    return VoltageTriple(
        snap_to_grid(new.vx - prev.vx),
        snap_to_grid(new.vy - prev.vy),
        snap_to_grid(new.vz - prev.vz),
    )
