"""Token grammar for voltage increments.

One action is serialized as the five-token sentence

    <SOS> bin_x bin_y bin_z <EOS>

with each bin a uniform quantization of the per-axis increment on a 0.1 V
grid over [-0.5, +0.5] (11 bins, zero representable).  Vocabulary ids:
SOS=0, EOS=1, bin k -> 2+k.  Any decoder that emits these ids is
plug-compatible; this module fixes only the symbol grammar and the
supervision-target construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .actuation import VoltageTriple
from .config import CodecConfig
from .errors import ValidationError

SOS_ID = 0
EOS_ID = 1
_BIN_ID_BASE = 2


@dataclass(frozen=True)
class QuantizerSpec:
    """Symmetric uniform scalar quantizer for per-axis increments."""

    dv_range: float = 0.5
    step: float = 0.1

    def __post_init__(self):
        if self.step <= 0 or self.dv_range <= 0:
            raise ValidationError("step and dv_range must be positive")
        ratio = self.dv_range / self.step
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValidationError("dv_range must be an exact multiple of step")

    @property
    def n_bins(self) -> int:
        return 2 * int(round(self.dv_range / self.step)) + 1

    @property
    def vocab_size(self) -> int:
        return _BIN_ID_BASE + self.n_bins

    @staticmethod
    def from_config(cfg: CodecConfig) -> "QuantizerSpec":
        return QuantizerSpec(dv_range=cfg.dv_range, step=cfg.step)


@dataclass(frozen=True)
class ActionSentence:
    """One quantized increment: exactly three bins framed by SOS/EOS."""

    bins: tuple[int, int, int]

    def __post_init__(self):
        if len(self.bins) != 3:
            raise ValidationError("an action sentence carries exactly three bins")

    def validate(self, q: QuantizerSpec) -> "ActionSentence":
        for b in self.bins:
            if not 0 <= b < q.n_bins:
                raise ValidationError(f"bin {b} outside [0, {q.n_bins})")
        return self

    @property
    def tokens(self) -> list[str]:
        return ["<SOS>", *[f"bin:{b}" for b in self.bins], "<EOS>"]

    def to_ids(self) -> list[int]:
        return [SOS_ID, *[_BIN_ID_BASE + b for b in self.bins], EOS_ID]


@dataclass(frozen=True)
class SupervisionTarget:
    """Vocabulary-id sequence a ground-truth autoregressive decoder emits."""

    ids: tuple[int, ...]

    def __post_init__(self):
        if len(self.ids) != 5:
            raise ValidationError("supervision target must have 5 positions")


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def quantize(dv: VoltageTriple, q: QuantizerSpec) -> ActionSentence:
    """Map an in-range increment to bins: round((dv + range) / step)."""
    dv.require_finite("increment")
    bins = []
    for component in (dv.vx, dv.vy, dv.vz):
        if abs(component) > q.dv_range + 1e-9:
            raise ValidationError(
                f"increment {component} outside +/-{q.dv_range}; clamp before encoding"
            )
        b = _round_half_away((component + q.dv_range) / q.step)
        bins.append(min(max(b, 0), q.n_bins - 1))
    return ActionSentence(bins=(bins[0], bins[1], bins[2])).validate(q)


def dequantize(sentence: ActionSentence, q: QuantizerSpec) -> VoltageTriple:
    """Bin centers back to volts: dv = bin * step - range (exact on grid)."""
    sentence.validate(q)
    vals = [b * q.step - q.dv_range for b in sentence.bins]
    return VoltageTriple(vals[0], vals[1], vals[2])


def build_target(dv: VoltageTriple, q: QuantizerSpec) -> SupervisionTarget:
    """Oracle sentence as vocabulary ids (SOS=0, EOS=1, bin k -> 2+k)."""
    return SupervisionTarget(ids=tuple(quantize(dv, q).to_ids()))


def sentence_from_ids(ids: list[int], q: QuantizerSpec) -> ActionSentence:
    """Strict parse of one complete 5-id sentence (raises on any defect)."""
    if len(ids) != 5 or ids[0] != SOS_ID or ids[-1] != EOS_ID:
        raise ValidationError(f"malformed sentence ids {ids}")
    bins = []
    for token in ids[1:4]:
        b = token - _BIN_ID_BASE
        if not 0 <= b < q.n_bins:
            raise ValidationError(f"id {token} is not a bin token")
        bins.append(b)
    return ActionSentence(bins=(bins[0], bins[1], bins[2]))


class StreamParser:
    """Greedy SOS..EOS segmentation with resynchronization.

    Malformed frames (wrong arity, ids outside the vocabulary, an SOS
    arriving mid-frame) are dropped and counted; parsing resumes at the
    next SOS.  Incomplete trailing input is carried as a remainder for the
    next feed, so streams can arrive in arbitrary chunks.
    """

    def __init__(self, q: QuantizerSpec) -> None:
        self.q = q
        self.diagnostics = 0
        self._pending: list[int] = []
        self._in_garbage = False

    @property
    def remainder(self) -> list[int]:
        return list(self._pending)

    def feed(self, ids) -> list[ActionSentence]:
        out: list[ActionSentence] = []
        for token in ids:
            if not self._pending:
                if token == SOS_ID:
                    self._pending.append(token)
                    self._in_garbage = False
                else:
                    # Tokens outside any frame: one diagnostic per garbage run.
                    if not self._in_garbage:
                        self.diagnostics += 1
                        self._in_garbage = True
                continue
            if token == SOS_ID:
                # New frame opened before the current one closed.
                self.diagnostics += 1
                self._pending = [SOS_ID]
                continue
            self._pending.append(token)
            if token == EOS_ID:
                try:
                    out.append(sentence_from_ids(self._pending, self.q))
                except ValidationError:
                    self.diagnostics += 1
                self._pending = []
            elif len(self._pending) > 4:
                # Too many bins; drop and resync at the next SOS.
                self.diagnostics += 1
                self._pending = []
                self._in_garbage = True
        return out
