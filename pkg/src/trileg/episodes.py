"""Recording, pruning, loading and scoring of demonstration episodes.

On-disk layout, one directory per episode:

    meta.json           task category, instruction, scene, config hash, seed
    actions.csv         t, vx, vy, vz, dvx, dvy, dvz   (fixed 4 decimals)
    states.csv          t, x, y, psi, z, h1, h2, h3    (full-precision repr)
    frames/000042.png   one lossless frame per retained sample

Voltages live on the 1e-4 V command grid, so the 4-decimal text encoding
round-trips them bit-for-bit.  States use shortest-repr floats for the
same reason.  ``dv`` is stored alongside ``v`` so an episode replays
without reconstruction.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from .actuation import VoltageTriple
from .errors import EpisodeError
from .robot import RobotState

TASK_CATEGORIES = ("grid_marker", "white_lesion", "yellow_lesion")
SAMPLE_RATE_HZ = 10.0
FRAME_DIR = "frames"
_DV_TOL = 5e-5  # half a grid cell


@dataclass(frozen=True)
class Sample:
    t: int
    frame_ref: str
    state: RobotState
    v: VoltageTriple
    dv: VoltageTriple


@dataclass
class EpisodeMeta:
    task_category: str
    instruction: str
    scene: dict
    config_hash: str
    seed: int
    randomize_pose: bool = False
    sample_rate_hz: float = SAMPLE_RATE_HZ
    n_samples: int = 0
    pruned: bool = False
    # t indices of samples that directly follow a pruned gap; dv does not
    # telescope across these boundaries.
    run_boundaries: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "task_category": self.task_category,
            "instruction": self.instruction,
            "scene": self.scene,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "randomize_pose": self.randomize_pose,
            "sample_rate_hz": self.sample_rate_hz,
            "n_samples": self.n_samples,
            "pruned": self.pruned,
            "run_boundaries": self.run_boundaries,
        }

    @staticmethod
    def from_dict(data: dict) -> "EpisodeMeta":
        return EpisodeMeta(**data)


@dataclass
class Episode:
    meta: EpisodeMeta
    samples: list[Sample]
    root: Path | None = None

    def frame_bytes(self, sample: Sample) -> bytes:
        if self.root is None:
            raise EpisodeError("episode has no backing directory")
        return (self.root / sample.frame_ref).read_bytes()


@dataclass(frozen=True)
class MetricsReport:
    """Per-axis and overall mean squared voltage error."""

    mse_x: float
    mse_y: float
    mse_z: float
    n: int

    @property
    def mse_overall(self) -> float:
        return (self.mse_x + self.mse_y + self.mse_z) / 3.0

    def as_row(self, label: str) -> str:
        return (
            f"{label},{self.mse_x!r},{self.mse_y!r},{self.mse_z!r},{self.mse_overall!r}"
        )


class EpisodeSink:
    """Single-writer recorder; frames hit disk as they arrive."""

    def __init__(
        self,
        directory: str | Path,
        task_category: str,
        instruction: str,
        scene: dict,
        config_hash: str,
        seed: int,
        randomize_pose: bool = False,
    ) -> None:
        if task_category not in TASK_CATEGORIES:
            raise EpisodeError(f"unknown task category {task_category!r}")
        self.root = Path(directory)
        (self.root / FRAME_DIR).mkdir(parents=True, exist_ok=True)
        self.meta = EpisodeMeta(
            task_category=task_category,
            instruction=instruction,
            scene=scene,
            config_hash=config_hash,
            seed=seed,
            randomize_pose=randomize_pose,
        )
        self.samples: list[Sample] = []
        self._finalized = False

    def append(
        self, t: int, frame_png: bytes, state: RobotState, v: VoltageTriple, dv: VoltageTriple
    ) -> Sample:
        if self._finalized:
            raise EpisodeError("sink already finalized")
        if self.samples and t <= self.samples[-1].t:
            raise EpisodeError(
                f"samples must arrive in time order (got t={t} after {self.samples[-1].t})"
            )
        if max(abs(v.vx), abs(v.vy), abs(v.vz)) > 2.5 + 1e-9:
            raise EpisodeError("recorded voltage outside the safety envelope")
        ref = f"{FRAME_DIR}/{t:06d}.png"
        (self.root / ref).write_bytes(frame_png)
        sample = Sample(t=t, frame_ref=ref, state=state, v=v, dv=dv)
        self.samples.append(sample)
        return sample

    def finalize(self) -> Episode:
        if self._finalized:
            raise EpisodeError("sink already finalized")
        self._finalized = True
        self.meta.n_samples = len(self.samples)
        episode = Episode(meta=self.meta, samples=self.samples, root=self.root)
        _write_tables(episode, self.root)
        return episode


def _fmt_v(x: float) -> str:
    return f"{x:.4f}"


def _write_tables(episode: Episode, root: Path) -> None:
    root.mkdir(parents=True, exist_ok=True)
    with (root / "actions.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "vx", "vy", "vz", "dvx", "dvy", "dvz"])
        for s in episode.samples:
            writer.writerow(
                [s.t] + [_fmt_v(c) for c in (s.v.vx, s.v.vy, s.v.vz, s.dv.vx, s.dv.vy, s.dv.vz)]
            )
    with (root / "states.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "psi", "z", "h1", "h2", "h3"])
        for s in episode.samples:
            st = s.state
            writer.writerow(
                [s.t] + [repr(v) for v in (st.x, st.y, st.psi, st.z, *st.h)]
            )
    (root / "meta.json").write_text(
        json.dumps(episode.meta.to_dict(), indent=2) + "\n", encoding="utf-8"
    )


def save_episode(episode: Episode, directory: str | Path) -> Episode:
    """Write an in-memory episode (for example a pruned copy) to disk.

    Frame files of samples no longer present are not carried over.
    """
    dst = Path(directory)
    (dst / FRAME_DIR).mkdir(parents=True, exist_ok=True)
    for s in episode.samples:
        data = episode.frame_bytes(s)
        (dst / s.frame_ref).write_bytes(data)
    out = Episode(meta=episode.meta, samples=episode.samples, root=dst)
    _write_tables(out, dst)
    return out


def load_episode(directory: str | Path) -> Episode:
    """Load and validate one episode directory."""
    root = Path(directory)
    meta_path = root / "meta.json"
    if not meta_path.is_file():
        raise EpisodeError(f"{root}: missing meta.json")
    try:
        meta = EpisodeMeta.from_dict(json.loads(meta_path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, TypeError) as exc:
        raise EpisodeError(f"{root}: bad meta.json: {exc}") from exc

    actions: dict[int, tuple[VoltageTriple, VoltageTriple]] = {}
    try:
        with (root / "actions.csv").open(newline="", encoding="utf-8") as fh:
            for row in _rows(fh):
                t = int(row[0])
                vals = [float(x) for x in row[1:7]]
                actions[t] = (VoltageTriple(*vals[:3]), VoltageTriple(*vals[3:]))
    except OSError as exc:
        raise EpisodeError(f"{root}: missing actions.csv") from exc

    samples: list[Sample] = []
    try:
        with (root / "states.csv").open(newline="", encoding="utf-8") as fh:
            for row in _rows(fh):
                t = int(row[0])
                if t not in actions:
                    raise EpisodeError(f"{root}: state row t={t} has no action row")
                x, y, psi, z, h1, h2, h3 = (float(v) for v in row[1:8])
                v, dv = actions[t]
                state = RobotState(x=x, y=y, psi=psi, z=z, h=(h1, h2, h3), v=v, t=t)
                ref = f"{FRAME_DIR}/{t:06d}.png"
                if not (root / ref).is_file():
                    raise EpisodeError(f"{root}: missing frame {ref}")
                samples.append(Sample(t=t, frame_ref=ref, state=state, v=v, dv=dv))
    except OSError as exc:
        raise EpisodeError(f"{root}: missing states.csv") from exc

    if len(samples) != len(actions):
        raise EpisodeError(f"{root}: actions/states row counts differ")
    if meta.n_samples != len(samples):
        raise EpisodeError(f"{root}: meta.n_samples does not match tables")
    for a, b in zip(samples, samples[1:]):
        if b.t <= a.t:
            raise EpisodeError(f"{root}: timestamps not strictly increasing")
    boundaries = set(meta.run_boundaries)
    for prev, cur in zip(samples, samples[1:]):
        if cur.t in boundaries:
            continue
        for got, want in zip(
            (cur.v.vx - prev.v.vx, cur.v.vy - prev.v.vy, cur.v.vz - prev.v.vz),
            (cur.dv.vx, cur.dv.vy, cur.dv.vz),
        ):
            if abs(got - want) > _DV_TOL:
                raise EpisodeError(f"{root}: dv inconsistency at t={cur.t}")
    return Episode(meta=meta, samples=samples, root=root)


def _rows(fh):
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None:
        raise EpisodeError("empty table")
    yield from reader


def _dv_is_zero(sample: Sample) -> bool:
    return sample.dv.vx == 0.0 and sample.dv.vy == 0.0 and sample.dv.vz == 0.0


def prune_static(episode: Episode, keep_n: int = 2) -> Episode:
    """Drop redundant static stretches.

    Maximal runs of zero-increment samples longer than ``keep_n`` are
    trimmed to their first ``keep_n`` samples.  The first and last samples
    of the episode are always retained (a trailing run keeps ``keep_n - 1``
    plus the final sample so no retained run exceeds ``keep_n``).  Retained
    samples are untouched; gap positions are recorded in the metadata.
    """
    if keep_n < 1:
        raise EpisodeError("keep_n must be at least 1")
    samples = episode.samples
    n = len(samples)
    if n == 0:
        raise EpisodeError("cannot prune an empty episode")
    keep = [True] * n
    i = 0
    while i < n:
        if not _dv_is_zero(samples[i]):
            i += 1
            continue
        j = i
        while j < n and _dv_is_zero(samples[j]):
            j += 1
        run_len = j - i
        if run_len > keep_n:
            if j == n:  # trailing run: budget one slot for the forced last sample
                head = max(keep_n - 1, 1) if i == 0 else keep_n - 1
                for k in range(i + head, n - 1):
                    keep[k] = False
            else:
                for k in range(i + keep_n, j):
                    keep[k] = False
        i = j
    keep[0] = True
    keep[-1] = True

    retained = [s for s, flag in zip(samples, keep) if flag]
    boundaries = set(episode.meta.run_boundaries)
    for idx in range(1, n):
        if keep[idx] and not keep[idx - 1]:
            boundaries.add(samples[idx].t)
    meta = EpisodeMeta(
        task_category=episode.meta.task_category,
        instruction=episode.meta.instruction,
        scene=episode.meta.scene,
        config_hash=episode.meta.config_hash,
        seed=episode.meta.seed,
        randomize_pose=episode.meta.randomize_pose,
        sample_rate_hz=episode.meta.sample_rate_hz,
        n_samples=len(retained),
        pruned=True,
        run_boundaries=sorted(boundaries),
    )
    return Episode(meta=meta, samples=retained, root=episode.root)


def mse(pred: list[VoltageTriple], truth: list[VoltageTriple]) -> MetricsReport:
    """Per-axis mean squared error between two aligned voltage sequences."""
    if len(pred) != len(truth):
        raise EpisodeError(f"length mismatch: {len(pred)} vs {len(truth)}")
    if not pred:
        raise EpisodeError("need at least one sample")
    sx = sy = sz = 0.0
    for p, q in zip(pred, truth):
        sx += (p.vx - q.vx) ** 2
        sy += (p.vy - q.vy) ** 2
        sz += (p.vz - q.vz) ** 2
    n = len(pred)
    return MetricsReport(mse_x=sx / n, mse_y=sy / n, mse_z=sz / n, n=n)


def summarize_dataset(root: str | Path) -> dict:
    """Walk a dataset tree; aggregate counts, flagging corrupt episodes."""
    root = Path(root)
    episodes = 0
    total_pairs = 0
    per_category: dict[str, int] = {}
    corrupt: list[str] = []
    if root.is_dir():
        for entry in sorted(root.iterdir()):
            if not entry.is_dir() or not (entry / "meta.json").is_file():
                continue
            try:
                ep = load_episode(entry)
            except EpisodeError as exc:
                corrupt.append(f"{entry.name}: {exc}")
                continue
            episodes += 1
            total_pairs += len(ep.samples)
            cat = ep.meta.task_category
            per_category[cat] = per_category.get(cat, 0) + len(ep.samples)
    return {
        "episodes": episodes,
        "total_pairs": total_pairs,
        "per_category": per_category,
        "corrupt": corrupt,
    }


def replay_episode(episode: Episode, config) -> RobotState:
    """Re-feed an episode's dv column through a fresh simulator.

    With the episode's seed and the same calibration this reproduces the
    recorded final state bit-for-bit.
    """
    from .actuation import SafetyEnvelope, apply_increment
    from .robot import Simulator

    sim = Simulator(config)
    env = SafetyEnvelope(v_max=config.actuation.v_max, dv_max=config.actuation.dv_max)
    sim.reset(seed=episode.meta.seed, randomize_pose=episode.meta.randomize_pose)
    v = VoltageTriple()
    for sample in episode.samples[1:]:
        v = apply_increment(v, sample.dv, env)
        sim.step(v)
    return sim.state


def read_voltage_csv(path: str | Path) -> list[VoltageTriple]:
    """Read voltages from a CSV: 3 columns (vx, vy, vz) or actions.csv layout."""
    out: list[VoltageTriple] = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row:
                continue
            try:
                vals = [float(x) for x in row]
            except ValueError:
                continue  # header
            if len(vals) == 3:
                out.append(VoltageTriple(*vals))
            elif len(vals) >= 4:
                out.append(VoltageTriple(*vals[1:4]))
            else:
                raise EpisodeError(f"{path}: row with {len(vals)} columns")
    if not out:
        raise EpisodeError(f"{path}: no voltage rows")
    return out
