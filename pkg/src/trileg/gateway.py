"""Lockstep session gateway for teleoperation and external policies.

One connection is one session.  The server speaks newline-delimited JSON
over raw TCP and the same messages over a WebSocket upgrade on the same
port (the listener sniffs the first bytes for an HTTP ``GET``).

Client to server messages::

    {"type": "act", "dv": [dvx, dvy, dvz]}
    {"type": "act_tokens", "ids": [0, 7, 7, 7, 1]}
    {"type": "reset", "seed"?, "randomize_pose"?, "task_category"?}
    {"type": "record_start", "task_category"?, "instruction"?, "seed"?,
     "randomize_pose"?}
    {"type": "record_stop"}
    {"type": "set_instruction", "text": "..."}
    {"type": "eval", "primitive": "...", "trials"?, "policy"?, "base_seed"?}

Server to client::

    {"type": "obs", "t", "frames": [L+1 base64 PNGs, oldest first],
     "state": {"v", "p", "psi", "z", "h"}, "instruction", "recording",
     "samples", "clipped", "applied_dv"}
    {"type": "ack", "op": ...}        for record_stop / set_instruction
    {"type": "eval_result", ...}
    {"type": "error", "message": ...}

Every ``act`` gets exactly one ``obs`` back after the increment has been
projected, applied and the new frame rendered (lockstep).  ``reset`` and
``record_start`` also answer with a fresh ``obs``.  Unknown message fields
are ignored; unknown types get an ``error`` reply and the session lives on.
"""

from __future__ import annotations

import base64
import json
import socket
import threading
import time
from collections import deque
from pathlib import Path

from .actuation import SafetyEnvelope, VoltageTriple, apply_increment, realized_increment
from .codec import QuantizerSpec, dequantize, sentence_from_ids
from .config import Config
from .episodes import EpisodeSink, TASK_CATEGORIES
from .errors import ValidationError
from .expert import parse_instruction, primitive_spec_for, rollout
from .primitives import (
    Kind,
    TrialResult,
    Violation,
    check_frame,
    judge_trial,
    macro_average,
    success_rate,
)
from .render import Renderer, default_scene, encode_png
from .robot import Simulator
from .wsproto import HandshakeError, LineTransport, WebSocketTransport, perform_handshake

EVAL_KINDS = {
    "squat": "SQUAT",
    "lift_leg": None,      # trial-dependent: LIFT_LEG <trial % 3>
    "rotate_left": "ROTATE_LEFT 30",
    "rotate_right": "ROTATE_RIGHT 30",
    "forward": "FORWARD 10 X",
    "recovery": None,      # trial-dependent: RECOVER <trial % 3>
}
DEFAULT_EVAL_SEED = 1000


def _instruction_for(kind: str, trial: int) -> str:
    fixed = EVAL_KINDS[kind]
    if fixed is not None:
        return fixed
    if kind == "lift_leg":
        return f"LIFT_LEG {trial % 3}"
    return f"RECOVER {trial % 3}"


def lift_leg_setup(sim: Simulator, leg: int, config: Config, h_goal: float) -> None:
    """Drive the field away from a leg until it is airborne (pre-roll)."""
    env = SafetyEnvelope(config.actuation.v_max, config.actuation.dv_max)
    for _ in range(60):
        state = sim.state
        rx, ry = sim.geometry.leg_dir_world(leg, state.psi)
        dv = VoltageTriple(
            -2.0 * rx - state.v.vx, -2.0 * ry - state.v.vy, -state.v.vz
        )
        sim.step(apply_increment(state.v, dv, env))
        if sim.state.h[leg] >= h_goal:
            return
    raise ValidationError(f"could not lift leg {leg} during evaluation setup")


def run_eval(
    kind: str,
    trials: int = 10,
    policy: str = "expert",
    config: Config | None = None,
    base_seed: int = DEFAULT_EVAL_SEED,
    act_fn=None,
) -> dict:
    """Evaluate one primitive over seeded random initial poses.

    ``policy`` is ``expert`` (scripted controller), ``zero`` (emits no
    drive; a sanity baseline) or ``external`` (``act_fn(obs) -> dv list or
    None``; ``None`` is a disconnect, failing the remaining trials).
    Returns a success-rate table row.
    """
    if kind not in EVAL_KINDS:
        raise ValidationError(f"unknown primitive {kind!r}; choose from {sorted(EVAL_KINDS)}")
    if policy not in ("expert", "zero", "external"):
        raise ValidationError(f"unknown policy {policy!r}")
    if policy == "external" and act_fn is None:
        raise ValidationError("external policy needs an act source")
    config = config or Config()
    sim = Simulator(config)
    results: list[TrialResult] = []
    disconnected = False

    for trial in range(trials):
        sim.reset(seed=base_seed + trial, randomize_pose=True)
        instr = parse_instruction(_instruction_for(kind, trial))
        if instr.kind is Kind.RECOVERY and instr.target_leg is not None:
            lift_leg_setup(sim, instr.target_leg, config, config.primitives.h_lift_mm)
        if disconnected:
            results.append(
                TrialResult(False, 0, Violation.TIMEOUT, {"disconnected": 1.0})
            )
            continue
        if policy == "expert":
            results.append(rollout(instr, sim, config).result)
        else:
            fn = (lambda _obs: [0.0, 0.0, 0.0]) if policy == "zero" else act_fn
            result, disconnected = _scripted_trial(sim, instr, config, fn, trial)
            results.append(result)

    rate, violations = success_rate(results)
    return {
        "motion_type": kind,
        "policy": policy,
        "trials": trials,
        "successes": sum(r.success for r in results),
        "rate": rate,
        "violations": violations,
        "base_seed": base_seed,
        "trial_results": [
            {
                "task": kind,
                "trial": idx,
                "success": r.success,
                "violation": r.violation.value,
                "steps_used": r.steps_used,
                "metrics": r.final_metrics,
            }
            for idx, r in enumerate(results)
        ],
    }


def _scripted_trial(
    sim: Simulator, instr, config: Config, act_fn, trial: int
) -> tuple[TrialResult, bool]:
    """One trial driven by an external act source in lockstep."""
    spec = primitive_spec_for(instr, config)
    env = SafetyEnvelope(config.actuation.v_max, config.actuation.dv_max)
    trajectory = [sim.state]
    voltages = [sim.state.v]
    run = 1 if check_frame(spec, trajectory[0], trajectory[0])[0] else 0
    disconnected = False
    for step_idx in range(spec.t_max):
        if run >= spec.t_s:
            break
        dv_list = act_fn(
            {"trial": trial, "step": step_idx, "state_obj": sim.state,
             "instruction": _instruction_for_spec(instr)}
        )
        if dv_list is None:
            disconnected = True
            break
        dv = VoltageTriple(*(float(x) for x in dv_list))
        v_new = apply_increment(sim.state.v, dv, env)
        state = sim.step(v_new)
        trajectory.append(state)
        voltages.append(v_new)
        ok, _ = check_frame(spec, trajectory[0], state)
        run = run + 1 if ok else 0
    return judge_trial(spec, trajectory, voltages), disconnected


def _instruction_for_spec(instr) -> str:
    if instr.kind is Kind.SQUAT:
        return "SQUAT"
    if instr.kind is Kind.LIFT_LEG:
        return f"LIFT_LEG {instr.target_leg}"
    if instr.kind is Kind.ROTATE_LEFT:
        return f"ROTATE_LEFT {abs(instr.psi_star_deg)}"
    if instr.kind is Kind.ROTATE_RIGHT:
        return f"ROTATE_RIGHT {abs(instr.psi_star_deg)}"
    if instr.kind is Kind.FORWARD:
        return f"FORWARD {instr.distance_mm} {instr.axis.upper()}"
    return "STAND_UP" if instr.stand_up else f"RECOVER {instr.target_leg}"


def eval_all(
    trials: int = 10,
    policy: str = "expert",
    config: Config | None = None,
    base_seed: int = DEFAULT_EVAL_SEED,
) -> dict:
    """All primitives plus the macro-average row."""
    rows = [
        run_eval(kind, trials=trials, policy=policy, config=config, base_seed=base_seed)
        for kind in EVAL_KINDS
    ]
    return {"rows": rows, "macro_average": macro_average([r["rate"] for r in rows])}


class Session:
    """One simulator instance owned by one connection, strictly serialized."""

    def __init__(self, gateway: "Gateway", index: int) -> None:
        self.gateway = gateway
        self.config = gateway.config
        self.index = index
        self.seed = self.config.sim.seed + 1009 * index
        self.sim = Simulator(self.config)
        self.renderer = Renderer(self.config.robot)
        self.envelope = SafetyEnvelope(
            self.config.actuation.v_max, self.config.actuation.dv_max
        )
        self.quantizer = QuantizerSpec.from_config(self.config.codec)
        self.window_len = self.config.gateway.frame_window + 1
        self.task_category = "grid_marker"
        self.scene = default_scene(self.task_category)
        self.instruction = "SQUAT"
        self.sink: EpisodeSink | None = None
        self.obs_counter = 0
        self._frames: deque[bytes] = deque(maxlen=self.window_len)
        self._episode_counter = 0
        self._reset_sim(self.seed, randomize_pose=False)

    # -- observation plumbing -------------------------------------------

    def _reset_sim(self, seed: int, randomize_pose: bool) -> None:
        self.sim.reset(seed=seed, randomize_pose=randomize_pose)
        self.last_seed = seed
        self.last_randomize = randomize_pose
        frame = encode_png(self.renderer.render(self.sim.state, self.scene))
        self._frames.clear()
        for _ in range(self.window_len):
            self._frames.append(frame)

    def _push_frame(self) -> None:
        self._frames.append(encode_png(self.renderer.render(self.sim.state, self.scene)))

    def observation(self, clipped: bool = False, applied_dv=None) -> dict:
        state = self.sim.state
        obs = {
            "type": "obs",
            "t": state.t,
            "obs_index": self.obs_counter,
            "frames": [base64.b64encode(f).decode("ascii") for f in self._frames],
            "state": state.as_dict(),
            "instruction": self.instruction,
            "recording": self.sink is not None,
            "samples": len(self.sink.samples) if self.sink else 0,
            "clipped": clipped,
            "applied_dv": list(applied_dv) if applied_dv is not None else [0.0, 0.0, 0.0],
        }
        self.obs_counter += 1
        return obs

    # -- message handling -------------------------------------------------

    def handle(self, msg: dict) -> dict:
        mtype = msg.get("type")
        try:
            if mtype == "act":
                return self._handle_act_dv(msg)
            if mtype == "act_tokens":
                return self._handle_act_tokens(msg)
            if mtype == "reset":
                return self._handle_reset(msg)
            if mtype == "record_start":
                return self._handle_record_start(msg)
            if mtype == "record_stop":
                return self._handle_record_stop()
            if mtype == "set_instruction":
                self.instruction = str(msg.get("text", ""))
                return {"type": "ack", "op": "set_instruction", "text": self.instruction}
            if mtype == "eval":
                return self._handle_eval(msg)
            return {"type": "error", "message": f"unknown message type {mtype!r}"}
        except (ValidationError, KeyError, TypeError, OverflowError) as exc:
            return {"type": "error", "message": str(exc)}

    def _apply_and_step(self, dv: VoltageTriple) -> dict:
        prev = self.sim.state.v
        v_new = apply_increment(prev, dv, self.envelope)
        realized = realized_increment(prev, v_new)
        clipped = any(
            abs(r - want) > 5e-5
            for r, want in zip(
                (realized.vx, realized.vy, realized.vz), (dv.vx, dv.vy, dv.vz)
            )
        )
        state = self.sim.step(v_new)
        self._push_frame()
        if self.sink is not None:
            self.sink.append(state.t, self._frames[-1], state, v_new, realized)
        if self.gateway.pace_s > 0:
            time.sleep(self.gateway.pace_s)
        return self.observation(
            clipped=clipped, applied_dv=(realized.vx, realized.vy, realized.vz)
        )

    def _handle_act_dv(self, msg: dict) -> dict:
        dv_raw = msg.get("dv")
        if not isinstance(dv_raw, (list, tuple)) or len(dv_raw) != 3:
            raise ValidationError("act.dv must be a 3-element list")
        dv = VoltageTriple(*(float(x) for x in dv_raw)).require_finite("act.dv")
        return self._apply_and_step(dv)

    def _handle_act_tokens(self, msg: dict) -> dict:
        ids = msg.get("ids")
        if not isinstance(ids, (list, tuple)):
            raise ValidationError("act_tokens.ids must be a list")
        sentence = sentence_from_ids([int(i) for i in ids], self.quantizer)
        return self._apply_and_step(dequantize(sentence, self.quantizer))

    def _handle_reset(self, msg: dict) -> dict:
        if self.sink is not None:
            raise ValidationError("stop recording before reset")
        category = msg.get("task_category")
        if category is not None:
            if category not in TASK_CATEGORIES:
                raise ValidationError(f"unknown task category {category!r}")
            self.task_category = category
            self.scene = default_scene(category)
        seed = int(msg.get("seed", self.seed))
        randomize = bool(msg.get("randomize_pose", False))
        self._reset_sim(seed, randomize)
        return self.observation()

    def _handle_record_start(self, msg: dict) -> dict:
        if self.sink is not None:
            raise ValidationError("already recording")
        category = msg.get("task_category", self.task_category)
        if category not in TASK_CATEGORIES:
            raise ValidationError(f"unknown task category {category!r}")
        instruction = str(msg.get("instruction", self.instruction))
        seed = int(msg.get("seed", self.seed + self._episode_counter + 1))
        randomize = bool(msg.get("randomize_pose", False))
        self.task_category = category
        self.scene = default_scene(category)
        self.instruction = instruction
        # A recording always starts from a reset so the episode replays
        # from its seed alone.
        self._reset_sim(seed, randomize)
        directory = (
            self.gateway.record_root
            / f"session{self.index:03d}_ep{self._episode_counter:04d}_{category}"
        )
        self._episode_counter += 1
        self.sink = EpisodeSink(
            directory,
            task_category=category,
            instruction=instruction,
            scene=self.scene.to_dict(),
            config_hash=self.config.hash(),
            seed=seed,
            randomize_pose=randomize,
        )
        state = self.sim.state
        self.sink.append(state.t, self._frames[-1], state, state.v, VoltageTriple())
        return self.observation()

    def _handle_record_stop(self) -> dict:
        if self.sink is None:
            raise ValidationError("not recording")
        episode = self.sink.finalize()
        self.sink = None
        return {
            "type": "ack",
            "op": "record_stop",
            "episode_dir": str(episode.root),
            "samples": len(episode.samples),
        }

    def _handle_eval(self, msg: dict) -> dict:
        kind = msg.get("primitive")
        trials = int(msg.get("trials", 10))
        base_seed = int(msg.get("base_seed", DEFAULT_EVAL_SEED))
        policy = msg.get("policy", "expert")
        if policy == "external":
            raise ValidationError("external eval runs through run_external_eval")
        row = run_eval(kind, trials=trials, policy=policy, config=self.config,
                       base_seed=base_seed)
        return {"type": "eval_result", **row}

    def run_external_eval(self, msg: dict, transport) -> dict:
        """Evaluate the connected client as the policy, lockstep per trial."""
        kind = msg.get("primitive")
        trials = int(msg.get("trials", 10))
        base_seed = int(msg.get("base_seed", DEFAULT_EVAL_SEED))
        eval_frames: deque[bytes] = deque(maxlen=self.window_len)

        def act_fn(evalobs: dict):
            state = evalobs["state_obj"]
            frame = encode_png(self.renderer.render(state, self.scene))
            if evalobs["step"] == 0:
                eval_frames.clear()
                for _ in range(self.window_len):
                    eval_frames.append(frame)
            else:
                eval_frames.append(frame)
            payload = {
                "type": "obs",
                "t": state.t,
                "obs_index": self.obs_counter,
                "frames": [base64.b64encode(f).decode("ascii") for f in eval_frames],
                "state": state.as_dict(),
                "instruction": evalobs["instruction"],
                "recording": False,
                "samples": 0,
                "clipped": False,
                "applied_dv": [0.0, 0.0, 0.0],
                "eval_trial": evalobs["trial"],
                "eval_step": evalobs["step"],
            }
            self.obs_counter += 1
            transport.send_message(json.dumps(payload))
            raw = transport.recv_message()
            if raw is None:
                return None
            try:
                reply = json.loads(raw)
                if reply.get("type") == "act":
                    return [float(x) for x in reply["dv"]]
                if reply.get("type") == "act_tokens":
                    sentence = sentence_from_ids(
                        [int(i) for i in reply["ids"]], self.quantizer
                    )
                    dv = dequantize(sentence, self.quantizer)
                    return [dv.vx, dv.vy, dv.vz]
            except (ValueError, KeyError, TypeError, ValidationError):
                return None
            return None

        try:
            row = run_eval(
                kind, trials=trials, policy="external", config=self.config,
                base_seed=base_seed, act_fn=act_fn,
            )
        except ValidationError as exc:
            return {"type": "error", "message": str(exc)}
        return {"type": "eval_result", **row}

    def close(self) -> None:
        if self.sink is not None:
            self.sink.finalize()
            self.sink = None


class Gateway:
    """TCP/WebSocket server hosting independent lockstep sessions."""

    def __init__(
        self,
        config: Config | None = None,
        record_root: str | Path | None = None,
        pace_hz: float | None = None,
    ) -> None:
        self.config = (config or Config()).validate()
        self.record_root = Path(record_root or self.config.gateway.record_root)
        pace = self.config.gateway.pace_hz if pace_hz is None else pace_hz
        self.pace_s = 1.0 / pace if pace and pace > 0 else 0.0
        self._listener: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()
        self._session_counter = 0
        self._lock = threading.Lock()

    def serve(self, host: str = "127.0.0.1", port: int = 0) -> tuple[str, int]:
        """Bind and start accepting; returns the bound (host, port)."""
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((host, port))
        listener.listen(16)
        self._listener = listener
        accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        accept_thread.start()
        self._threads.append(accept_thread)
        return listener.getsockname()[:2]

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _addr = self._listener.accept()
            except OSError:
                return
            thread = threading.Thread(target=self._serve_client, args=(conn,), daemon=True)
            thread.start()
            self._threads.append(thread)

    def _serve_client(self, conn: socket.socket) -> None:
        transport = None
        session = None
        try:
            # WebSocket clients speak first (the upgrade request); raw
            # clients wait for the initial obs.  A short peek settles it.
            conn.settimeout(0.2)
            try:
                first = conn.recv(1, socket.MSG_PEEK)
            except TimeoutError:
                first = b""
            conn.settimeout(None)
            if first == b"G":
                perform_handshake(conn)
                transport = WebSocketTransport(conn)
            else:
                transport = LineTransport(conn)
            with self._lock:
                index = self._session_counter
                self._session_counter += 1
            session = Session(self, index)
            transport.send_message(json.dumps(session.observation()))
            while not self._stop.is_set():
                raw = transport.recv_message()
                if raw is None:
                    return
                try:
                    msg = json.loads(raw)
                    if not isinstance(msg, dict):
                        raise ValueError("message must be a JSON object")
                except ValueError as exc:
                    transport.send_message(
                        json.dumps({"type": "error", "message": f"bad message: {exc}"})
                    )
                    continue
                if msg.get("type") == "eval" and msg.get("policy") == "external":
                    reply = session.run_external_eval(msg, transport)
                else:
                    reply = session.handle(msg)
                transport.send_message(json.dumps(reply))
        except (HandshakeError, ConnectionError, OSError):
            pass
        finally:
            if session is not None:
                session.close()
            if transport is not None:
                transport.close()
            else:
                conn.close()

    def shutdown(self) -> None:
        self._stop.set()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        for thread in self._threads:
            thread.join(timeout=2.0)
