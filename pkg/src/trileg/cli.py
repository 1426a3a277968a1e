"""Command line interface.

Verbs: serve, rollout, eval, dataset-summarize, dataset-prune, mse, replay.
Output is machine readable (JSON documents or CSV rows) on stdout; exit
status 0 on success, 2 on usage errors, 1 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
import threading

from .config import Config, load_config, save_config
from .episodes import (
    load_episode,
    mse,
    prune_static,
    read_voltage_csv,
    replay_episode,
    save_episode,
    summarize_dataset,
)
from .errors import EpisodeError, InstructionParseError, ValidationError
from .expert import INSTRUCTION_PRESETS, rollout
from .gateway import DEFAULT_EVAL_SEED, EVAL_KINDS, Gateway, eval_all, run_eval
from .render import Renderer, default_scene, encode_png
from .robot import Simulator


def _add_config_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config", metavar="PATH", default=None,
        help="calibration file (JSON); defaults to $TRILEG_CONFIG or built-ins",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trileg",
        description="Tri-leg magnetic soft robot simulator and dataset toolchain",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("serve", help="run the session gateway")
    _add_config_flag(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8731)
    p.add_argument("--record-root", default=None, help="episode output directory")
    p.add_argument("--pace", action="store_true",
                   help="pace acts to the configured control rate (10 Hz)")

    p = sub.add_parser("rollout", help="run the scripted expert on one instruction")
    _add_config_flag(p)
    p.add_argument("--instruction", required=True, help='e.g. "FORWARD 10 X"')
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--randomize-pose", action="store_true")
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--record", metavar="DIR", default=None,
                   help="record the rollout as an episode directory")
    p.add_argument("--task-category", default="grid_marker")

    p = sub.add_parser("eval", help="success-rate table for the motion primitives")
    _add_config_flag(p)
    p.add_argument("--primitive", choices=sorted(EVAL_KINDS), default=None,
                   help="one primitive (omit with --all)")
    p.add_argument("--all", action="store_true", help="evaluate every primitive")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--policy", choices=["expert", "zero"], default="expert")
    p.add_argument("--seed", type=int, default=DEFAULT_EVAL_SEED)
    p.add_argument("--friction-scale", type=float, default=None,
                   help="override the simulated ground friction multiplier")
    p.add_argument("--per-trial", action="store_true",
                   help="also print one row per trial (task, trial, success, "
                        "violation, steps, metrics)")

    p = sub.add_parser("dataset-summarize", help="validate and count a dataset tree")
    p.add_argument("root")

    p = sub.add_parser("dataset-prune", help="drop redundant static samples")
    p.add_argument("src")
    p.add_argument("dst")
    p.add_argument("--keep", type=int, default=2, metavar="N",
                   help="samples retained per static run (default 2)")

    p = sub.add_parser("mse", help="per-axis voltage MSE between two CSV files")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--label", default="all", help="motion-type label for the row")

    p = sub.add_parser("replay", help="replay an episode and verify the final state")
    _add_config_flag(p)
    p.add_argument("episode")

    p = sub.add_parser("presets", help="print the bundled instruction prompt presets")

    p = sub.add_parser("write-config", help="write the default calibration file")
    p.add_argument("path")

    return parser


def _load(args) -> Config:
    cfg = load_config(getattr(args, "config", None))
    return cfg.validate()


def cmd_serve(args) -> int:
    config = _load(args)
    pace_hz = config.gateway.pace_hz if args.pace else 0.0
    gateway = Gateway(config, record_root=args.record_root, pace_hz=pace_hz)
    host, port = gateway.serve(args.host, args.port)
    print(json.dumps({"serving": f"{host}:{port}", "record_root": str(gateway.record_root)}))
    sys.stdout.flush()
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        gateway.shutdown()
    return 0


def cmd_rollout(args) -> int:
    config = _load(args)
    sim = Simulator(config)
    sim.reset(seed=args.seed, randomize_pose=args.randomize_pose)
    recorder = None
    sink_holder = {}
    if args.record:
        from .episodes import EpisodeSink

        renderer = Renderer(config.robot)
        scene = default_scene(args.task_category)
        sink = EpisodeSink(
            args.record,
            task_category=args.task_category,
            instruction=args.instruction,
            scene=scene.to_dict(),
            config_hash=config.hash(),
            seed=args.seed,
            randomize_pose=args.randomize_pose,
        )
        sink_holder["sink"] = sink

        def recorder(state, v, dv):
            frame = encode_png(renderer.render(state, scene))
            sink.append(state.t, frame, state, v, dv)

    result = rollout(args.instruction, sim, config, max_steps=args.max_steps,
                     recorder=recorder)
    out = {
        "instruction": args.instruction,
        "success": result.result.success,
        "steps_used": result.result.steps_used,
        "violation": result.result.violation.value,
        "final_metrics": result.result.final_metrics,
        "final_state": result.trajectory[-1].as_dict(),
    }
    if args.record:
        episode = sink_holder["sink"].finalize()
        out["episode_dir"] = str(episode.root)
        out["samples"] = len(episode.samples)
    print(json.dumps(out))
    return 0 if result.result.success else 1


def _print_trial_rows(rows: list[dict]) -> None:
    print("task,trial,success,violation,steps_used,metrics")
    for tr in rows:
        metrics = json.dumps(tr["metrics"], sort_keys=True)
        print(
            f"{tr['task']},{tr['trial']},{int(tr['success'])},{tr['violation']},"
            f"{tr['steps_used']},\"{metrics.replace(chr(34), chr(39))}\""
        )


def cmd_eval(args) -> int:
    config = _load(args)
    if args.friction_scale is not None:
        config.sim.friction_scale = args.friction_scale
    if args.all:
        table = eval_all(trials=args.trials, policy=args.policy, config=config,
                         base_seed=args.seed)
        print("motion_type,trials,successes,rate")
        for row in table["rows"]:
            print(f"{row['motion_type']},{row['trials']},{row['successes']},{row['rate']}")
        print(f"macro_average,,,{table['macro_average']}")
        if args.per_trial:
            for row in table["rows"]:
                _print_trial_rows(row["trial_results"])
        return 0
    if not args.primitive:
        print("choose --primitive or --all", file=sys.stderr)
        return 2
    row = run_eval(args.primitive, trials=args.trials, policy=args.policy,
                   config=config, base_seed=args.seed)
    print("motion_type,trials,successes,rate")
    print(f"{row['motion_type']},{row['trials']},{row['successes']},{row['rate']}")
    if args.per_trial:
        _print_trial_rows(row["trial_results"])
    return 0


def cmd_dataset_summarize(args) -> int:
    print(json.dumps(summarize_dataset(args.root), indent=2))
    return 0


def cmd_dataset_prune(args) -> int:
    episode = load_episode(args.src)
    pruned = prune_static(episode, keep_n=args.keep)
    saved = save_episode(pruned, args.dst)
    print(json.dumps({
        "src": str(args.src),
        "dst": str(saved.root),
        "samples_before": len(episode.samples),
        "samples_after": len(saved.samples),
    }))
    return 0


def cmd_mse(args) -> int:
    pred = read_voltage_csv(args.pred)
    truth = read_voltage_csv(args.truth)
    report = mse(pred, truth)
    print("motion_type,mse_x,mse_y,mse_z,overall")
    print(report.as_row(args.label))
    return 0


def cmd_replay(args) -> int:
    config = _load(args)
    episode = load_episode(args.episode)
    if episode.meta.config_hash != config.hash():
        print(
            json.dumps({"error": "config hash mismatch", "episode": episode.meta.config_hash,
                        "current": config.hash()}),
            file=sys.stderr,
        )
        return 1
    final = replay_episode(episode, config)
    recorded = episode.samples[-1].state
    match = final == recorded
    print(json.dumps({
        "episode": str(args.episode),
        "samples": len(episode.samples),
        "final_state": final.as_dict(),
        "recorded_final_state": recorded.as_dict(),
        "bit_exact": match,
    }))
    return 0 if match else 1


def cmd_presets(_args) -> int:
    print(json.dumps(INSTRUCTION_PRESETS, indent=2))
    return 0


def cmd_write_config(args) -> int:
    save_config(Config(), args.path)
    print(json.dumps({"written": str(args.path)}))
    return 0


_COMMANDS = {
    "serve": cmd_serve,
    "rollout": cmd_rollout,
    "eval": cmd_eval,
    "dataset-summarize": cmd_dataset_summarize,
    "dataset-prune": cmd_dataset_prune,
    "mse": cmd_mse,
    "replay": cmd_replay,
    "presets": cmd_presets,
    "write-config": cmd_write_config,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.verb](args)
    except (ValidationError, EpisodeError, InstructionParseError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
