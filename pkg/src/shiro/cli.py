"""Command-line entry point: train, eval, kl-check, export-plots.

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import VARIANTS, ConfigError, RunConfig
from .diagnostics import policy_kl_gaussian, theorem1_check
from .env import make_env
from .plots import export_plots
from .trainer import (
    CheckpointError,
    NumericalAbort,
    _philox,
    evaluate,
    load_checkpoint,
    train_run,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("shiro")


def _print(obj):
    print(json.dumps(obj, indent=2))


def _strict_json(obj):
    """Non-finite floats become strings so the dump stays valid JSON."""
    if isinstance(obj, dict):
        return {k: _strict_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_strict_json(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.variant is not None:
        overrides["variant"] = args.variant
    if args.steps is not None:
        overrides["total_env_steps"] = args.steps
    if args.temperature is not None:
        overrides["temperature_mode_high"] = overrides["temperature_mode_low"] = args.temperature
    cfg = cfg.replace(**overrides)
    out = Path(args.out)
    try:
        trainer = train_run(cfg, out_dir=out, resume=args.resume)
    except NumericalAbort as exc:
        dump = out / "numerical_abort.json"
        out.mkdir(parents=True, exist_ok=True)
        dump.write_text(json.dumps(_strict_json({"error": str(exc), **exc.dump}), indent=2, allow_nan=False))
        print(f"numerical abort: {exc} (details in {dump})", file=sys.stderr)
        return EXIT_NUMERICAL
    last = trainer.metrics[-1].to_dict() if trainer.metrics else None
    _print({"out": str(out), "env_step": trainer.env_step, "last_metrics": last})
    return EXIT_OK


def cmd_eval(args) -> int:
    trainer = load_checkpoint(args.checkpoint)
    seed = trainer.config.seed if args.seed is None else args.seed
    success, ret = evaluate(trainer.controller(), trainer.eval_env, args.episodes, seed)
    _print({"checkpoint": str(args.checkpoint), "env_step": trainer.env_step, "episodes": args.episodes,
            "success_rate": success, "mean_return": ret})
    return EXIT_OK


def _check_subgoal(trainer, state, goal):
    if trainer.high is not None:
        return trainer.high.policy.mean(state, goal)
    limit = trainer.env.subgoal_limit
    return np.clip(goal - state, -limit, limit)


def cmd_kl_check(args) -> int:
    a, b = load_checkpoint(args.checkpoint_a), load_checkpoint(args.checkpoint_b)
    if a.config.env_name != b.config.env_name:
        raise ConfigError("checkpoints were trained on different environments")
    env = make_env(a.config.env_name, eval_mode=True)
    start, goal = env.reset(_philox(args.seed))
    subgoal = _check_subgoal(a, start, goal)
    buf = a.low_buffer
    if len(buf):
        idx = buf.sample_indices(a.config.kl_probe_states, _philox(args.seed, 1))
        states, goals = buf.data["s"][idx], buf.data["g"][idx]
    else:
        states, goals = start[None, :], subgoal[None, :]
    mean_kl, max_kl = policy_kl_gaussian(a.low.policy, b.low.policy, states, goals)
    res = theorem1_check(env, a.low.policy, b.low.policy, subgoal, start, a.config.c, args.rollouts,
                         grid_cell=args.grid_cell, rng=_philox(args.seed, 2))
    _print({"probe_states": len(states), "kl_mean": mean_kl, "kl_max": max_kl,
            "subgoal": subgoal.tolist(), "start_state": start.tolist(), "c": a.config.c,
            "rollouts": args.rollouts, **res.to_dict()})
    return EXIT_OK


def cmd_export_plots(args) -> int:
    written = export_plots(args.run, args.out)
    _print({"written": [str(p) for p in written]})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shiro", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one variant and write metrics, CSVs and a checkpoint")
    t.add_argument("--config", help="JSON file mirroring RunConfig (defaults when omitted)")
    t.add_argument("--seed", type=int)
    t.add_argument("--variant", choices=sorted(VARIANTS))
    t.add_argument("--temperature", choices=("const", "learned"), help="temperature mode for both levels")
    t.add_argument("--steps", type=int, help="override total_env_steps")
    t.add_argument("--out", default="run", help="output directory")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint without exploration")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int)
    e.set_defaults(func=cmd_eval)

    k = sub.add_parser("kl-check", help="low-level KL and abstracted-transition drift between checkpoints")
    k.add_argument("--checkpoint-a", required=True)
    k.add_argument("--checkpoint-b", required=True)
    k.add_argument("--rollouts", type=int, default=10_000)
    k.add_argument("--grid-cell", type=float, default=0.5)
    k.add_argument("--seed", type=int, default=0)
    k.set_defaults(func=cmd_kl_check)

    x = sub.add_parser("export-plots", help="emit CSV series for plotting")
    x.add_argument("--run", required=True, help="run directory written by train")
    x.add_argument("--out", help="destination (default RUN/plots)")
    x.set_defaults(func=cmd_export_plots)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
