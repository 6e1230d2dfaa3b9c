"""Command line: train, eval, cross-eval, baseline.

Exit codes: 0 success, 1 runtime abort, 2 usage or configuration error.
Run directories go under ``$SWARMGUIDE_OUTPUT`` (default ``./runs``).
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
from pathlib import Path

import yaml

from . import harness
from .tasks import TaskSpec
from .trainer import TrainerConfig, TrainingAborted, train

OUTPUT_ENV = "SWARMGUIDE_OUTPUT"
REQUIRED = ("task.kind", "task.n_agents", "episodes", "seed")
TASK_FIELDS = {f.name for f in dataclasses.fields(TaskSpec)}
TRAINER_FIELDS = {f.name for f in dataclasses.fields(TrainerConfig)}


class ConfigError(Exception):
    pass


def _parse_scalar(text: str):
    return yaml.safe_load(text)


def _coerce(cls, values: dict, section: str) -> dict:
    """Cast values to the type of each field's default (YAML reads '1e-3' as a string)."""
    defaults = {f.name: f.default for f in dataclasses.fields(cls)}
    out = {}
    for name, value in values.items():
        default = defaults[name]
        try:
            if default is None and isinstance(value, str):
                value = float(value)
            elif isinstance(default, bool):
                if not isinstance(value, bool):
                    raise ValueError("expected true/false")
            elif isinstance(default, float) and not isinstance(value, bool):
                value = float(value)
            elif isinstance(default, int) and not isinstance(value, bool):
                if float(value) != int(float(value)):
                    raise ValueError("expected an integer")
                value = int(float(value))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field '{section}.{name}': {exc}") from exc
        out[name] = value
    return out


def load_config(path=None, overrides=()) -> dict:
    """Merge a YAML config file with ``section.field=value`` overrides."""
    cfg = {"task": {}, "trainer": {}}
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text()) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a mapping")
        for key, value in loaded.items():
            if key in ("task", "trainer"):
                if not isinstance(value, dict):
                    raise ConfigError(f"'{key}' must be a mapping")
                cfg[key].update(value)
            else:
                cfg[key] = value
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        section, dot, name = key.partition(".")
        if dot:
            cfg.setdefault(section, {})[name] = _parse_scalar(value)
        else:
            cfg[key] = _parse_scalar(value)
    return cfg


def resolve_config(cfg: dict):
    """Validate a merged config; returns (TaskSpec, TrainerConfig, episodes, seed)."""
    for key in REQUIRED:
        section, _, name = key.partition(".")
        holder = cfg.get(section, {}) if name else cfg
        if (name or section) not in holder or holder[name or section] is None:
            raise ConfigError(f"missing required field '{key}'")
    unknown = set(cfg) - {"task", "trainer", "episodes", "seed"}
    unknown |= {f"task.{k}" for k in set(cfg["task"]) - TASK_FIELDS}
    unknown |= {f"trainer.{k}" for k in set(cfg["trainer"]) - TRAINER_FIELDS}
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
    try:
        spec = TaskSpec(**_coerce(TaskSpec, cfg["task"], "task"))
        tcfg = TrainerConfig(**_coerce(TrainerConfig, cfg["trainer"], "trainer"))
        episodes, seed = int(cfg["episodes"]), int(cfg["seed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    if episodes < 0:
        raise ConfigError("field 'episodes' must be >= 0")
    return spec, tcfg, episodes, seed


def snapshot(spec: TaskSpec, tcfg: TrainerConfig, episodes: int, seed: int) -> dict:
    task = dataclasses.asdict(spec)
    task["edge_band"] = list(task["edge_band"])
    trainer = dataclasses.asdict(tcfg)
    trainer["critic_hidden"] = list(trainer["critic_hidden"])
    trainer["actor_hidden"] = list(trainer["actor_hidden"])
    return {"task": task, "trainer": trainer, "episodes": episodes, "seed": seed}


def _flag_overrides(args) -> list:
    pairs = [("task.kind", args.task), ("task.n_agents", args.agents), ("episodes", args.episodes),
             ("seed", args.seed), ("task.episode_length", args.episode_length),
             ("trainer.critic_mode", args.mode)]
    return [f"{k}={v}" for k, v in pairs if v is not None] + list(args.set or [])


def _run_dir(args, seed: int, tag: str = "") -> Path:
    root = Path(args.out or os.environ.get(OUTPUT_ENV, "runs"))
    stamp = time.strftime("%Y%m%d-%H%M%S")
    path = root / f"{stamp}{tag}-seed{seed}"
    n = 1
    while path.exists():
        n += 1
        path = root / f"{stamp}{tag}-seed{seed}-{n}"
    path.mkdir(parents=True)
    return path


def _train_setup(args):
    cfg = load_config(args.config, _flag_overrides(args))
    return resolve_config(cfg)


def cmd_train(args) -> int:
    spec, tcfg, episodes, seed = _train_setup(args)
    run_dir = _run_dir(args, seed)
    (run_dir / "config.yaml").write_text(yaml.safe_dump(snapshot(spec, tcfg, episodes, seed), sort_keys=True))
    train(spec, tcfg, episodes, seed, run_dir=run_dir)
    print(run_dir)
    return 0


def cmd_baseline(args) -> int:
    if args.task is None:
        args.task = "localization"
    if args.agents is None:
        args.agents = 1
    spec, tcfg, episodes, seed = _train_setup(args)
    bspec = harness.baseline_spec(spec)
    run_dir = _run_dir(args, seed, "-baseline")
    (run_dir / "config.yaml").write_text(yaml.safe_dump(snapshot(bspec, tcfg, episodes, seed), sort_keys=True))
    _, res = harness.no_comm_baseline(spec, tcfg, episodes, seed, runs=args.runs, run_dir=run_dir)
    harness.write_returns_csv(run_dir / "returns.csv", res)
    print(f"{run_dir}\n{res.mean!r} {res.std!r}")
    return 0


def _checkpoint_path(p: str) -> Path:
    path = Path(p)
    if path.is_dir():
        return harness.latest_checkpoint(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint {p} does not exist")
    return path


def cmd_eval(args) -> int:
    path = _checkpoint_path(args.checkpoint)
    actor, meta = harness.load_actor(path)
    spec = harness.task_from_meta(meta, kind=args.task, n_agents=args.agents,
                                  episode_length=args.episode_length)
    runs = 500 if args.full else args.runs
    res = harness.evaluate(actor, spec, runs, args.seed, jobs=args.jobs)
    if args.returns:
        harness.write_returns_csv(args.returns, res)
    print(repr(res.mean) if runs == 1 else f"{res.mean!r} {res.std!r}")
    return 0


def cmd_cross_eval(args) -> int:
    cks = {}
    for p in args.checkpoints:
        cks[str(p)] = _checkpoint_path(p)
    rows = []
    runs = 500 if args.full else args.runs
    for label, path in cks.items():
        actor, meta = harness.load_actor(path)
        spec = harness.task_from_meta(meta, episode_length=args.episode_length)
        rows += harness.cross_evaluate({label: (actor, spec)}, args.agents, runs, args.seed, jobs=args.jobs)
    if args.output:
        harness.write_cross_csv(args.output, rows)
    else:
        harness.write_cross_csv(sys.stdout, rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmguide", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def train_args(p):
        p.add_argument("--config", help="YAML file with task/trainer sections, episodes and seed")
        p.add_argument("--task", choices=["graph", "localization"])
        p.add_argument("--agents", type=int)
        p.add_argument("--episodes", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--episode-length", type=int)
        p.add_argument("--mode", choices=["guided", "non-guided"])
        p.add_argument("--set", action="append", metavar="SECTION.FIELD=VALUE",
                       help="override any config field, e.g. trainer.tau=1e-3")
        p.add_argument("--out", help=f"output root (default ${OUTPUT_ENV} or ./runs)")

    p = sub.add_parser("train", help="train a guided (or non-guided) swarm policy")
    train_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("baseline", help="train the single-agent no-communication localization policy")
    train_args(p)
    p.add_argument("--runs", type=int, default=50)
    p.set_defaults(func=cmd_baseline)

    def eval_args(p):
        p.add_argument("--runs", type=int, default=50)
        p.add_argument("--full", action="store_true", help="500 runs per policy")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--episode-length", type=int)
        p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("eval", help="evaluate one checkpoint (file or run directory)")
    p.add_argument("checkpoint")
    p.add_argument("--task", choices=["graph", "localization"])
    p.add_argument("--agents", type=int)
    p.add_argument("--returns", help="write per-run returns CSV here")
    eval_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cross-eval", help="evaluate checkpoints across agent counts")
    p.add_argument("checkpoints", nargs="+")
    p.add_argument("--agents", type=int, nargs="+", required=True)
    p.add_argument("--output", help="CSV path (default stdout)")
    eval_args(p)
    p.set_defaults(func=cmd_cross_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, harness.DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingAborted as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
