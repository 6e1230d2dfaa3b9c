"""Evaluation protocols: policy evaluation, cross-evaluation, no-communication baseline."""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import rollout
from .nn import Mlp, load_checkpoint
from .percept import history_dim
from .tasks import LOCALIZATION, TaskSpec
from .trainer import TrainerConfig, train

RETURNS_COLUMNS = ["run", "seed", "return"]
CROSS_COLUMNS = ["checkpoint", "m_train", "m_eval", "return_mean", "return_std"]


class DimensionError(ValueError):
    """Actor input width does not match the task's history width."""


@dataclass
class EvalResult:
    mean: float
    std: float
    returns: np.ndarray
    seeds: list


def load_actor(checkpoint):
    """Returns ``(actor, meta)`` from a checkpoint path, or passes an Mlp through."""
    if isinstance(checkpoint, Mlp):
        return checkpoint, {}
    nets, _, meta = load_checkpoint(checkpoint)
    if "actor" not in nets:
        raise ValueError(f"{checkpoint} holds no actor network")
    return nets["actor"], meta


def task_from_meta(meta: dict, **overrides) -> TaskSpec:
    fields = dict(meta.get("task", {}))
    fields.update({k: v for k, v in overrides.items() if v is not None})
    return TaskSpec(**fields)


def _episode_return(args):
    actor, spec, seed = args
    return rollout.run_episode(actor, spec, seed)


def evaluate(checkpoint, spec: TaskSpec, runs: int = 50, rng_seed=0, jobs: int = 1) -> EvalResult:
    """Noise-free undiscounted returns over ``runs`` independently seeded episodes."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    actor, _ = load_actor(checkpoint)
    expected = history_dim(spec.obs_dim, spec.horizon)
    if actor.in_dim != expected:
        raise DimensionError(f"actor expects histories of width {actor.in_dim}, task produces {expected}")
    seeds = rollout.eval_seeds(rng_seed, runs)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            returns = np.array(list(pool.map(_episode_return, [(actor, spec, s) for s in seeds])))
    else:
        returns = np.array([rollout.run_episode(actor, spec, s) for s in seeds])
    return EvalResult(float(np.mean(returns)), float(np.std(returns)), returns, seeds)


def cross_evaluate(checkpoints, agent_counts, runs: int = 50, rng_seed=0, base_spec=None, jobs: int = 1):
    """Evaluate every checkpoint on every agent count.

    ``checkpoints`` maps a label to a checkpoint path (or ``(actor, spec)``).
    The task comes from the checkpoint metadata unless ``base_spec`` is given.
    Returns rows ``{checkpoint, m_train, m_eval, return_mean, return_std}``;
    every cell uses the same seeds, so cells are independent of evaluation order.
    """
    rows = []
    for label, ck in checkpoints.items():
        if isinstance(ck, tuple):
            actor, spec = ck
        else:
            actor, meta = load_actor(ck)
            spec = base_spec if base_spec is not None else task_from_meta(meta)
        for m in agent_counts:
            res = evaluate(actor, spec.with_agents(int(m)), runs, rng_seed, jobs)
            rows.append({"checkpoint": label, "m_train": spec.n_agents, "m_eval": int(m),
                         "return_mean": res.mean, "return_std": res.std})
    return rows


def write_cross_csv(path_or_file, rows) -> None:
    _write_csv(path_or_file, CROSS_COLUMNS,
               ([r["checkpoint"], r["m_train"], r["m_eval"], repr(r["return_mean"]), repr(r["return_std"])]
                for r in rows))


def write_returns_csv(path_or_file, result: EvalResult) -> None:
    _write_csv(path_or_file, RETURNS_COLUMNS,
               ([i, s, repr(float(r))] for i, (s, r) in enumerate(zip(result.seeds, result.returns))))


def _write_csv(path_or_file, header, rows):
    if hasattr(path_or_file, "write"):
        w = csv.writer(path_or_file)
        w.writerow(header)
        w.writerows(rows)
        return
    with open(path_or_file, "w", newline="") as f:
        _write_csv(f, header, rows)


def baseline_spec(spec: TaskSpec) -> TaskSpec:
    """Single agent that only observes [l, d_T]."""
    if spec.kind != LOCALIZATION:
        raise ValueError("the no-communication baseline is defined for the localization task")
    return replace(spec, n_agents=1, reduced_obs=True)


def no_comm_baseline(spec: TaskSpec, cfg: TrainerConfig, episodes: int, rng_seed, runs: int = 50,
                     run_dir=None):
    """Train and evaluate the no-communication single-agent localization policy.

    Returns ``(train_result, eval_result)``.
    """
    bspec = baseline_spec(spec)
    result = train(bspec, cfg, episodes, rng_seed, run_dir=run_dir)
    return result, evaluate(result.actor, bspec, runs, rng_seed)


def latest_checkpoint(run_dir) -> Path:
    cks = sorted(Path(run_dir, "checkpoints").glob("ep*.json"))
    if not cks:
        raise FileNotFoundError(f"no checkpoints under {run_dir}")
    return cks[-1]
