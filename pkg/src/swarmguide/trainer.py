"""Centralized guided critic with one shared decentralized actor.

The critic scores the joint action of all agents from the global state (or,
in the non-guided ablation, from the joint history). The actor maps each
agent's own history to its action and is updated with the sum of the
per-agent deterministic policy gradients taken through the critic.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import rollout
from .nn import (ACTOR_OUTPUT_BOUND, CRITIC_OUTPUT_BOUND, Adam, Mlp, TargetPair,
                 flat_grads, invert_gradient, save_checkpoint)
from .percept import ACTION_DIM, flatten_history, history_dim
from .replay import ReplayBuffer, Transition
from .tasks import TaskSpec
from .torus import A_PHI_BOUNDS, A_R_BOUNDS, clamp_action

log = logging.getLogger(__name__)

GUIDED = "guided"
NON_GUIDED = "non-guided"
CRITIC_MODES = (GUIDED, NON_GUIDED)

METRICS_COLUMNS = ["episode", "env_steps", "critic_loss_mean", "eval_return_mean", "eval_return_std"]
TIMING_COLUMNS = ["episode", "wallclock_s"]

_ACTION_LO = np.array([A_R_BOUNDS[0], A_PHI_BOUNDS[0]])
_ACTION_HI = np.array([A_R_BOUNDS[1], A_PHI_BOUNDS[1]])


class TrainingAborted(RuntimeError):
    """A loss, target or gradient went non-finite."""


@dataclass
class TrainerConfig:
    gamma: float = 0.99
    critic_lr: float = 1e-4
    actor_lr: float = 1e-4
    tau: float = 1e-4
    batch_size: int = 32
    warmup: int = 1000
    noise_std_r: float = 0.1
    noise_std_phi: float = 0.1 * np.pi
    updates_per_step: int = 1
    critic_mode: str = GUIDED
    critic_hidden: tuple = (512, 256, 128)
    actor_hidden: tuple = (1024, 512, 256, 128)
    buffer_capacity: int = 500_000
    eval_interval: int = 20
    eval_runs: int = 50
    invert_gradients: bool = True

    def __post_init__(self):
        self.critic_hidden = tuple(int(w) for w in self.critic_hidden)
        self.actor_hidden = tuple(int(w) for w in self.actor_hidden)
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must be in [0, 1)")
        if min(self.critic_lr, self.actor_lr, self.tau) <= 0 or self.tau > 1:
            raise ValueError("learning rates must be positive and tau in (0, 1]")
        if self.batch_size < 1 or self.updates_per_step < 0 or self.warmup < 0:
            raise ValueError("batch_size must be positive; warmup and updates_per_step non-negative")
        if self.critic_mode not in CRITIC_MODES:
            raise ValueError(f"critic_mode must be one of {CRITIC_MODES}")
        if not self.critic_hidden or not self.actor_hidden:
            raise ValueError("both networks need at least one hidden layer")
        if self.eval_interval < 1 or self.eval_runs < 1 or self.buffer_capacity < self.batch_size:
            raise ValueError("eval_interval/eval_runs must be positive and capacity >= batch_size")
        if self.noise_std_r < 0 or self.noise_std_phi < 0:
            raise ValueError("noise stds must be non-negative")

    @property
    def noise_std(self):
        return (self.noise_std_r, self.noise_std_phi)


@dataclass
class Batch:
    """Array view of a list of transitions."""
    s: np.ndarray        # (B, state_dim)
    h: np.ndarray        # (B, M, history_dim)
    a: np.ndarray        # (B, M, 2)
    r: np.ndarray        # (B,)
    s_next: np.ndarray
    h_next: np.ndarray

    @classmethod
    def from_transitions(cls, items) -> "Batch":
        return cls(np.stack([t.s.vector() for t in items]),
                   np.stack([t.h for t in items]),
                   np.stack([t.a for t in items]),
                   np.array([t.r for t in items], dtype=np.float64),
                   np.stack([t.s_next.vector() for t in items]),
                   np.stack([t.h_next for t in items]))

    @property
    def size(self) -> int:
        return self.r.shape[0]


class GuidedLearner:
    """Networks, target copies and optimizers of one training run."""

    def __init__(self, spec: TaskSpec, cfg: TrainerConfig, rng_seed=None):
        self.spec = spec
        self.cfg = cfg
        self.n_agents = spec.n_agents
        self.hist_dim = history_dim(spec.obs_dim, spec.horizon)
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
        actor = Mlp.init([self.hist_dim, *cfg.actor_hidden, ACTION_DIM], ACTOR_OUTPUT_BOUND, rng)
        critic = Mlp.init([self.critic_in_dim, *cfg.critic_hidden, 1], CRITIC_OUTPUT_BOUND, rng)
        self.actor = TargetPair(actor, cfg.tau)
        self.critic = TargetPair(critic, cfg.tau)
        self.actor_opt = Adam([actor.flat], lr=cfg.actor_lr)
        self.critic_opt = Adam([critic.flat], lr=cfg.critic_lr)

    @property
    def critic_in_dim(self) -> int:
        m = self.n_agents
        if self.cfg.critic_mode == GUIDED:
            return self.spec.state_dim + ACTION_DIM * m
        return self.hist_dim * m + ACTION_DIM * m

    def _context(self, states, hists):
        """Non-action part of the critic input: global state, or joint history."""
        if self.cfg.critic_mode == GUIDED:
            return states
        return hists.reshape(hists.shape[0], -1)

    def critic_input(self, states, hists, actions):
        b = actions.shape[0]
        return np.concatenate([self._context(states, hists), actions.reshape(b, -1)], axis=1)

    def joint_actions(self, actor: Mlp, hists):
        """Apply one actor to every agent's history: (B, M, hd) -> (B, M, 2)."""
        b, m, _ = hists.shape
        return actor.forward(hists.reshape(b * m, -1)).reshape(b, m, ACTION_DIM)

    def critic_target(self, batch: Batch) -> np.ndarray:
        """y = r + gamma * Q'(s', [mu'(h'^1), ..., mu'(h'^M)])."""
        a_next = clamp_action(self.joint_actions(self.actor.target, batch.h_next))
        q_next = self.critic.target.forward(self.critic_input(batch.s_next, batch.h_next, a_next))[:, 0]
        y = batch.r + self.cfg.gamma * q_next
        if not np.all(np.isfinite(y)):
            raise TrainingAborted(f"non-finite critic target (max |y| = {np.nanmax(np.abs(y))})")
        return y

    def critic_gradients(self, batch: Batch, y):
        """Loss 0.5 * mean((Q - y)^2) and its parameter gradients."""
        x = self.critic_input(batch.s, batch.h, batch.a)
        q, cache = self.critic.live.forward_cached(x)
        diff = q[:, 0] - y
        loss = 0.5 * float(np.mean(diff * diff))
        if not np.isfinite(loss):
            raise TrainingAborted("non-finite critic loss")
        grads, _ = self.critic.live.backward(cache, (diff / batch.size)[:, None])
        return loss, grads

    def critic_update(self, batch: Batch) -> float:
        """One Adam descent step on the Bellman error; returns the pre-update loss."""
        y = self.critic_target(batch)
        loss, grads = self.critic_gradients(batch, y)
        self._adam(self.critic_opt, self.critic.live, grads, "critic")
        return loss

    def actor_gradients(self, batch: Batch):
        """Ascent direction of mean_b sum_i Q(s, mu(h^1), ..., mu(h^M)), as descent grads."""
        b, m, hd = batch.h.shape
        actor = self.actor.live
        raw, a_cache = actor.forward_cached(batch.h.reshape(b * m, hd))
        x = self.critic_input(batch.s, batch.h, raw.reshape(b, m * ACTION_DIM))
        _, c_cache = self.critic.live.forward_cached(x)
        _, dx = self.critic.live.backward(c_cache, np.ones((b, 1)), param_grads=False)
        dq_da = dx[:, -m * ACTION_DIM:].reshape(b * m, ACTION_DIM)
        if self.cfg.invert_gradients:
            dq_da = invert_gradient(dq_da, raw, _ACTION_LO, _ACTION_HI)
        # rows are (transition, agent) pairs: backprop sums over agents, 1/B averages
        grads, _ = actor.backward(a_cache, -dq_da / b)
        return grads

    def actor_update(self, batch: Batch) -> None:
        self._adam(self.actor_opt, self.actor.live, self.actor_gradients(batch), "actor")

    def soft_update(self) -> None:
        self.critic.soft_update()
        self.actor.soft_update()

    def update(self, batch: Batch) -> float:
        loss = self.critic_update(batch)
        self.actor_update(batch)
        self.soft_update()
        return loss

    @staticmethod
    def _adam(opt, net, grads, name):
        try:
            opt.step([net.flat], [flat_grads(grads)])
        except FloatingPointError as exc:
            raise TrainingAborted(f"{name} update: {exc}") from exc

    def checkpoint_meta(self) -> dict:
        return {"task": asdict(self.spec), "critic_mode": self.cfg.critic_mode,
                "obs_dim": self.spec.obs_dim, "history_dim": self.hist_dim}

    def save(self, path, **extra) -> None:
        save_checkpoint(path, {"actor": self.actor.live, "critic": self.critic.live,
                               "actor_target": self.actor.target, "critic_target": self.critic.target},
                        tau=self.cfg.tau, meta={**self.checkpoint_meta(), **extra})


@dataclass
class TrainResult:
    learner: GuidedLearner
    metrics: list = field(default_factory=list)
    timing: list = field(default_factory=list)

    @property
    def actor(self) -> Mlp:
        return self.learner.actor.live

    @property
    def critic(self) -> Mlp:
        return self.learner.critic.live


def _seed_streams(rng_seed):
    init, env, noise, replay, evals = np.random.SeedSequence(rng_seed).spawn(5)
    return (np.random.default_rng(init), np.random.default_rng(env), np.random.default_rng(noise),
            np.random.default_rng(replay), int(evals.generate_state(1)[0]))


def format_metrics_row(row: dict) -> list:
    return [row["episode"], row["env_steps"], repr(row["critic_loss_mean"]),
            repr(row["eval_return_mean"]), repr(row["eval_return_std"])]


def write_metrics(path, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRICS_COLUMNS)
        w.writerows(format_metrics_row(r) for r in rows)


def train(spec: TaskSpec, cfg: TrainerConfig, episodes: int, rng_seed, run_dir=None,
          progress=None) -> TrainResult:
    """Train for ``episodes`` episodes of ``spec.episode_length`` steps.

    After warm-up every environment step stores one transition and runs
    ``cfg.updates_per_step`` rounds of critic update, actor update and soft
    target updates. Every ``cfg.eval_interval`` episodes (and after the last
    one) the noise-free policy is evaluated ``cfg.eval_runs`` times. With
    ``run_dir`` set, metrics.csv, timing.csv and per-evaluation checkpoints
    are written there.
    """
    init_rng, env_rng, noise_rng, replay_rng, eval_seed = _seed_streams(rng_seed)
    learner = GuidedLearner(spec, cfg, init_rng)
    result = TrainResult(learner)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    ready_at = max(cfg.warmup, cfg.batch_size)
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    env_steps = 0
    losses = []
    ctx = {"episode": 0, "t": 0}

    def on_step(state, hist, a, r, nxt, nxt_hist):
        nonlocal env_steps
        buffer.push(Transition(state, flatten_history(hist), a, r, nxt, flatten_history(nxt_hist)))
        env_steps += 1
        ctx["t"] += 1
        if len(buffer) < ready_at:
            return
        for _ in range(cfg.updates_per_step):
            batch = Batch.from_transitions(buffer.sample(cfg.batch_size, replay_rng))
            try:
                losses.append(learner.update(batch))
            except TrainingAborted as exc:
                raise TrainingAborted(f"episode {ctx['episode']}, step {ctx['t']}: {exc}") from exc

    for ep in range(1, episodes + 1):
        ctx["episode"], ctx["t"] = ep, 0
        episode_seed = int(env_rng.integers(2**63))
        rollout.run_episode(learner.actor.live, spec, episode_seed, noise_rng, cfg.noise_std,
                            on_step=on_step)
        if ep % cfg.eval_interval and ep != episodes:
            continue
        returns = rollout.evaluate_returns(learner.actor.live, spec, cfg.eval_runs, eval_seed)
        row = {"episode": ep, "env_steps": env_steps,
               "critic_loss_mean": float(np.mean(losses)) if losses else float("nan"),
               "eval_return_mean": float(np.mean(returns)),
               "eval_return_std": float(np.std(returns))}
        losses.clear()
        result.metrics.append(row)
        result.timing.append({"episode": ep, "wallclock_s": time.perf_counter() - t0})
        log.info("episode %d: eval return %.3f +/- %.3f", ep, row["eval_return_mean"], row["eval_return_std"])
        if progress is not None:
            progress(row)
        if run_dir is not None:
            learner.save(run_dir / "checkpoints" / f"ep{ep:06d}.json", episode=ep)
            write_metrics(run_dir / "metrics.csv", result.metrics)
            with open(run_dir / "timing.csv", "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(TIMING_COLUMNS)
                w.writerows([r["episode"], f"{r['wallclock_s']:.3f}"] for r in result.timing)
    if run_dir is not None and not result.metrics:
        write_metrics(run_dir / "metrics.csv", [])
    return result
