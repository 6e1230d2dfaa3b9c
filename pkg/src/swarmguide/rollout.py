"""Episode rollouts of a shared actor, with or without exploration noise."""
from __future__ import annotations

import numpy as np

from . import tasks
from .percept import empty_history, flatten_history, push_history
from .torus import clamp_action

DEFAULT_NOISE_STD = (0.1, 0.1 * np.pi)


def explore(action, rng, std=DEFAULT_NOISE_STD):
    """Add zero-mean Gaussian noise per action dimension, then clamp to bounds."""
    a = np.asarray(action, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    if np.any(std > 0):
        a = a + rng.normal(size=a.shape) * std
    return clamp_action(a)


def start_histories(state, spec):
    """Histories at t=0: zero padding plus the first observation with a zero action."""
    obs = tasks.observe_all(state, spec)
    h = empty_history(spec.obs_dim, spec.horizon, state.n_agents)
    return push_history(h, obs, np.zeros((state.n_agents, 2)))


def policy_actions(actor, hist):
    """Raw actor outputs for every agent's flattened history."""
    return actor.forward(flatten_history(hist))


def run_episode(actor, spec, rng_seed, noise_rng=None, noise_std=DEFAULT_NOISE_STD,
                on_step=None, record=None):
    """Roll out one episode; returns the undiscounted return.

    ``on_step(state, hist, action, reward, next_state, next_hist)`` sees every
    transition; ``record(state, reward)`` sees the reset state and each
    successor state (reward ``None`` for the reset state).
    """
    state = tasks.reset(spec, rng_seed)
    hist = start_histories(state, spec)
    if record is not None:
        record(state, None)
    total = 0.0
    for _ in range(spec.episode_length):
        raw = policy_actions(actor, hist)
        a = explore(raw, noise_rng, noise_std) if noise_rng is not None else clamp_action(raw)
        nxt, r = tasks.step(state, a, spec)
        nxt_hist = push_history(hist, tasks.observe_all(nxt, spec), a)
        if on_step is not None:
            on_step(state, hist, a, r, nxt, nxt_hist)
        if record is not None:
            record(nxt, r)
        total += r
        state, hist = nxt, nxt_hist
    return total


def eval_seeds(rng_seed, runs: int) -> list:
    """Independent per-run episode seeds derived from one base seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(rng_seed).spawn(runs)]


def evaluate_returns(actor, spec, runs: int, rng_seed) -> np.ndarray:
    """Noise-free undiscounted returns of ``runs`` independent episodes."""
    return np.array([run_episode(actor, spec, s) for s in eval_seeds(rng_seed, runs)])
