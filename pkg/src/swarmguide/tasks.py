"""Graph-building and target-localization swarm tasks."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable, Optional

import numpy as np

from .percept import HistogramConfig, histograms
from .torus import (WorldExtent, clamp_action, pairwise_distances, step_pose,
                    torus_distance)

GRAPH = "graph"
LOCALIZATION = "localization"
TASK_KINDS = (GRAPH, LOCALIZATION)
DEFAULT_HALF_WIDTH = {GRAPH: 10.0, LOCALIZATION: 15.0}


@dataclass(frozen=True)
class TaskSpec:
    kind: str = GRAPH
    n_agents: int = 2
    half_width: Optional[float] = None
    radius: float = 4.0
    n_bins: int = 21
    sigma: float = 0.25
    edge_band: tuple = (1.5, 3.0)
    episode_length: int = 500
    action_cost: float = 0.05
    horizon: int = 10
    # localization only: observe [l, d_T] and nothing about other agents
    reduced_obs: bool = False

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}; expected one of {TASK_KINDS}")
        if self.half_width is None:
            object.__setattr__(self, "half_width", DEFAULT_HALF_WIDTH[self.kind])
        object.__setattr__(self, "edge_band", tuple(float(v) for v in self.edge_band))
        if self.n_agents < 1:
            raise ValueError("n_agents must be >= 1")
        if not (0 < self.radius < self.half_width):
            raise ValueError("radius must be positive and smaller than half_width")
        if self.n_bins < 2 or self.episode_length < 1 or self.horizon < 1:
            raise ValueError("n_bins, episode_length and horizon must be positive")
        if self.action_cost < 0 or not (0 <= self.edge_band[0] <= self.edge_band[1]):
            raise ValueError("invalid action_cost or edge_band")
        if self.reduced_obs and self.kind != LOCALIZATION:
            raise ValueError("reduced_obs only applies to the localization task")

    @cached_property
    def world(self) -> WorldExtent:
        return WorldExtent(self.half_width)

    @cached_property
    def hist_cfg(self) -> HistogramConfig:
        return HistogramConfig(self.n_bins, self.radius, self.sigma)

    @property
    def obs_dim(self) -> int:
        if self.kind == GRAPH:
            return self.n_bins
        return 2 if self.reduced_obs else self.n_bins + 3

    @property
    def state_dim(self) -> int:
        """Length of the flattened global state fed to the guided critic."""
        if self.kind == GRAPH:
            return 3 * self.n_agents
        return 4 * self.n_agents + 2

    def with_agents(self, n_agents: int) -> "TaskSpec":
        return replace(self, n_agents=n_agents)


@dataclass
class GlobalState:
    poses: np.ndarray                      # (M, 3): x, y, phi
    world: WorldExtent
    found: Optional[np.ndarray] = None     # (M,) bool, localization only
    target: Optional[np.ndarray] = None    # (2,), localization only
    t: int = 0

    @property
    def n_agents(self) -> int:
        return self.poses.shape[0]

    def vector(self) -> np.ndarray:
        """Flattened [x, y, phi(, l)] per agent, then the target position if any."""
        if self.found is None:
            return self.poses.ravel().copy()
        per_agent = np.concatenate([self.poses, self.found[:, None].astype(np.float64)], axis=1)
        return np.concatenate([per_agent.ravel(), self.target])


def reset(spec: TaskSpec, rng_seed) -> GlobalState:
    """Random initial state: uniform positions and headings, target uniform too."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    hw = spec.half_width
    m = spec.n_agents
    poses = np.empty((m, 3))
    poses[:, :2] = rng.uniform(-hw, hw, size=(m, 2))
    # (-pi, pi]
    poses[:, 2] = -rng.uniform(-np.pi, np.pi, size=m)
    if spec.kind == GRAPH:
        return GlobalState(poses, spec.world)
    target = rng.uniform(-hw, hw, size=2)
    # l starts at 0 even if the target spawns in range; it is picked up on the first step
    return GlobalState(poses, spec.world, np.zeros(m, dtype=bool), target)


def _sees_target(state: GlobalState, spec: TaskSpec) -> np.ndarray:
    return torus_distance(state.poses, state.target, state.world) <= spec.radius


def _action_cost(joint_action, spec: TaskSpec) -> float:
    a = clamp_action(joint_action)
    return spec.action_cost * float(np.sum(np.sqrt(np.sum(a * a, axis=-1))))


def count_edges(state: GlobalState, spec: TaskSpec) -> int:
    """Unordered agent pairs whose torus distance lies in the edge band."""
    D = pairwise_distances(state.poses, state.world)
    lo, hi = spec.edge_band
    iu = np.triu_indices(state.n_agents, k=1)
    d = D[iu]
    return int(np.count_nonzero((d >= lo) & (d <= hi)))


def reward_graph(state: GlobalState, joint_action, spec: TaskSpec) -> float:
    return count_edges(state, spec) - _action_cost(joint_action, spec)


def reward_localization(state: GlobalState, joint_action, spec: TaskSpec) -> float:
    return float(np.count_nonzero(state.found)) - _action_cost(joint_action, spec)


def step(state: GlobalState, joint_action, spec: TaskSpec):
    """Move all agents synchronously; returns (next_state, reward)."""
    a = np.asarray(joint_action, dtype=np.float64)
    if a.shape != (state.n_agents, 2):
        raise ValueError(f"expected joint action of shape ({state.n_agents}, 2), got {a.shape}")
    a = clamp_action(a)
    poses = step_pose(state.poses, a, state.world)
    if state.found is None:
        nxt = GlobalState(poses, state.world, t=state.t + 1)
        return nxt, reward_graph(nxt, a, spec)
    nxt = GlobalState(poses, state.world, state.found.copy(), state.target.copy(), state.t + 1)
    nxt.found |= _sees_target(nxt, spec)
    return nxt, reward_localization(nxt, a, spec)


def observe_all(state: GlobalState, spec: TaskSpec) -> np.ndarray:
    """(M, obs_dim) observations of every agent."""
    if spec.reduced_obs:
        d_t = torus_distance(state.poses, state.target, state.world)
        d_t = np.where(d_t <= spec.radius, d_t, -1.0)
        return np.stack([state.found.astype(np.float64), d_t], axis=1)
    D = pairwise_distances(state.poses, state.world)
    u = histograms(D, spec.hist_cfg)
    if spec.kind == GRAPH:
        return u
    d_t = torus_distance(state.poses, state.target, state.world)
    sees = d_t <= spec.radius
    neighbours = (D <= spec.radius) & ~np.eye(state.n_agents, dtype=bool)
    b = (neighbours & sees[None, :]).any(axis=1)
    head = np.stack([state.found.astype(np.float64), np.where(sees, d_t, -1.0),
                     b.astype(np.float64)], axis=1)
    return np.concatenate([head, u], axis=1)


def observe(state: GlobalState, agent_index: int, spec: TaskSpec) -> np.ndarray:
    if not 0 <= agent_index < state.n_agents:
        raise IndexError(f"agent_index {agent_index} out of range for {state.n_agents} agents")
    return observe_all(state, spec)[agent_index]


def trajectory_header(spec: TaskSpec) -> list:
    """Column order of trajectory dumps.

    ``episode, t, x0, y0, phi0[, l0], x1, ..., [target_x, target_y,] reward``.
    Row ``t = 0`` is the reset state with an empty reward; row ``t`` holds the
    state after step ``t`` and the reward for that step.
    """
    cols = ["episode", "t"]
    loc = spec.kind == LOCALIZATION
    for i in range(spec.n_agents):
        cols += [f"x{i}", f"y{i}", f"phi{i}"] + ([f"l{i}"] if loc else [])
    if loc:
        cols += ["target_x", "target_y"]
    return cols + ["reward"]


def trajectory_row(episode: int, state: GlobalState, reward) -> list:
    row = [episode, state.t]
    for i in range(state.n_agents):
        row += [repr(float(v)) for v in state.poses[i]]
        if state.found is not None:
            row.append(int(state.found[i]))
    if state.target is not None:
        row += [repr(float(v)) for v in state.target]
    row.append("" if reward is None else repr(float(reward)))
    return row


def write_trajectory(path, spec: TaskSpec, rows: Iterable[list]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(trajectory_header(spec))
        w.writerows(rows)
