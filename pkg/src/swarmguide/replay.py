"""Uniform FIFO experience replay over synchronized swarm transitions."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tasks import GlobalState
from .torus import WorldExtent

SNAPSHOT_FORMAT = "swarmguide-replay"
SNAPSHOT_VERSION = 1


class NotReadyError(RuntimeError):
    """Raised when sampling from a buffer holding fewer items than the batch."""


@dataclass(frozen=True)
class Transition:
    s: GlobalState
    h: np.ndarray          # (M, history_dim) flattened joint history
    a: np.ndarray          # (M, 2) executed (clamped) joint action
    r: float
    s_next: GlobalState
    h_next: np.ndarray

    def __post_init__(self):
        m = self.s.n_agents
        if self.h.shape[0] != m or self.a.shape[0] != m or self.h_next.shape[0] != m \
                or self.s_next.n_agents != m:
            raise ValueError("all per-agent fields of a transition must have length M")
        if not np.isfinite(self.r):
            raise ValueError("transition reward must be finite")


class ReplayBuffer:
    def __init__(self, capacity: int = 500_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: list = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, t) -> None:
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self._next] = t
        self._next = (self._next + 1) % self.capacity

    def contents(self) -> list:
        """Stored items, oldest first."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._next:] + self._items[:self._next]

    def sample(self, batch_size: int = 32, rng=None) -> list:
        """Uniform draw with replacement."""
        if len(self._items) < batch_size:
            raise NotReadyError(f"buffer holds {len(self._items)} items, batch needs {batch_size}")
        if rng is None:
            rng = np.random.default_rng()
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]

    def save(self, path) -> None:
        doc = {"format": SNAPSHOT_FORMAT, "version": SNAPSHOT_VERSION, "capacity": self.capacity,
               "transitions": [_transition_to_dict(t) for t in self.contents()]}
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path) -> "ReplayBuffer":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != SNAPSHOT_FORMAT or doc.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"{path} is not a replay snapshot this version can read")
        buf = cls(doc["capacity"])
        for d in doc["transitions"]:
            buf.push(_transition_from_dict(d))
        return buf


def _state_to_dict(s: GlobalState) -> dict:
    return {"poses": s.poses.tolist(), "half_width": s.world.half_width, "t": s.t,
            "found": None if s.found is None else s.found.tolist(),
            "target": None if s.target is None else s.target.tolist()}


def _state_from_dict(d: dict) -> GlobalState:
    return GlobalState(np.array(d["poses"], dtype=np.float64), WorldExtent(d["half_width"]),
                       None if d["found"] is None else np.array(d["found"], dtype=bool),
                       None if d["target"] is None else np.array(d["target"], dtype=np.float64),
                       d["t"])


def _transition_to_dict(t: Transition) -> dict:
    return {"s": _state_to_dict(t.s), "h": t.h.tolist(), "a": t.a.tolist(), "r": t.r,
            "s_next": _state_to_dict(t.s_next), "h_next": t.h_next.tolist()}


def _transition_from_dict(d: dict) -> Transition:
    return Transition(_state_from_dict(d["s"]), np.array(d["h"]), np.array(d["a"]), d["r"],
                      _state_from_dict(d["s_next"]), np.array(d["h_next"]))
