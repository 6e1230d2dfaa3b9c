"""Kinematics and distances on a square periodic world."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

A_R_BOUNDS = (0.0, 1.0)
A_PHI_BOUNDS = (-np.pi, np.pi)
_ACTION_LO = np.array([A_R_BOUNDS[0], A_PHI_BOUNDS[0]])
_ACTION_HI = np.array([A_R_BOUNDS[1], A_PHI_BOUNDS[1]])


@dataclass(frozen=True)
class WorldExtent:
    half_width: float

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")

    @property
    def width(self) -> float:
        return 2.0 * self.half_width


def wrap_coordinate(v, half_width: float):
    """Map ``v`` into [-half_width, half_width) modulo the world width."""
    w = 2.0 * half_width
    out = np.mod(np.asarray(v, dtype=np.float64) + half_width, w) - half_width
    # fmod rounding can land exactly on +half_width for tiny negative inputs
    out = np.where(out >= half_width, out - w, out)
    if np.ndim(out) == 0:
        return float(out)
    return out


def normalize_angle(phi):
    """Map angles into (-pi, pi]."""
    out = np.pi - np.mod(np.pi - np.asarray(phi, dtype=np.float64), 2.0 * np.pi)
    if np.ndim(out) == 0:
        return float(out)
    return out


def clamp_action(action):
    """Clip raw actions (..., 2) to the feasible box, never rejecting."""
    a = np.asarray(action, dtype=np.float64)
    return np.minimum(np.maximum(a, _ACTION_LO), _ACTION_HI)


def step_pose(pose, action, world: WorldExtent):
    """Advance poses ``(..., 3)`` = [x, y, phi] by clamped actions ``(..., 2)``.

    The heading is turned first, then the agent moves ``a_r`` along it.
    """
    pose = np.asarray(pose, dtype=np.float64)
    a = clamp_action(action)
    heading = pose[..., 2] + a[..., 1]
    out = np.empty(np.broadcast_shapes(pose.shape, a.shape[:-1] + (3,)))
    out[..., 0] = wrap_coordinate(pose[..., 0] + a[..., 0] * np.cos(heading), world.half_width)
    out[..., 1] = wrap_coordinate(pose[..., 1] + a[..., 0] * np.sin(heading), world.half_width)
    out[..., 2] = normalize_angle(heading)
    return out


def min_image_delta(p, q, world: WorldExtent):
    """Shortest displacement from ``p`` to ``q`` on the torus, per axis."""
    d = np.asarray(q, dtype=np.float64)[..., :2] - np.asarray(p, dtype=np.float64)[..., :2]
    w = world.width
    return d - w * np.round(d / w)


def torus_distance(p, q, world: WorldExtent):
    """Minimum-image Euclidean distance between positions (extra columns ignored)."""
    d = np.sqrt(np.sum(min_image_delta(p, q, world) ** 2, axis=-1))
    if np.ndim(d) == 0:
        return float(d)
    return d


def pairwise_distances(positions, world: WorldExtent):
    """(M, M) matrix of torus distances between agent positions."""
    pos = np.asarray(positions, dtype=np.float64)[:, :2]
    return torus_distance(pos[:, None, :], pos[None, :, :], world)
