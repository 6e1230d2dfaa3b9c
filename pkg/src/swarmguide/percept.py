"""Neighbourhood distance histograms and per-agent observation-action histories."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTION_DIM = 2


def rbf(dist, center, sigma: float):
    """Gaussian radial basis value exp(-(dist - center)^2 / (2 sigma^2))."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return np.exp(-((np.asarray(dist, dtype=np.float64) - center) ** 2) / (2.0 * sigma * sigma))


@dataclass(frozen=True)
class HistogramConfig:
    n_bins: int = 21
    radius: float = 4.0
    sigma: float = 0.25
    centers: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        if self.centers is None:
            object.__setattr__(self, "centers", np.linspace(0.0, self.radius, self.n_bins))
        c = np.asarray(self.centers, dtype=np.float64)
        if c.shape != (self.n_bins,) or np.any(np.diff(c) <= 0):
            raise ValueError("centers must be K strictly increasing values")
        if c[0] < 0 or c[-1] > self.radius or not self.sigma > 0:
            raise ValueError("centers must lie in [0, radius] and sigma must be positive")
        object.__setattr__(self, "centers", c)


def histogram(distances, cfg: HistogramConfig) -> np.ndarray:
    """Normalized RBF histogram over the in-range neighbour distances.

    ``distances`` must exclude the agent itself. Returns the all-zero vector
    when no neighbour lies within ``cfg.radius``.
    """
    d = np.asarray(distances, dtype=np.float64).ravel()
    d = d[(d >= 0.0) & (d <= cfg.radius)]
    if d.size == 0:
        return np.zeros(cfg.n_bins)
    mass = rbf(d[:, None], cfg.centers[None, :], cfg.sigma).sum(axis=0)
    return mass / mass.sum()


def histograms(dist_matrix, cfg: HistogramConfig) -> np.ndarray:
    """Row-wise :func:`histogram` for an (M, M) distance matrix, diagonal excluded."""
    D = np.asarray(dist_matrix, dtype=np.float64)
    m = D.shape[0]
    mask = (D <= cfg.radius) & ~np.eye(m, dtype=bool)
    psi = rbf(D[:, :, None], cfg.centers[None, None, :], cfg.sigma) * mask[:, :, None]
    mass = psi.sum(axis=1)
    total = mass.sum(axis=1, keepdims=True)
    out = np.zeros_like(mass)
    nz = total[:, 0] > 0
    out[nz] = mass[nz] / total[nz]
    return out


def empty_history(obs_dim: int, horizon: int = 10, n_agents: int | None = None) -> np.ndarray:
    """Zero-padded history of shape (horizon, obs_dim + 2), or (M, horizon, obs_dim + 2)."""
    shape = (horizon, obs_dim + ACTION_DIM)
    if n_agents is not None:
        shape = (n_agents,) + shape
    return np.zeros(shape)


def push_history(h, obs, action) -> np.ndarray:
    """Evict the oldest (observation, action) slot and append the new one.

    Works on a single history (eta, w) or a stack of them (..., eta, w); the
    input array is not modified.
    """
    h = np.asarray(h)
    slot = np.concatenate([np.asarray(obs, dtype=np.float64), np.asarray(action, dtype=np.float64)], axis=-1)
    if slot.shape[-1] != h.shape[-1]:
        raise ValueError(f"slot width {slot.shape[-1]} does not match history width {h.shape[-1]}")
    out = np.empty_like(h)
    out[..., :-1, :] = h[..., 1:, :]
    out[..., -1, :] = slot
    return out


def flatten_history(h) -> np.ndarray:
    """Flatten the trailing (eta, w) axes, oldest slot first."""
    h = np.asarray(h)
    return h.reshape(h.shape[:-2] + (h.shape[-2] * h.shape[-1],))


def history_dim(obs_dim: int, horizon: int = 10) -> int:
    return horizon * (obs_dim + ACTION_DIM)
