"""Small numpy MLP engine: ELU networks, backprop, Adam, target networks."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

CHECKPOINT_FORMAT = "swarmguide-mlp"
CHECKPOINT_VERSION = 1

# output-layer init bounds for the two network roles
CRITIC_OUTPUT_BOUND = 3e-4
ACTOR_OUTPUT_BOUND = 3e-3


def elu(z):
    z = np.asarray(z, dtype=np.float64)
    out = z.copy()
    neg = z < 0
    out[neg] = np.expm1(z[neg])
    return out if out.ndim else float(out)


class Mlp:
    """Fully connected network, ELU on hidden layers and a linear output.

    Weights are stored as (fan_in, fan_out) so a batch ``x`` of shape (B, in)
    maps to ``x @ W + b``. All parameters live in one flat buffer ``flat``;
    ``weights`` and ``biases`` are views into it.
    """

    def __init__(self, widths, weights, biases):
        self.widths = [int(w) for w in widths]
        weights = [np.asarray(w, dtype=np.float64) for w in weights]
        biases = [np.asarray(b, dtype=np.float64) for b in biases]
        if len(weights) != len(self.widths) - 1 or len(biases) != len(weights):
            raise ValueError("need one weight matrix and bias per layer")
        for i, (W, b) in enumerate(zip(weights, biases)):
            if W.shape != (self.widths[i], self.widths[i + 1]) or b.shape != (self.widths[i + 1],):
                raise ValueError(f"layer {i} has shape {W.shape}/{b.shape}, expected widths {self.widths}")
        self.flat = np.concatenate([a.ravel() for pair in zip(weights, biases) for a in pair])
        self.weights, self.biases = [], []
        offset = 0
        for W, b in zip(weights, biases):
            self.weights.append(self.flat[offset:offset + W.size].reshape(W.shape))
            offset += W.size
            self.biases.append(self.flat[offset:offset + b.size])
            offset += b.size

    @classmethod
    def init(cls, widths, output_init_bound: float, rng_seed=None) -> "Mlp":
        """Hidden layers ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)], output layer ~ U[-b, b]."""
        widths = [int(w) for w in widths]
        if len(widths) < 3:
            raise ValueError("an Mlp needs at least one hidden layer")
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
        weights, biases = [], []
        n_layers = len(widths) - 1
        for i in range(n_layers):
            fan_in, fan_out = widths[i], widths[i + 1]
            bound = output_init_bound if i == n_layers - 1 else 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(widths, weights, biases)

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    @property
    def params(self) -> list:
        """Parameter arrays in layer order [W0, b0, W1, b1, ...]; these alias the net."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp(self.widths, [W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"input width {x.shape[-1]} does not match network input {self.in_dim}")
        return x

    def forward(self, x):
        x = self._check_input(x)
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = elu(h)
        return h

    __call__ = forward

    def forward_cached(self, x):
        """Forward pass that also returns the activations needed by :meth:`backward`."""
        x = self._check_input(x)
        single = x.ndim == 1
        h = x[None, :] if single else x
        acts = [h]
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = elu(h)
            acts.append(h)
        out = h[0] if single else h
        return out, (acts, single)

    def backward(self, cache, grad_out, param_grads=True):
        """Reverse-mode gradients of sum(output * grad_out).

        Returns ``(param_grads, grad_in)`` with ``param_grads`` ordered like
        :attr:`params` and summed over the batch (``None`` when not requested).
        """
        acts, single = cache
        g = np.asarray(grad_out, dtype=np.float64)
        if single:
            g = g[None, :]
        grads = [None] * (2 * len(self.weights)) if param_grads else None
        for i in range(len(self.weights) - 1, -1, -1):
            if i < len(self.weights) - 1:
                # ELU'(z) = 1 for z >= 0, else e^z = elu(z) + 1
                a = acts[i + 1]
                g = g * np.where(a >= 0, 1.0, a + 1.0)
            if param_grads:
                grads[2 * i] = acts[i].T @ g
                grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return grads, (g[0] if single else g)

    def to_dict(self) -> dict:
        return {
            "widths": self.widths,
            "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in zip(self.weights, self.biases)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        return cls(d["widths"], [l["W"] for l in d["layers"]], [l["b"] for l in d["layers"]])


class Adam:
    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        """Descend along ``grads`` in place; pass negated gradients to ascend."""
        if len(grads) != len(params):
            raise ValueError("params/grads length mismatch")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient passed to Adam")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


def flat_grads(grads) -> np.ndarray:
    """Concatenate per-array gradients in :attr:`Mlp.flat` order."""
    return np.concatenate([g.ravel() for g in grads])


def soft_update(live: Mlp, target: Mlp, tau: float) -> Mlp:
    """target <- tau * live + (1 - tau) * target, in place."""
    if live.widths != target.widths:
        raise ValueError("live and target networks differ in shape")
    q = target.flat
    q *= 1.0 - tau
    q += tau * live.flat
    return target


class TargetPair:
    """A live network and its slowly tracking target copy."""

    def __init__(self, live: Mlp, tau: float = 1e-4, target: Mlp | None = None):
        if not 0 < tau <= 1:
            raise ValueError("tau must be in (0, 1]")
        self.live = live
        self.target = live.copy() if target is None else target
        self.tau = tau

    def soft_update(self) -> Mlp:
        return soft_update(self.live, self.target, self.tau)


def invert_gradient(g, p, p_min, p_max):
    """Scale ascent gradients on a bounded parameter by the remaining headroom.

    Gradients that push ``p`` up are scaled by (p_max - p)/(p_max - p_min),
    the rest by (p - p_min)/(p_max - p_min). Outside the bounds the factor
    turns negative and pushes ``p`` back in.
    """
    g = np.asarray(g, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    span = np.asarray(p_max, dtype=np.float64) - p_min
    if np.any(span <= 0):
        raise ValueError("p_min must be smaller than p_max")
    out = np.where(g > 0, g * (p_max - p) / span, g * (p - p_min) / span)
    if out.ndim == 0:
        return float(out)
    return out


def save_checkpoint(path, nets: dict, tau: float | None = None, meta: dict | None = None) -> None:
    """Write named networks to one JSON document; floats round-trip exactly."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "tau": tau,
        "meta": meta or {},
        "networks": {name: net.to_dict() for name, net in nets.items()},
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_checkpoint(path):
    """Returns ``(nets, tau, meta)``."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    nets = {name: Mlp.from_dict(d) for name, d in doc["networks"].items()}
    return nets, doc.get("tau"), doc.get("meta", {})
