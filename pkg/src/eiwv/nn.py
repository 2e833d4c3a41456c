"""A tiny dense network with hand-written backprop, Adam and a Gaussian head.

Inputs are batched row-wise: ``x`` has shape ``(batch, n_in)``; a 1-d input
is treated as a batch of one and the output is squeezed back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .validation import check_random_state

__all__ = [
    "Layer",
    "DenseNet",
    "Adam",
    "adam_step",
    "clip_grad_norm",
    "GaussianHead",
    "squash_to_range",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_MAGIC",
]

_ACTIVATIONS = ("tanh", "identity")
CHECKPOINT_MAGIC = "eiwv-checkpoint 1"


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[1],):
            raise ValueError("layer weight/bias shapes do not chain")


class DenseNet:
    """Affine + activation stack.

    >>> net = DenseNet.from_sizes([4, 8, 2], rng=0)
    >>> net.forward(np.zeros(4))[0].shape
    (2,)
    """

    def __init__(self, layers: list[Layer]):
        for a, b in zip(layers, layers[1:]):
            if a.W.shape[1] != b.W.shape[0]:
                raise ValueError("consecutive layer dimensions do not chain")
        self.layers = layers

    @classmethod
    def from_sizes(cls, sizes, activation="tanh", out_activation="identity", rng=None, out_scale=1.0):
        """Glorot-uniform weights, zero biases; the last layer scaled by ``out_scale``."""
        rng = check_random_state(rng)
        layers = []
        for k, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
            last = k == len(sizes) - 2
            limit = math.sqrt(6.0 / (n_in + n_out))
            W = rng.uniform(-limit, limit, size=(n_in, n_out))
            if last:
                W *= out_scale
            layers.append(Layer(W, np.zeros(n_out), out_activation if last else activation))
        return cls(layers)

    @property
    def n_in(self) -> int:
        return self.layers[0].W.shape[0]

    @property
    def n_out(self) -> int:
        return self.layers[-1].W.shape[1]

    @property
    def n_params(self) -> int:
        return sum(l.W.size + l.b.size for l in self.layers)

    def params(self) -> list[np.ndarray]:
        out = []
        for l in self.layers:
            out.extend((l.W, l.b))
        return out

    def copy(self) -> "DenseNet":
        return DenseNet([Layer(l.W.copy(), l.b.copy(), l.activation) for l in self.layers])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        h = x[None, :] if squeeze else x
        if h.shape[1] != self.n_in:
            raise ValueError(f"input has {h.shape[1]} features, network expects {self.n_in}")
        cache = [h]
        for l in self.layers:
            h = h @ l.W + l.b
            if l.activation == "tanh":
                h = np.tanh(h)
            cache.append(h)
        return (h[0] if squeeze else h), cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad_out) -> list[np.ndarray]:
        """Gradients w.r.t. ``params()`` given dL/d(output)."""
        g = np.asarray(grad_out, dtype=float)
        if g.ndim == 1:
            g = g[None, :]
        grads: list[np.ndarray] = []
        for k in range(len(self.layers) - 1, -1, -1):
            l = self.layers[k]
            if l.activation == "tanh":
                g = g * (1.0 - cache[k + 1] ** 2)
            grads.append(g.sum(axis=0))
            grads.append(cache[k].T @ g)
            if k:
                g = g @ l.W.T
        grads.reverse()
        return grads


def clip_grad_norm(grads, max_norm: float | None):
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads:
            g *= scale
    return norm


def adam_step(params, grads, state, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update.  ``state`` is a dict holding ``t``, ``m`` and ``v``."""
    if "m" not in state:
        state["t"] = 0
        state["m"] = [np.zeros_like(p) for p in params]
        state["v"] = [np.zeros_like(p) for p in params]
    state["t"] += 1
    t = state["t"]
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


class Adam:
    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state: dict = {}

    def step(self, grads):
        adam_step(self.params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)


_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class GaussianHead:
    """Diagonal Gaussian with a learnable, clamped log standard deviation."""

    log_std: np.ndarray
    sigma_min: float = 1e-3
    sigma_max: float = 5.5

    def __post_init__(self):
        self.log_std = np.asarray(self.log_std, dtype=float).copy()
        self.clamp()

    @classmethod
    def constant(cls, n: int, sigma: float, sigma_min=1e-3, sigma_max=5.5):
        return cls(np.full(n, math.log(sigma)), sigma_min, sigma_max)

    def clamp(self) -> None:
        np.clip(self.log_std, math.log(self.sigma_min), math.log(self.sigma_max), out=self.log_std)

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)

    def sample(self, mean, rng):
        """Draw raw actions around ``mean``; returns ``(raw, log_prob)``."""
        rng = check_random_state(rng)
        raw = mean + self.std * rng.standard_normal(np.shape(mean))
        return raw, self.log_prob(raw, mean)

    def log_prob(self, raw, mean):
        z = (np.asarray(raw) - mean) / self.std
        return np.sum(-0.5 * z * z - self.log_std - 0.5 * _LOG_2PI, axis=-1)

    def log_prob_grads(self, raw, mean):
        """d log_prob / d mean (per row) and d log_prob / d log_std (per row)."""
        var = self.std**2
        diff = np.asarray(raw) - mean
        return diff / var, diff * diff / var - 1.0

    def entropy(self) -> float:
        return float(np.sum(self.log_std + 0.5 * (_LOG_2PI + 1.0)))


def squash_to_range(raw, p_min: float, p_max: float, mode: str = "clip"):
    """Map unbounded raw actions to payments in ``[p_min, p_max]``.

    ``"tanh"`` is the smooth affine-scaled tanh.  ``"clip"`` is the same affine
    map with hard clipping instead of tanh, which puts probability mass
    exactly on the bounds.  Raw 0 maps to the midpoint in both modes.
    """
    mid = 0.5 * (p_min + p_max)
    half = 0.5 * (p_max - p_min)
    raw = np.asarray(raw, dtype=float)
    if mode == "tanh":
        return mid + half * np.tanh(raw)
    if mode == "clip":
        return np.clip(mid + half * raw, p_min, p_max)
    raise ValueError(f"unknown squash mode {mode!r}")


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    """Text checkpoint: a magic line, then per tensor a shape header and values.

    Floats are written with 17 significant digits so a reload is bit-exact.
    """
    with open(path, "w") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype=float)
            if any(c.isspace() for c in name):
                raise ValueError("tensor names cannot contain whitespace")
            fh.write(" ".join(["tensor", name, str(arr.ndim), *map(str, arr.shape)]) + "\n")
            fh.write(" ".join(format(float(x), ".17g") for x in arr.ravel()) + "\n")


def load_checkpoint(path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not an eiwv checkpoint (header {header!r})")
        while True:
            line = fh.readline()
            if not line:
                break
            parts = line.split()
            if not parts:
                continue
            if parts[0] != "tensor":
                raise ValueError(f"{path}: malformed tensor header {line!r}")
            name, ndim = parts[1], int(parts[2])
            shape = tuple(int(d) for d in parts[3 : 3 + ndim])
            values = fh.readline().split()
            arr = np.array([float(v) for v in values], dtype=float)
            out[name] = arr.reshape(shape)
    return out
