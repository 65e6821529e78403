"""Small neural building blocks with hand-written backprop.

Everything here is plain numpy: an MLP (ReLU hidden layers, linear head)
with explicit forward/backward, an Adam optimizer, a sinusoidal timestep
embedding, and a frozen randomly-initialized point encoder in the PointNet
style (shared pointwise layers, symmetric max pooling).  The encoder is
never trained; its weights are drawn once from a seed and stored alongside
checkpoints.
"""

from __future__ import annotations

import numpy as np

TIME_EMBED_WIDTH = 16
ENCODER_PRE_SCALE = 20.0  # meters -> roughly unit scale for desk objects


def time_embedding(n, t_total: int, width: int = TIME_EMBED_WIDTH) -> np.ndarray:
    """Sinusoidal embedding of diffusion step n (1-based), shape (width,)."""
    half = width // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = float(n) / float(t_total) * 1000.0 * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)])


class MLP:
    """Fully-connected net; hidden activations ReLU, final layer linear."""

    def __init__(self, widths: list[int], rng: np.random.Generator):
        self.widths = list(widths)
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            w = rng.normal(size=(fan_out, fan_in)) * np.sqrt(2.0 / fan_in)
            b = np.zeros(fan_out)
            self.params.append(w)
            self.params.append(b)

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def forward(self, x: np.ndarray):
        """x: (B, d_in) -> (y: (B, d_out), cache for backward)."""
        acts = [x]
        h = x
        for i in range(self.n_layers):
            w, b = self.params[2 * i], self.params[2 * i + 1]
            h = h @ w.T + b
            if i < self.n_layers - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return h, acts

    def backward(self, cache, dy: np.ndarray):
        """Returns (grads aligned with self.params, dx)."""
        acts = cache
        grads: list[np.ndarray | None] = [None] * len(self.params)
        delta = dy
        for i in range(self.n_layers - 1, -1, -1):
            w = self.params[2 * i]
            if i < self.n_layers - 1:
                delta = delta * (acts[i + 1] > 0.0)
            grads[2 * i] = delta.T @ acts[i]
            grads[2 * i + 1] = delta.sum(axis=0)
            delta = delta @ w
        return grads, delta

    def copy_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params]

    def set_params(self, params: list[np.ndarray]) -> None:
        for mine, new in zip(self.params, params):
            if mine.shape != new.shape:
                raise ValueError("parameter shape mismatch")
            mine[...] = new


class Adam:
    """Adam over a list of parameter arrays.  lr = 0 is an exact no-op:
    neither parameters nor moments are touched."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.lr == 0.0:
            return
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"t": np.array([self.t], dtype=np.int64)}
        if self.m is not None:
            for i, (m, v) in enumerate(zip(self.m, self.v)):
                out[f"m{i}"] = m
                out[f"v{i}"] = v
        return out


class FrozenEncoder:
    """Pointwise feature extractor with max pooling, frozen at construction.

    encode(points) -> (global_descriptor (d_global,), per_point (N, d_point));
    permuting the input permutes per-point features identically and leaves
    the global descriptor unchanged (max pooling is order-exact).
    """

    def __init__(self, seed: int = 0, d_hidden: int = 48, d_point: int = 32,
                 d_global: int = 48, weights: list[np.ndarray] | None = None):
        self.seed = int(seed)
        self.d_hidden = d_hidden
        self.d_point = d_point
        self.d_global = d_global
        if weights is None:
            rng = np.random.default_rng(np.random.SeedSequence(entropy=self.seed, spawn_key=(101,)))
            self.weights = [
                rng.normal(size=(d_hidden, 3)) / np.sqrt(3.0),
                rng.normal(size=d_hidden) * 0.1,
                rng.normal(size=(d_point, d_hidden)) / np.sqrt(d_hidden),
                rng.normal(size=d_point) * 0.1,
                rng.normal(size=(d_global, d_point)) / np.sqrt(d_point),
                rng.normal(size=d_global) * 0.1,
            ]
        else:
            self.weights = weights

    def encode(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        w1, b1, w2, b2, w3, b3 = self.weights
        centered = (points - points.mean(axis=0)) * ENCODER_PRE_SCALE
        h = np.tanh(centered @ w1.T + b1)
        ppf = np.tanh(h @ w2.T + b2)
        pooled = np.tanh(ppf @ w3.T + b3).max(axis=0)
        return pooled, ppf
