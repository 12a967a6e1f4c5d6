"""Minimal dense networks with manual backprop for the threshold controller.

Nothing here is clever: fully-connected layers, tanh hidden activations,
linear or sigmoid output, plain SGD steps.  Gradients are exact (verified
against finite differences in the test suite), and parameters are exposed
as one flat vector for soft updates, checkpoints and gradient checks.
"""

from __future__ import annotations

import numpy as np

__all__ = ["MLP"]


class MLP:
    """Fixed-architecture dense net.

    sizes = (in, h1, ..., out); tanh on hidden layers; `out_act` is either
    "linear" or "sigmoid".  Weights are initialized Xavier-uniform from the
    provided generator so every agent is reproducible from its stream.
    """

    def __init__(self, sizes, out_act: str = "linear", gen: np.random.Generator | None = None):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if out_act not in ("linear", "sigmoid"):
            raise ValueError(f"unknown output activation {out_act!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.out_act = out_act
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            if gen is None:
                w = np.zeros((fan_out, fan_in))
            else:
                w = gen.uniform(-bound, bound, size=(fan_out, fan_in))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    # -- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cache(x)
        return out

    def forward_cache(self, x: np.ndarray):
        """Returns (output, cache) with cache holding the activations."""
        a = np.asarray(x, dtype=float)
        acts = [a]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            if i < last:
                a = np.tanh(z)
            elif self.out_act == "sigmoid":
                a = 1.0 / (1.0 + np.exp(-z))
            else:
                a = z
            acts.append(a)
        return a, acts

    def backward(self, cache, dout: np.ndarray):
        """Backprop `dout` (d loss / d output) through the cached pass.

        Returns (weight grads, bias grads, d loss / d input).
        """
        acts = cache
        delta = np.asarray(dout, dtype=float)
        if self.out_act == "sigmoid":
            y = acts[-1]
            delta = delta * y * (1.0 - y)
        grads_w: list[np.ndarray] = [None] * len(self.weights)
        grads_b: list[np.ndarray] = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = delta.T @ acts[i]
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i]) * (1.0 - acts[i] * acts[i])
        dx = delta @ self.weights[0]
        return grads_w, grads_b, dx

    def sgd_step(self, grads_w, grads_b, lr: float, ascend: bool = False) -> None:
        sign = 1.0 if ascend else -1.0
        for i in range(len(self.weights)):
            self.weights[i] += sign * lr * grads_w[i]
            self.biases[i] += sign * lr * grads_b[i]

    # -- parameter plumbing ---------------------------------------------------

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def get_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_flat(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        if values.size != self.n_params:
            raise ValueError("flat vector size mismatch")
        i = 0
        for k in range(len(self.weights)):
            w, b = self.weights[k], self.biases[k]
            self.weights[k] = values[i : i + w.size].reshape(w.shape).copy()
            i += w.size
            self.biases[k] = values[i : i + b.size].copy()
            i += b.size

    def clone(self) -> "MLP":
        twin = MLP(self.sizes, out_act=self.out_act, gen=None)
        twin.set_flat(self.get_flat())
        return twin
