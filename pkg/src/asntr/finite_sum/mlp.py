"""Dense ReLU network with hand-written backpropagation.

Parameters live in one flat vector. Each layer contributes its weight matrix
of shape (fan_in, fan_out), packed row-major, followed by its bias vector.
Hidden layers use ReLU, the last layer is linear and feeds the loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NonFiniteValueError

SOFTMAX_CE = "softmax-cross-entropy"
HALF_MSE = "half-mse"
LOSSES = (SOFTMAX_CE, HALF_MSE)


def _logsumexp(z):
    zmax = z.max(axis=1, keepdims=True)
    return (zmax + np.log(np.exp(z - zmax).sum(axis=1, keepdims=True)))[:, 0]


def _softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class DenseMlp:
    layer_sizes: tuple
    loss: str = SOFTMAX_CE

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError("need at least input and output layer sizes, all positive")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def n_params(self) -> int:
        s = self.layer_sizes
        return sum(s[i] * s[i + 1] + s[i + 1] for i in range(len(s) - 1))

    def unpack(self, w):
        """Views of ``w`` as a list of (W, b) pairs."""
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {w.shape}")
        layers, pos = [], 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            W = w[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
            pos += fan_in * fan_out
            b = w[pos:pos + fan_out]
            pos += fan_out
            layers.append((W, b))
        return layers

    def pack(self, layers) -> np.ndarray:
        parts = []
        for (W, b), fan_in, fan_out in zip(layers, self.layer_sizes[:-1], self.layer_sizes[1:]):
            W = np.asarray(W, dtype=float)
            b = np.asarray(b, dtype=float)
            if W.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise ValueError("layer shapes do not match layer_sizes")
            parts += [W.ravel(), b]
        return np.concatenate(parts)

    def _forward(self, w, x):
        layers = self.unpack(w)
        acts, pre = [x], []
        a = x
        for i, (W, b) in enumerate(layers):
            z = a @ W + b
            pre.append(z)
            a = np.maximum(z, 0.0) if i < len(layers) - 1 else z
            acts.append(a)
        if not np.all(np.isfinite(a)):
            raise NonFiniteValueError("non-finite network activations")
        return layers, acts, pre

    def forward(self, w, x) -> np.ndarray:
        """Network output before the loss (logits or regression prediction)."""
        return self._forward(w, np.atleast_2d(np.asarray(x, dtype=float)))[1][-1]

    def _loss_from_output(self, out, y):
        if self.loss == SOFTMAX_CE:
            # -sum_k y_k log softmax(z)_k, written through log-sum-exp
            vals = y.sum(axis=1) * _logsumexp(out) - np.einsum("bk,bk->b", y, out)
            dout = _softmax(out) * y.sum(axis=1, keepdims=True) - y
        else:
            r = out - y
            vals = 0.5 * np.einsum("bk,bk->b", r, r)
            dout = r
        return vals, dout

    def batch_loss(self, w, x, y) -> np.ndarray:
        out = self.forward(w, x)
        return self._loss_from_output(out, np.atleast_2d(y))[0]

    def batch_loss_and_grad(self, w, x, y):
        """Per-sample losses and the gradient of their mean."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        layers, acts, pre = self._forward(w, x)
        vals, delta = self._loss_from_output(acts[-1], y)
        delta = delta / x.shape[0]
        grads = [None] * len(layers)
        for i in range(len(layers) - 1, -1, -1):
            W, _ = layers[i]
            grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
            if i > 0:
                delta = (delta @ W.T) * (pre[i - 1] > 0)
        return vals, self.pack(grads)


def mlp_loss_and_grad(net: DenseMlp, w, x, y):
    """Loss and gradient for a single sample ``(x, y)``."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    y = np.asarray(y, dtype=float).reshape(1, -1)
    if x.shape[1] != net.layer_sizes[0]:
        raise ValueError("input dimension mismatch")
    vals, grad = net.batch_loss_and_grad(w, x, y)
    return float(vals[0]), grad


def glorot_init(net: DenseMlp, seed: int) -> np.ndarray:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(net.layer_sizes[:-1], net.layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append((rng.uniform(-limit, limit, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return net.pack(layers)


def default_architecture(input_dim: int, n_outputs: int, task: str) -> tuple:
    if task == "classification":
        return (input_dim, 32, 16, n_outputs)
    return (input_dim, 16, 8, n_outputs)
