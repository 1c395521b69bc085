"""Small dense softmax classifier over a flat parameter vector.

Hidden layers use ReLU, the output layer softmax, the loss is mean
cross-entropy. Parameters are stored flat (per layer: weights row-major as
(fan_in, fan_out), then biases) so models can be averaged and serialized as
plain vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Architecture:
    sizes: tuple[int, ...]

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))

    def unpack(self, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        layers, i = [], 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            w = theta[i:i + a * b].reshape(a, b)
            i += a * b
            layers.append((w, theta[i:i + b]))
            i += b
        return layers

    def init(self, rng: np.random.Generator) -> np.ndarray:
        parts = []
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            parts.append(rng.normal(0.0, np.sqrt(2.0 / a), size=a * b))
            parts.append(np.zeros(b))
        return np.concatenate(parts)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(arch: Architecture, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    h = np.atleast_2d(x)
    layers = arch.unpack(theta)
    for w, b in layers[:-1]:
        h = np.maximum(h @ w + b, 0.0)
    w, b = layers[-1]
    return softmax(h @ w + b)


def loss(arch: Architecture, theta: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    p = forward(arch, theta, x)
    return float(-np.mean(np.log(np.maximum(p[np.arange(len(y)), y], 1e-300))))


def loss_and_grad(arch: Architecture, theta: np.ndarray, x: np.ndarray, y: np.ndarray):
    x = np.atleast_2d(x)
    layers = arch.unpack(theta)
    acts = [x]
    h = x
    for w, b in layers[:-1]:
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    w, b = layers[-1]
    p = softmax(h @ w + b)
    n = len(y)
    value = float(-np.mean(np.log(np.maximum(p[np.arange(n), y], 1e-300))))

    delta = p.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = []
    for k in range(len(layers) - 1, -1, -1):
        w, _ = layers[k]
        a = acts[k]
        grads.append((a.T @ delta).ravel())
        grads.append(delta.sum(axis=0))
        if k:
            delta = (delta @ w.T) * (a > 0)
    # grads were collected output-first as (w, b) pairs; restore layer order
    pairs = [(grads[i], grads[i + 1]) for i in range(0, len(grads), 2)][::-1]
    return value, np.concatenate([g for pair in pairs for g in pair])


class Adam:
    def __init__(self, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Sgd:
    def __init__(self, lr=1e-2):
        self.lr = lr

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return theta - self.lr * grad


def minibatch_epoch(arch, theta, x, y, batch_size, optimizer, rng) -> np.ndarray:
    order = rng.permutation(len(y))
    for start in range(0, len(y), batch_size):
        idx = order[start:start + batch_size]
        _, g = loss_and_grad(arch, theta, x[idx], y[idx])
        theta = optimizer.step(theta, g)
    return theta


def dump_weights(arch: Architecture, theta: np.ndarray, extra: dict[str, np.ndarray] | None = None) -> str:
    """Flat text: a ``layers`` header, optional named vectors, then one
    ``W``/``b`` block per layer with row-major values."""
    lines = ["layers " + " ".join(str(s) for s in arch.sizes)]
    for name, vec in (extra or {}).items():
        lines.append(f"{name} " + " ".join(repr(float(v)) for v in np.ravel(vec)))
    for k, (w, b) in enumerate(arch.unpack(theta)):
        lines.append(f"W{k} {w.shape[0]} {w.shape[1]}")
        lines.extend(" ".join(repr(float(v)) for v in row) for row in w)
        lines.append(f"b{k} {b.shape[0]}")
        lines.append(" ".join(repr(float(v)) for v in b))
    return "\n".join(lines) + "\n"


def load_weights(text: str) -> tuple[Architecture, np.ndarray, dict[str, np.ndarray]]:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    head = lines[0].split()
    if head[0] != "layers":
        raise ValueError("weights file must start with a 'layers' header")
    arch = Architecture(tuple(int(v) for v in head[1:]))
    extra: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("W0"):
        name, *vals = lines[i].split()
        extra[name] = np.array([float(v) for v in vals])
        i += 1
    parts = []
    for k in range(len(arch.sizes) - 1):
        tag, rows, cols = lines[i].split()
        if tag != f"W{k}":
            raise ValueError(f"expected W{k} block, found {tag!r}")
        rows, cols = int(rows), int(cols)
        w = np.array([[float(v) for v in lines[i + 1 + r].split()] for r in range(rows)])
        if w.shape != (rows, cols):
            raise ValueError(f"W{k} has shape {w.shape}, header says {(rows, cols)}")
        i += 1 + rows
        tag, _ = lines[i].split()
        b = np.array([float(v) for v in lines[i + 1].split()])
        i += 2
        parts += [w.ravel(), b]
    theta = np.concatenate(parts)
    if theta.size != arch.n_params:
        raise ValueError("parameter count does not match the layer header")
    return arch, theta, extra
