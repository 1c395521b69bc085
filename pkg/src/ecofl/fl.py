"""Desk-scale federated learning: synthetic task, local SGD, FedAvg."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mlp

BITS_PER_PARAM = 32


@dataclass
class FlModel:
    arch: mlp.Architecture
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.size != self.arch.n_params:
            raise ValueError(
                f"parameter vector has {self.theta.size} entries, architecture needs {self.arch.n_params}"
            )

    @property
    def size_bits(self) -> int:
        return model_size_bits(self)

    def copy(self) -> "FlModel":
        return FlModel(self.arch, self.theta.copy())


@dataclass
class ClientDataset:
    client_id: int
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if len(self.y) < 1:
            raise ValueError(f"client {self.client_id} has no samples")

    @property
    def n_samples(self) -> int:
        return len(self.y)


@dataclass
class RoundOutcome:
    round_index: int
    participants: list[int]
    upload_ok: dict[int, bool]
    model: FlModel
    aggregated: bool
    train_loss: float
    test_loss: float
    test_accuracy: float
    energy: dict[int, dict[str, float]] = field(default_factory=dict)


class NoUploadsError(ValueError):
    pass


def model_size_bits(model: FlModel) -> int:
    return model.arch.n_params * BITS_PER_PARAM


def make_model(sizes, rng: np.random.Generator) -> FlModel:
    arch = mlp.Architecture(tuple(sizes))
    return FlModel(arch, arch.init(rng))


def gaussian_blobs(n: int, dim: int, n_classes: int, rng: np.random.Generator,
                   centers: np.ndarray | None = None, spread: float = 1.0):
    """Balanced labels, isotropic unit-variance clouds around random centers."""
    if centers is None:
        centers = rng.normal(0.0, spread, size=(n_classes, dim))
    y = np.arange(n) % n_classes
    rng.shuffle(y)
    x = centers[y] + rng.normal(size=(n, dim))
    return x, y, centers


def local_update(global_model: FlModel, data: ClientDataset, epochs: int, lr: float,
                 rng: np.random.Generator, batch_size: int = 32) -> FlModel:
    if epochs < 1:
        raise ValueError("local epochs must be >= 1")
    theta = global_model.theta.copy()
    opt = mlp.Sgd(lr)
    for _ in range(epochs):
        theta = mlp.minibatch_epoch(global_model.arch, theta, data.x, data.y, batch_size, opt, rng)
    return FlModel(global_model.arch, theta)


def aggregate(updates: list[FlModel], weights=None) -> FlModel:
    """Coordinate-wise mean; ``weights`` (e.g. sample counts) makes it weighted."""
    if not updates:
        raise NoUploadsError("no successful uploads")
    arch = updates[0].arch
    if any(u.arch != arch for u in updates):
        raise ValueError("cannot aggregate models with different architectures")
    stack = np.stack([u.theta for u in updates])
    if weights is None:
        return FlModel(arch, stack.mean(axis=0))
    w = np.asarray(weights, dtype=float)
    return FlModel(arch, (w[:, None] * stack).sum(axis=0) / w.sum())


def evaluate(model: FlModel, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    if len(y) == 0:
        raise ValueError("empty test set")
    p = mlp.forward(model.arch, model.theta, x)
    loss = float(-np.mean(np.log(np.maximum(p[np.arange(len(y)), y], 1e-300))))
    acc = float(np.mean(p.argmax(axis=1) == y))
    return loss, acc


def partition_data(x: np.ndarray, y: np.ndarray, n_clients: int, rng: np.random.Generator,
                   mode: str = "iid", dirichlet_alpha: float = 0.5) -> list[ClientDataset]:
    """Disjoint cover of (x, y); ``dirichlet`` skews each class across clients."""
    n = len(y)
    if n < n_clients:
        raise ValueError("fewer samples than clients")
    if mode == "iid":
        parts = np.array_split(rng.permutation(n), n_clients)
    elif mode == "dirichlet":
        parts = _dirichlet_split(y, n_clients, dirichlet_alpha, rng)
    else:
        raise ValueError(f"unknown partition mode {mode!r}")
    return [ClientDataset(k, x[np.sort(idx)], y[np.sort(idx)]) for k, idx in enumerate(parts)]


def _dirichlet_split(y, n_clients, alpha, rng, max_tries=1000):
    classes = np.unique(y)
    for _ in range(max_tries):
        buckets = [[] for _ in range(n_clients)]
        for c in classes:
            idx = rng.permutation(np.flatnonzero(y == c))
            cuts = (np.cumsum(rng.dirichlet(np.full(n_clients, alpha))) * len(idx)).astype(int)[:-1]
            for k, chunk in enumerate(np.split(idx, cuts)):
                buckets[k].extend(chunk.tolist())
        if min(len(b) for b in buckets) >= 1:
            return [np.array(b, dtype=int) for b in buckets]
    raise RuntimeError("could not draw a Dirichlet partition with every client non-empty")


@dataclass(frozen=True)
class FlTask:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray


def synthetic_task(rng: np.random.Generator, n_train=1000, n_test=1000, dim=64, n_classes=10,
                   spread=0.6) -> FlTask:
    x_tr, y_tr, centers = gaussian_blobs(n_train, dim, n_classes, rng, spread=spread)
    x_te, y_te, _ = gaussian_blobs(n_test, dim, n_classes, rng, centers=centers)
    return FlTask(x_tr, y_tr, x_te, y_te)


def train_centralized(model: FlModel, x, y, steps: int, lr: float, rng: np.random.Generator,
                      batch_size: int = 32) -> FlModel:
    """Plain mini-batch SGD for a fixed number of gradient steps (control run)."""
    theta = model.theta.copy()
    opt = mlp.Sgd(lr)
    done = 0
    while done < steps:
        order = rng.permutation(len(y))
        for start in range(0, len(y), batch_size):
            idx = order[start:start + batch_size]
            _, g = mlp.loss_and_grad(model.arch, theta, x[idx], y[idx])
            theta = opt.step(theta, g)
            done += 1
            if done == steps:
                break
    return FlModel(model.arch, theta)


def federated_training(task: FlTask, sizes, n_clients: int, rounds: int, local_epochs: int, lr: float,
                       rng: np.random.Generator, batch_size: int = 32, partition: str = "iid",
                       dirichlet_alpha: float = 0.5) -> tuple[FlModel, list[float], int]:
    """FedAvg with every client uploading each round.

    Returns the final model, test accuracy after every round, and the number
    of client-side gradient steps taken in total (for sizing a centralized
    control run).
    """
    parts = partition_data(task.x_train, task.y_train, n_clients, rng, partition, dirichlet_alpha)
    model = make_model(sizes, rng)
    accs, steps = [], 0
    for _ in range(rounds):
        updates = [local_update(model, d, local_epochs, lr, rng, batch_size) for d in parts]
        steps += sum(local_epochs * -(-d.n_samples // batch_size) for d in parts)
        model = aggregate(updates)
        accs.append(evaluate(model, task.x_test, task.y_test)[1])
    return model, accs, steps
