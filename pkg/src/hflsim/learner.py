"""Desk-scale learning core.

Synthetic non-iid data (2-D Gaussian clusters, 10 classes), a multinomial
logistic-regression classifier with an optional small hidden layer, local
minibatch SGD, weighted FedAvg for both aggregation tiers, convergence
detection, KL-divergence model scoring, and the loss/accuracy metrics the
threshold controller consumes.

Models are treated as immutable snapshots: every update returns a fresh
parameter vector.  All sampling goes through named substreams of the run
seed, so any device's trajectory is reproducible in isolation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from . import rng as rngmod

__all__ = [
    "Dataset",
    "ModelParams",
    "TrainConfig",
    "Metrics",
    "class_centers",
    "synth_noniid",
    "balanced_dataset",
    "init_model",
    "forward",
    "loss_and_grad",
    "local_sgd",
    "fedavg",
    "converged",
    "kld_score",
    "probe_subset",
    "eval_metrics",
    "delta_metrics",
    "train_personalized",
    "dump_dataset",
    "load_dataset",
]

N_CLASSES = 10
FEATURE_DIM = 2
CLUSTER_RADIUS = 2.0  # distance of class centres from the origin
CLUSTER_SIGMA = 0.25  # per-class Gaussian spread

_MAGIC = b"HFLD"
_DUMP_VERSION = 1


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n, dims) float
    labels: np.ndarray  # (n,) int class ids
    owner: int = -1

    def __post_init__(self) -> None:
        if len(self.features) != len(self.labels):
            raise ValueError("feature/label row counts differ")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class ModelParams:
    """Flat parameter vector plus its layer-shape descriptor and a version
    tag (global round, intermediate round, local step)."""

    values: np.ndarray
    dims: tuple[int, int, int]  # (input dim, hidden units or 0, classes)
    version: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self) -> None:
        if len(self.values) != param_count(self.dims):
            raise ValueError("parameter vector length inconsistent with dims")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite model parameters")


@dataclass(frozen=True)
class TrainConfig:
    eta: float = 0.001
    h: int = 1
    batch_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.eta < 0:
            raise ValueError("learning rate must be non-negative")
        if self.h < 0:
            raise ValueError("iteration count must be non-negative")
        if not 0.0 < self.batch_fraction <= 1.0:
            raise ValueError("batch fraction must lie in (0, 1]")


@dataclass(frozen=True)
class Metrics:
    loss: float
    accuracy: float


# ---------------------------------------------------------------------------
# synthetic data


def class_centers(n_classes: int = N_CLASSES, radius: float = CLUSTER_RADIUS) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
    return radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def _sample_classes(gen: np.random.Generator, labels: np.ndarray, sigma: float) -> np.ndarray:
    centers = class_centers()
    return centers[labels] + sigma * gen.standard_normal((len(labels), FEATURE_DIM))


def synth_noniid(
    n_devices: int,
    scheme: str,
    samples_per_device: int,
    seed: int,
    sigma: float = CLUSTER_SIGMA,
) -> list[Dataset]:
    """Per-device label-skewed datasets.

    Scheme "A" restricts every device to exactly 2 label classes; scheme "B"
    draws the class count uniformly from {2..10}.  Sample totals are the
    same under both schemes.  Each device draws from its own substream.
    """
    if n_devices < 1:
        raise ValueError("need at least one device")
    if scheme not in ("A", "B"):
        raise ValueError(f"unknown scheme {scheme!r}")
    out = []
    for i in range(n_devices):
        gen = rngmod.stream(seed, "data", i)
        n_labels = 2 if scheme == "A" else int(gen.integers(2, 11))
        chosen = gen.choice(N_CLASSES, size=n_labels, replace=False)
        labels = chosen[np.arange(samples_per_device) % n_labels]
        feats = _sample_classes(gen, labels, sigma)
        out.append(Dataset(features=feats, labels=labels.astype(np.int64), owner=i))
    return out


def balanced_dataset(n_samples: int, seed: int, owner: int = -1, sigma: float = CLUSTER_SIGMA) -> Dataset:
    """Label-balanced sample, used for the global test set and UAV seed data."""
    gen = rngmod.stream(seed, "data", "balanced", owner)
    labels = np.arange(n_samples) % N_CLASSES
    feats = _sample_classes(gen, labels, sigma)
    return Dataset(features=feats, labels=labels.astype(np.int64), owner=owner)


# ---------------------------------------------------------------------------
# classifier


def param_count(dims: tuple[int, int, int]) -> int:
    d, hidden, classes = dims
    if hidden:
        return hidden * d + hidden + classes * hidden + classes
    return classes * d + classes


def _unpack(params: ModelParams):
    d, hidden, classes = params.dims
    v = params.values
    if hidden:
        i = 0
        w1 = v[i : i + hidden * d].reshape(hidden, d)
        i += hidden * d
        b1 = v[i : i + hidden]
        i += hidden
        w2 = v[i : i + classes * hidden].reshape(classes, hidden)
        i += classes * hidden
        b2 = v[i:]
        return w1, b1, w2, b2
    w = v[: classes * d].reshape(classes, d)
    b = v[classes * d :]
    return w, b


def init_model(dims: tuple[int, int, int], seed: int, version=(0, 0, 0)) -> ModelParams:
    gen = rngmod.stream(seed, "init", *dims)
    values = 0.01 * gen.standard_normal(param_count(dims))
    return ModelParams(values=values, dims=dims, version=tuple(version))


def forward(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Class logits, shape (n, classes)."""
    x = np.asarray(features, dtype=float)
    if params.dims[1]:
        w1, b1, w2, b2 = _unpack(params)
        a1 = np.tanh(x @ w1.T + b1)
        return a1 @ w2.T + b2
    w, b = _unpack(params)
    return x @ w.T + b


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(params: ModelParams, features: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch and its gradient (flat vector)."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    n = len(y)
    logits = forward(params, x)
    p = _softmax(logits)
    loss = float(-np.mean(np.log(p[np.arange(n), y] + 1e-300)))
    dz = p.copy()
    dz[np.arange(n), y] -= 1.0
    dz /= n
    if params.dims[1]:
        w1, b1, w2, b2 = _unpack(params)
        a1 = np.tanh(x @ w1.T + b1)
        dw2 = dz.T @ a1
        db2 = dz.sum(axis=0)
        da1 = dz @ w2
        dz1 = da1 * (1.0 - a1 * a1)
        dw1 = dz1.T @ x
        db1 = dz1.sum(axis=0)
        grad = np.concatenate([dw1.ravel(), db1, dw2.ravel(), db2])
    else:
        dw = dz.T @ x
        db = dz.sum(axis=0)
        grad = np.concatenate([dw.ravel(), db])
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError(
            f"non-finite gradient (loss={loss}, |x|max={np.abs(x).max()}, device={getattr(params, 'version', None)})"
        )
    return loss, grad


def local_sgd(model: ModelParams, data: Dataset, cfg: TrainConfig) -> ModelParams:
    """Run cfg.h minibatch-SGD steps of cross-entropy on the device data.

    Minibatch size is ceil(batch_fraction * |data|); batches are drawn from
    the substream keyed on (cfg.seed, data.owner) so per-device training is
    order-independent across devices.
    """
    gen = rngmod.stream(cfg.seed, "sgd", data.owner)
    n = len(data)
    batch = int(np.ceil(cfg.batch_fraction * n))
    values = model.values.copy()
    g, k, h0 = model.version
    for step in range(cfg.h):
        idx = gen.choice(n, size=batch, replace=False) if batch < n else np.arange(n)
        cur = ModelParams(values=values, dims=model.dims, version=(g, k, h0 + step))
        _, grad = loss_and_grad(cur, data.features[idx], data.labels[idx])
        values = values - cfg.eta * grad
    return ModelParams(values=values, dims=model.dims, version=(g, k, h0 + cfg.h))


def fedavg(models: list[ModelParams], weights) -> ModelParams:
    """Dataset-size-weighted coordinate mean of the given models."""
    if not models:
        raise ValueError("cannot average an empty model list")
    w = np.asarray(weights, dtype=float)
    if len(w) != len(models) or np.any(w < 1):
        raise ValueError("need one weight >= 1 per model")
    dims = models[0].dims
    for m in models[1:]:
        if m.dims != dims:
            raise ValueError("model shape mismatch")
    stacked = np.stack([m.values for m in models])
    values = (w[:, None] * stacked).sum(axis=0) / w.sum()
    return ModelParams(values=values, dims=dims, version=models[0].version)


def converged(w_g: ModelParams, w_prev: ModelParams, delta: float) -> bool:
    """True once consecutive global models differ by at most delta in L2."""
    if w_g.dims != w_prev.dims:
        raise ValueError("model shape mismatch")
    return float(np.linalg.norm(w_g.values - w_prev.values)) <= delta


def probe_subset(data: Dataset, max_samples: int = 16) -> Dataset:
    """The device's deterministic small probe batch (first min(16,|D|) rows)."""
    k = min(max_samples, len(data))
    return Dataset(features=data.features[:k], labels=data.labels[:k], owner=data.owner)


def kld_score(uav_model: ModelParams, dev_model: ModelParams, probe: Dataset) -> float:
    """Sum over probe samples of KL(softmax uav ‖ softmax device), in nats."""
    p = _softmax(forward(uav_model, probe.features))
    q = _softmax(forward(dev_model, probe.features))
    return float(np.sum(p * (np.log(p + 1e-300) - np.log(q + 1e-300))))


def eval_metrics(model: ModelParams, data: Dataset) -> Metrics:
    logits = forward(model, data.features)
    p = _softmax(logits)
    n = len(data)
    loss = float(-np.mean(np.log(p[np.arange(n), data.labels] + 1e-300)))
    accuracy = float(np.mean(np.argmax(logits, axis=1) == data.labels))
    return Metrics(loss=loss, accuracy=accuracy)


def delta_metrics(prev: Metrics, cur: Metrics) -> tuple[float, float]:
    """(loss drop, accuracy gain) between consecutive evaluations."""
    return prev.loss - cur.loss, cur.accuracy - prev.accuracy


def train_personalized(seed_data: Dataset, cfg: TrainConfig, dims=(FEATURE_DIM, 0, N_CLASSES)) -> ModelParams:
    """One-off UAV-side model trained on its small local dataset."""
    if len(seed_data) == 0:
        raise ValueError("seed data must be non-empty")
    model = init_model(dims, cfg.seed)
    if cfg.h == 0:
        return model
    return local_sgd(model, seed_data, cfg)


# ---------------------------------------------------------------------------
# binary dataset dump


def dump_dataset(path, data: Dataset, n_classes: int = N_CLASSES) -> None:
    """Write `data` as: "HFLD", u32 version/n/dims/classes, f32 rows, u32 labels."""
    feats = np.ascontiguousarray(data.features, dtype="<f4")
    labels = np.ascontiguousarray(data.labels, dtype="<u4")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIII", _DUMP_VERSION, len(data), feats.shape[1], n_classes))
        fh.write(feats.tobytes())
        fh.write(labels.tobytes())


def load_dataset(path, owner: int = -1) -> tuple[Dataset, int]:
    """Read a dataset dump; returns (dataset, n_classes)."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("bad magic: not a dataset dump")
        version, n, dims, classes = struct.unpack("<IIII", fh.read(16))
        if version != _DUMP_VERSION:
            raise ValueError(f"unsupported dump version {version}")
        feats = np.frombuffer(fh.read(4 * n * dims), dtype="<f4").reshape(n, dims)
        labels = np.frombuffer(fh.read(4 * n), dtype="<u4")
    return Dataset(features=feats.astype(float), labels=labels.astype(np.int64), owner=owner), classes
