"""Classical local models: multinomial logistic regression built from
independent binary (one-vs-rest) heads, with flat-parameter
(de)serialization shared with the QNN checkpoint format.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datasets import Dataset

CHECKPOINT_MAGIC = b"QFLC"
CHECKPOINT_VERSION = 1


@dataclass
class ModelParams:
    """Flat parameter vector plus the public clipping bound and layout metadata."""

    values: np.ndarray
    clip: float
    layout: tuple

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.clip <= 0:
            raise ValueError("clip bound must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("parameters must be finite")
        self.layout = tuple(tuple(int(d) for d in shape) for shape in self.layout)
        expect = sum(int(np.prod(shape)) for shape in self.layout)
        if expect != len(self.values):
            raise ValueError(f"layout implies {expect} values, got {len(self.values)}")

    def arrays(self) -> list[np.ndarray]:
        out, start = [], 0
        for shape in self.layout:
            size = int(np.prod(shape))
            out.append(self.values[start : start + size].reshape(shape))
            start += size
        return out


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class MultiLR:
    """n_labels independent binary logistic regressions over shared features.

    Prediction is the argmax over the per-head sigmoid outputs (ties
    broken by the lowest label index); training is mini-batch gradient
    descent on the summed per-head binary cross-entropy with
    one-vs-rest targets.
    """

    def __init__(self, input_dim: int, n_labels: int, clip: float = 1.0,
                 lr_rate: float = 0.1, batch_size: int = 32):
        self.input_dim = input_dim
        self.n_labels = n_labels
        self.clip = clip
        self.lr_rate = lr_rate
        self.batch_size = batch_size
        self.weights = np.zeros((input_dim, n_labels))
        self.biases = np.zeros(n_labels)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} features, got {x.shape[1]}")
        return sigmoid(x @ self.weights + self.biases)

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray):
        """Summed per-head BCE with one-hot targets, and its gradients."""
        probs = self.forward(x)
        onehot = np.eye(self.n_labels)[y]
        eps = 1e-12
        loss = -np.mean(
            np.sum(onehot * np.log(probs + eps) + (1 - onehot) * np.log(1 - probs + eps), axis=1)
        )
        delta = (probs - onehot) / len(x)
        return loss, x.T @ delta, delta.sum(axis=0)

    def train_epoch(self, dataset: Dataset, rng: np.random.Generator,
                    lr_rate: float | None = None) -> float:
        if len(dataset) == 0:
            raise ValueError("cannot train on an empty dataset")
        lr_rate = self.lr_rate if lr_rate is None else lr_rate
        order = rng.permutation(len(dataset))
        total = 0.0
        for start in range(0, len(order), self.batch_size):
            batch = order[start : start + self.batch_size]
            loss, gw, gb = self.loss_and_grads(dataset.features[batch], dataset.labels[batch])
            self.weights -= lr_rate * gw
            self.biases -= lr_rate * gb
            total += loss * len(batch)
        return total / len(order)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.forward(x), axis=1)

    def evaluate(self, dataset: Dataset) -> float:
        if len(dataset) == 0:
            raise ValueError("cannot evaluate on an empty dataset")
        return float(np.mean(self.predict(dataset.features) == dataset.labels))

    def get_params(self) -> ModelParams:
        return ModelParams(
            np.concatenate([self.weights.ravel(), self.biases]),
            clip=self.clip,
            layout=((self.input_dim, self.n_labels), (self.n_labels,)),
        )

    def set_params(self, params: ModelParams) -> None:
        w, b = params.arrays()
        if w.shape != self.weights.shape or b.shape != self.biases.shape:
            raise ValueError("parameter layout mismatch")
        self.weights = w.copy()
        self.biases = b.copy()

    def clone(self) -> "MultiLR":
        other = MultiLR(self.input_dim, self.n_labels, self.clip, self.lr_rate, self.batch_size)
        other.set_params(self.get_params())
        return other


def save_checkpoint(path, params: ModelParams) -> None:
    """Binary checkpoint: magic, version, layout dims, little-endian float64 data."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(params.layout)))
        for shape in params.layout:
            fh.write(struct.pack("<I", len(shape)))
            fh.write(struct.pack(f"<{len(shape)}I", *shape))
        fh.write(struct.pack("<d", params.clip))
        fh.write(params.values.astype("<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a parameter checkpoint")
    version, n_shapes = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    layout = []
    for _ in range(n_shapes):
        (rank,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        shape = struct.unpack_from(f"<{rank}I", raw, offset)
        offset += 4 * rank
        layout.append(tuple(shape))
    (clip,) = struct.unpack_from("<d", raw, offset)
    offset += 8
    values = np.frombuffer(raw, dtype="<f8", offset=offset)
    return ModelParams(values.copy(), clip=clip, layout=tuple(layout))
