"""Small image datasets, synthetic generators, and per-participant partitioning.

Two on-disk formats are supported:

* IDX: big-endian header ``magic(4) dim0(4) [dim1(4) dim2(4)]`` followed
  by unsigned bytes.  Magic 0x00000803 is an image tensor, 0x00000801 a
  label vector.  Pixels are scaled to [0, 1] by /255, rows flattened in
  row-major order.
* CSV: one sample per line, ``label,f0,f1,...`` with features already
  in [0, 1].
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801


@dataclass
class Dataset:
    features: np.ndarray  # (samples, dims), floats in [0, 1]
    labels: np.ndarray  # (samples,), class indices
    name: str = ""
    n_classes: int = 0

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels must have the same length")
        if self.n_classes == 0:
            self.n_classes = int(self.labels.max()) + 1 if len(self.labels) else 0
        if len(self.labels) and self.labels.max() >= self.n_classes:
            raise ValueError("label out of range")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dims(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=int)
        return Dataset(self.features[indices], self.labels[indices],
                       name=self.name, n_classes=self.n_classes)


@dataclass
class PartitionSpec:
    """How to shard a dataset across participants.

    fraction_split: split by per-participant fractions.
    ratio_split: like fraction_split with unnormalized positive ratios.
    label_skew: each participant gets the labels listed in its entry of
    `label_map`; labels shared by several participants are split evenly.

    `stratified` (fraction/ratio modes) keeps every shard's class mix close
    to the parent's; turning it off draws shards from a single shuffle, so
    small shards see naturally lopsided class counts.
    """

    mode: str
    fractions: list[float] | None = None
    ratios: list[float] | None = None
    label_map: list[list[int]] | None = None
    stratified: bool = True

    def __post_init__(self):
        if self.mode == "fraction_split":
            if not self.fractions or any(f <= 0 for f in self.fractions):
                raise ValueError("fraction_split needs positive fractions")
            if abs(sum(self.fractions) - 1.0) > 1e-9:
                raise ValueError("fractions must sum to 1")
        elif self.mode == "ratio_split":
            if not self.ratios or any(r <= 0 for r in self.ratios):
                raise ValueError("ratio_split needs positive ratios")
        elif self.mode == "label_skew":
            if not self.label_map:
                raise ValueError("label_skew needs a label map")
        else:
            raise ValueError(f"unknown partition mode {self.mode!r}")

    @property
    def n_participants(self) -> int:
        if self.mode == "fraction_split":
            return len(self.fractions)
        if self.mode == "ratio_split":
            return len(self.ratios)
        return len(self.label_map)


class IdxFormatError(ValueError):
    pass


def _read_idx_header(raw: bytes, path) -> tuple[int, list[int], int]:
    if len(raw) < 4:
        raise IdxFormatError(f"{path}: truncated header at offset 0")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic == IDX_MAGIC_IMAGES:
        n_dims = 3
    elif magic == IDX_MAGIC_LABELS:
        n_dims = 1
    else:
        raise IdxFormatError(f"{path}: bad magic 0x{magic:08x} at offset 0")
    offset = 4 + 4 * n_dims
    if len(raw) < offset:
        raise IdxFormatError(f"{path}: truncated header at offset {len(raw)}")
    dims = list(struct.unpack(f">{n_dims}I", raw[4:offset]))
    return magic, dims, offset


def _read_idx_array(path) -> tuple[int, np.ndarray]:
    raw = Path(path).read_bytes()
    magic, dims, offset = _read_idx_header(raw, path)
    count = int(np.prod(dims)) if dims else 0
    if len(raw) - offset < count:
        raise IdxFormatError(f"{path}: truncated data at offset {len(raw)}")
    data = np.frombuffer(raw, dtype=np.uint8, count=count, offset=offset)
    return magic, data.reshape(dims) if count else np.zeros(dims, dtype=np.uint8)


def load_idx(images_path, labels_path=None, name: str = "", n_classes: int = 0) -> Dataset:
    """Load an IDX image file (and optional IDX label file) into a Dataset."""
    magic, images = _read_idx_array(images_path)
    if magic != IDX_MAGIC_IMAGES:
        raise IdxFormatError(f"{images_path}: expected an image file")
    n = images.shape[0]
    features = images.reshape(n, int(np.prod(images.shape[1:]))).astype(float) / 255.0
    if labels_path is not None:
        magic, labels = _read_idx_array(labels_path)
        if magic != IDX_MAGIC_LABELS:
            raise IdxFormatError(f"{labels_path}: expected a label file")
        if len(labels) != n:
            raise IdxFormatError("image and label counts disagree")
        labels = labels.astype(int)
    else:
        labels = np.zeros(n, dtype=int)
    return Dataset(features, labels, name=name or str(images_path), n_classes=n_classes)


def load_csv(path, name: str = "", n_classes: int = 0) -> Dataset:
    """Load the label,f0,f1,... CSV format."""
    raw = np.loadtxt(path, delimiter=",", ndmin=2)
    return Dataset(raw[:, 1:], raw[:, 0].astype(int), name=name or str(path),
                   n_classes=n_classes)


def load_digits_8x8(n_classes: int = 10) -> Dataset:
    """The bundled scikit-learn 8x8 handwritten digits, scaled to [0, 1]."""
    from sklearn.datasets import load_digits

    digits = load_digits(n_class=n_classes)
    return Dataset(digits.data / 16.0, digits.target, name="digits8x8",
                   n_classes=n_classes)


def _largest_remainder_sizes(total: int, weights: np.ndarray) -> np.ndarray:
    """Integer shard sizes summing to `total`; leftovers go to the largest shares."""
    weights = np.asarray(weights, dtype=float)
    exact = total * weights / weights.sum()
    sizes = np.floor(exact).astype(int)
    remainder = total - sizes.sum()
    order = np.argsort(-(exact - sizes))
    sizes[order[:remainder]] += 1
    return sizes


def partition(dataset: Dataset, spec: PartitionSpec, rng: np.random.Generator) -> list[Dataset]:
    """Split a dataset into disjoint, exhaustive per-participant shards."""
    k = spec.n_participants
    if k > len(dataset):
        raise ValueError("more participants than samples")

    if spec.mode == "label_skew":
        owners: dict[int, list[int]] = {}
        for p, labels in enumerate(spec.label_map):
            for lab in labels:
                owners.setdefault(int(lab), []).append(p)
        shard_indices: list[list[int]] = [[] for _ in range(k)]
        for lab in range(dataset.n_classes):
            idx = np.flatnonzero(dataset.labels == lab)
            if len(idx) == 0:
                continue
            who = owners.get(lab)
            if not who:
                raise ValueError(f"label {lab} assigned to no participant")
            idx = rng.permutation(idx)
            for part, p in zip(np.array_split(idx, len(who)), who):
                shard_indices[p].extend(part.tolist())
        return [dataset.subset(sorted(ix)) for ix in shard_indices]

    weights = np.asarray(
        spec.fractions if spec.mode == "fraction_split" else spec.ratios, dtype=float
    )
    if not spec.stratified:
        idx = rng.permutation(len(dataset))
        sizes = _largest_remainder_sizes(len(idx), weights)
        bounds = np.cumsum(np.concatenate(([0], sizes)))
        return [dataset.subset(np.sort(idx[a:b])) for a, b in zip(bounds, bounds[1:])]

    # stratified: apply the same weights within every class so shard
    # class proportions track the parent within +-1 sample
    shard_indices = [[] for _ in range(k)]
    for lab in range(max(dataset.n_classes, 1)):
        idx = np.flatnonzero(dataset.labels == lab)
        if len(idx) == 0:
            continue
        idx = rng.permutation(idx)
        sizes = _largest_remainder_sizes(len(idx), weights)
        start = 0
        for p, size in enumerate(sizes):
            shard_indices[p].extend(idx[start : start + size].tolist())
            start += size
    return [dataset.subset(sorted(ix)) for ix in shard_indices]


def synth_blobs(
    n_classes: int, n_per_class: int, dims: int, separation: float, seed: int
) -> Dataset:
    """Deterministic Gaussian blobs, min-max scaled into [0, 1] per feature.

    Class means sit at pairwise distance `separation` before scaling;
    the per-feature affine rescale preserves linear separability.
    """
    if n_classes < 1 or dims < 1 or n_per_class < 0:
        raise ValueError("sizes must be positive")
    if n_classes > dims:
        raise ValueError("need dims >= n_classes to place separated means")
    rng = np.random.default_rng(seed)
    means = np.zeros((n_classes, dims))
    for c in range(n_classes):
        means[c, c] = separation / np.sqrt(2.0)
    features = []
    labels = []
    for c in range(n_classes):
        features.append(means[c] + rng.normal(size=(n_per_class, dims)))
        labels.append(np.full(n_per_class, c))
    if n_per_class == 0:
        return Dataset(np.zeros((0, dims)), np.zeros(0, dtype=int),
                       name="blobs", n_classes=n_classes)
    x = np.concatenate(features)
    lo, hi = x.min(axis=0), x.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    x = (x - lo) / span
    return Dataset(x, np.concatenate(labels), name="blobs", n_classes=n_classes)
