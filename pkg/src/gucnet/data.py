"""Feature bundles: synthetic generation, GFV1/CSV ingestion, splits, co-binning and batching.

GFV1 layout (all little-endian)::

    b"GFV1" | u32 N | u32 D | u32 C | N x u32 labels | N*D x f64 features (row-major)
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .numeric import Rng64


class DataError(ValueError):
    pass


class BadMagic(DataError):
    pass


class Truncated(DataError):
    pass


class LabelOutOfRange(DataError):
    pass


class EmptyDataset(DataError):
    pass


class InvariantViolation(DataError):
    pass


class ClassTooSmall(DataError):
    pass


GFV1_MAGIC = b"GFV1"
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class DatasetBundle:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = ""

    def __post_init__(self):
        if self.features.ndim != 2:
            raise InvariantViolation("features must be an N x D matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise InvariantViolation(
                f"{self.labels.shape[0]} labels for {self.features.shape[0]} feature rows"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise LabelOutOfRange(f"labels must lie in [0, {self.num_classes})")
        counts = np.bincount(self.labels, minlength=self.num_classes)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            raise InvariantViolation(f"classes without samples: {empty.tolist()}")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx, name: Optional[str] = None) -> "DatasetBundle":
        """Rows ``idx``; class count is kept even if a class ends up absent."""
        idx = np.asarray(idx, dtype=np.int64)
        return _unchecked(self.features[idx], self.labels[idx], self.num_classes, name or self.name)

    def relabeled(self, mapping) -> "DatasetBundle":
        return _unchecked(self.features, np.asarray(mapping)[self.labels], self.num_classes, self.name)


def _unchecked(features, labels, num_classes, name) -> DatasetBundle:
    b = object.__new__(DatasetBundle)
    object.__setattr__(b, "features", features)
    object.__setattr__(b, "labels", labels)
    object.__setattr__(b, "num_classes", num_classes)
    object.__setattr__(b, "name", name)
    return b


def make_bundle(features, labels, num_classes: Optional[int] = None, name: str = "") -> DatasetBundle:
    features = np.ascontiguousarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise EmptyDataset("dataset has no rows")
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    return DatasetBundle(features, labels, int(num_classes), name)


def gen_gaussian_mixture(
    num_classes: int,
    dim: int,
    n_per_class: int,
    center_radius: float = 1.0,
    sigma: float = 0.9,
    seed: int = 0,
    name: str = "",
) -> DatasetBundle:
    """Isotropic Gaussian clusters whose means sit on a sphere of ``center_radius``.

    The ratio ``sigma / center_radius`` sets how cluttered the classes are.
    Rows are ordered class by class.
    """
    if num_classes < 2 or dim < num_classes:
        raise DataError("need C >= 2 classes and D >= C dimensions")
    if n_per_class < 1:
        raise DataError("need at least one sample per class")
    rng = Rng64(seed)
    means = rng.child("means").normal((num_classes, dim))
    means *= center_radius / np.linalg.norm(means, axis=1, keepdims=True)
    noise = rng.child("noise").normal((num_classes * n_per_class, dim)) * sigma
    labels = np.repeat(np.arange(num_classes), n_per_class)
    return make_bundle(means[labels] + noise, labels, num_classes, name or f"gmm-c{num_classes}-d{dim}-s{sigma}")


def save_gfv1(bundle: DatasetBundle, path) -> None:
    n, d = bundle.features.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(GFV1_MAGIC, n, d, bundle.num_classes))
        fh.write(bundle.labels.astype("<u4").tobytes())
        fh.write(np.ascontiguousarray(bundle.features, dtype="<f8").tobytes())


def read_gfv1_header(path) -> tuple[int, int, int]:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
    if len(head) < 4 or head[:4] != GFV1_MAGIC:
        raise BadMagic(f"{path}: not a GFV1 file")
    if len(head) < _HEADER.size:
        raise Truncated(f"{path}: header is truncated")
    _, n, d, c = _HEADER.unpack(head)
    return n, d, c


def load_gfv1(path, name: Optional[str] = None) -> DatasetBundle:
    raw = Path(path).read_bytes()
    if raw[:4] != GFV1_MAGIC:
        raise BadMagic(f"{path}: not a GFV1 file")
    if len(raw) < _HEADER.size:
        raise Truncated(f"{path}: header is truncated")
    _, n, d, c = _HEADER.unpack_from(raw)
    expected = _HEADER.size + 4 * n + 8 * n * d
    if len(raw) < expected:
        raise Truncated(f"{path}: expected {expected} bytes for N={n}, D={d}, found {len(raw)}")
    if len(raw) > expected:
        raise DataError(f"{path}: {len(raw) - expected} trailing bytes")
    labels = np.frombuffer(raw, "<u4", n, _HEADER.size).astype(np.int64)
    features = np.frombuffer(raw, "<f8", n * d, _HEADER.size + 4 * n).astype(np.float64).reshape(n, d)
    if n and labels.max() >= c:
        raise LabelOutOfRange(f"{path}: label {int(labels.max())} >= C={c}")
    if n == 0:
        raise EmptyDataset(f"{path}: dataset has no rows")
    return DatasetBundle(features, labels, c, name or Path(path).stem)


def load_csv(path, label_column: int = -1, name: Optional[str] = None) -> DatasetBundle:
    """Numeric CSV, one sample per row; lines starting with '#' are skipped."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric cell") from None
    if not rows:
        raise EmptyDataset(f"{path}: no data rows")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"{path}: ragged row {i + 1} has {len(r)} cells, expected {width}")
    table = np.array(rows)
    col = label_column % width
    raw_labels = table[:, col]
    if np.any(raw_labels < 0):
        raise DataError(f"{path}: negative label")
    if np.any(raw_labels != np.round(raw_labels)):
        raise DataError(f"{path}: labels must be integers")
    features = np.delete(table, col, axis=1)
    return make_bundle(features, raw_labels.astype(np.int64), name=name or Path(path).stem)


@dataclass(frozen=True)
class SplitView:
    train: np.ndarray
    test: np.ndarray
    ratio: float

    def apply(self, bundle: DatasetBundle) -> tuple[DatasetBundle, DatasetBundle]:
        return bundle.subset(self.train, f"{bundle.name}:train"), bundle.subset(self.test, f"{bundle.name}:test")


def stratified_split(bundle: DatasetBundle, ratio: float = 0.7, seed: int = 0) -> SplitView:
    """Per-class shuffled split; each class contributes ``round(ratio * n_c)`` training rows."""
    if not 0.0 < ratio < 1.0:
        raise DataError("split ratio must lie strictly between 0 and 1 so both sides are non-empty")
    rng = Rng64(seed).child("split")
    train, test = [], []
    for c in range(bundle.num_classes):
        idx = np.flatnonzero(bundle.labels == c)
        if idx.size < 2:
            raise ClassTooSmall(f"class {c} has {idx.size} samples; a split needs at least 2")
        idx = idx[rng.permutation(idx.size)]
        k = min(max(int(round(ratio * idx.size)), 1), idx.size - 1)
        train.append(idx[:k])
        test.append(idx[k:])
    return SplitView(np.sort(np.concatenate(train)), np.sort(np.concatenate(test)), ratio)


@dataclass(frozen=True)
class CoBinning:
    """``mapping[g]`` is the experimental class that guide cluster ``g`` is binned with."""

    mapping: np.ndarray
    kind: str
    seed: Optional[int] = None

    @property
    def size(self) -> int:
        return self.mapping.size


def make_cobinning(num_classes: int, kind: str = "identity", seed: Optional[int] = None) -> CoBinning:
    if num_classes < 1:
        raise DataError("need at least one class")
    if kind == "identity":
        return CoBinning(np.arange(num_classes), "identity")
    if kind == "shuffled":
        if seed is None:
            raise DataError("shuffled binning needs a seed")
        return CoBinning(Rng64(seed).child("binning").permutation(num_classes), "shuffled", seed)
    raise DataError(f"unknown binning kind {kind!r}")


def num_batches(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)


def batches(bundle: DatasetBundle, batch_size: int, rng: Rng64) -> Iterator[np.ndarray]:
    """Index batches covering every row once; the last partial batch is kept."""
    order = rng.permutation(bundle.n)
    for start in range(0, bundle.n, batch_size):
        yield order[start:start + batch_size]


def paired_batches(
    x: DatasetBundle,
    y: DatasetBundle,
    binning: CoBinning,
    half_batch: int = 32,
    rng: Optional[Rng64] = None,
) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
    """One epoch of ``(x_feats, x_labels, y_feats, y_labels)`` steps.

    The epoch runs over a fresh shuffle of ``x``. Guide rows are drawn from a
    shuffled stream over ``y`` that is reshuffled whenever it runs out, one
    guide row per X row. Guide labels are mapped through ``binning``.
    """
    if not (x.num_classes == y.num_classes == binning.size):
        raise DataError(
            f"class counts differ: X has {x.num_classes}, guide has {y.num_classes}, binning has {binning.size}"
        )
    rng = rng or Rng64(0)
    x_rng, y_rng = rng.child("x"), rng.child("y")
    y_labels = binning.mapping[y.labels]
    y_order = y_rng.permutation(y.n)
    y_pos = 0
    for xi in batches(x, half_batch, x_rng):
        take = []
        need = xi.size
        while need:
            if y_pos == y.n:
                y_order, y_pos = y_rng.permutation(y.n), 0
            chunk = y_order[y_pos:y_pos + need]
            y_pos += chunk.size
            need -= chunk.size
            take.append(chunk)
        yi = np.concatenate(take)
        yield x.features[xi], x.labels[xi], y.features[yi], y_labels[yi]
