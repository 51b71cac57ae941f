"""Datasets, dual semantic labels, per-batch affinity graphs and file formats."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .numerics import SeededRng, as_matrix

FEATURES_MAGIC = b"DSAHFEAT"


@dataclass(frozen=True)
class Dataset:
    """Features plus a 0/1 label indicator matrix (``n x k``).

    Single-label data has exactly one 1 per row; multi-label data may have several.
    """

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        features = as_matrix(self.features)
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise DataError(f"label indicator must be 2-d, got shape {labels.shape}")
        if features.shape[0] != labels.shape[0]:
            raise DataError(
                f"{features.shape[0]} feature rows but {labels.shape[0]} label records"
            )
        if not np.all(np.isfinite(features)):
            raise DataError("features contain NaN or Inf")
        labels = (labels != 0).astype(np.uint8)
        if labels.shape[0] and np.any(labels.sum(axis=1) == 0):
            raise DataError("every sample needs at least one label")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def k(self) -> int:
        return self.labels.shape[1]

    @property
    def label_sets(self) -> list[tuple[int, ...]]:
        return [tuple(int(j) for j in np.flatnonzero(row)) for row in self.labels]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.intp)
        return Dataset(self.features[indices], self.labels[indices])

    @classmethod
    def from_label_sets(cls, features, label_sets, k: int | None = None) -> "Dataset":
        return cls(features, labels_to_indicator(label_sets, k))


def labels_to_indicator(label_sets, k: int | None = None) -> np.ndarray:
    """Turn a sequence of ints or int collections into an ``n x k`` 0/1 matrix."""
    sets = []
    for entry in label_sets:
        if np.ndim(entry) == 0:
            entry = (entry,)
        ids = [int(v) for v in entry]
        if not ids:
            raise DataError("every sample needs at least one label")
        if min(ids) < 0:
            raise DataError(f"negative label id in {ids}")
        sets.append(ids)
    top = max((max(s) for s in sets), default=-1) + 1
    if k is None:
        k = top
    elif top > k:
        raise DataError(f"label id {top - 1} is not below k={k}")
    out = np.zeros((len(sets), k), dtype=np.uint8)
    for i, ids in enumerate(sets):
        out[i, ids] = 1
    return out


@dataclass(frozen=True)
class DualLabels:
    """Intra-class labels ``Y`` (scale sqrt(beta1)) and inter-class labels ``R``
    (scale sqrt(beta2))."""

    Y: np.ndarray
    R: np.ndarray
    beta1: float
    beta2: float


def build_dual_labels(dataset: Dataset, beta1: float, beta2: float) -> DualLabels:
    if beta1 < 0 or beta2 < 0:
        raise ValueError(f"beta1 and beta2 must be nonnegative, got {beta1}, {beta2}")
    present = dataset.labels.astype(np.float64)
    Y = np.sqrt(beta1) * present
    R = np.sqrt(beta2) * (1.0 - present)
    return DualLabels(Y=Y, R=R, beta1=float(beta1), beta2=float(beta2))


def shared_label_matrix(labels_a: np.ndarray, labels_b: np.ndarray) -> np.ndarray:
    """Boolean matrix, True where row i of ``a`` and row j of ``b`` share a label."""
    overlap = labels_a.astype(np.int64) @ labels_b.astype(np.int64).T
    return overlap > 0


def class_sizes(dataset: Dataset) -> np.ndarray:
    """|kappa(i)|: number of training samples (self included) sharing a label with i."""
    return shared_label_matrix(dataset.labels, dataset.labels).sum(axis=1)


@dataclass(frozen=True)
class BatchGraph:
    """Affinity graph over one batch and the balance-weighted class indicator.

    ``S`` is ``n x m`` with ``S[i, j] = 1/|kappa(i)|`` when training sample i shares
    a label with batch sample j.
    """

    batch_indices: np.ndarray
    W: np.ndarray
    D: np.ndarray
    S: np.ndarray
    kappa_sizes: np.ndarray

    @property
    def m(self) -> int:
        return len(self.batch_indices)


def build_batch_graph(
    dataset: Dataset, batch_indices: Sequence[int], kappa_sizes: np.ndarray | None = None
) -> BatchGraph:
    idx = np.asarray(batch_indices, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("empty batch")
    if np.any(idx < 0) or np.any(idx >= dataset.n):
        raise IndexError("batch index out of range")
    if np.unique(idx).size != idx.size:
        raise ValueError("batch indices must be distinct")
    if kappa_sizes is None:
        kappa_sizes = class_sizes(dataset)
    batch_labels = dataset.labels[idx]
    W = shared_label_matrix(batch_labels, batch_labels).astype(np.float64)
    D = W.sum(axis=1)
    pattern = shared_label_matrix(dataset.labels, batch_labels)
    S = pattern / kappa_sizes[:, None].astype(np.float64)
    return BatchGraph(batch_indices=idx, W=W, D=D, S=S, kappa_sizes=np.asarray(kappa_sizes))


def sample_epoch_batches(n: int, m: int, rng: SeededRng) -> list[np.ndarray]:
    """Shuffle ``range(n)`` and cut it into ``ceil(n/m)`` disjoint batches."""
    if m < 1 or m > n:
        raise ValueError(f"batch size must satisfy 1 <= m <= n, got m={m}, n={n}")
    perm = rng.permutation(n)
    return [perm[start : start + m] for start in range(0, n, m)]


def make_synthetic_clusters(
    k: int, per_class: int, d: int, spread: float, rng: SeededRng
) -> Dataset:
    """``k`` Gaussian clusters around random unit-norm centers."""
    if k < 1 or per_class < 1 or d < 1:
        raise ValueError("k, per_class and d must be positive")
    centers = rng.standard_normal((k, d))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    labels = np.repeat(np.arange(k), per_class)
    noise = rng.standard_normal((k * per_class, d))
    features = centers[labels] + spread * noise
    return Dataset(features, labels_to_indicator(labels, k))


def stratified_split(
    dataset: Dataset, query_fraction: float, rng: SeededRng
) -> tuple[Dataset, Dataset]:
    """Split per class (by first label) into (train, query)."""
    if not 0 < query_fraction < 1:
        raise ValueError("query_fraction must lie in (0, 1)")
    primary = dataset.labels.argmax(axis=1)
    query_idx = []
    for cls in np.unique(primary):
        members = np.flatnonzero(primary == cls)
        members = members[rng.permutation(members.size)]
        take = int(round(query_fraction * members.size))
        query_idx.extend(members[:take].tolist())
    query_idx = np.sort(np.asarray(query_idx, dtype=np.intp))
    train_mask = np.ones(dataset.n, dtype=bool)
    train_mask[query_idx] = False
    return dataset.subset(np.flatnonzero(train_mask)), dataset.subset(query_idx)


# --- file formats -----------------------------------------------------------


def read_features(path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head == FEATURES_MAGIC:
        return _read_features_binary(path)
    return _read_features_csv(path)


def _read_features_binary(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < 16:
        raise DataError(f"{path}: truncated features header")
    n, d = struct.unpack("<II", raw[8:16])
    body = raw[16:]
    if len(body) != 8 * n * d:
        raise DataError(f"{path}: expected {n}x{d} doubles, found {len(body)} bytes")
    return np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(n, d)


def _read_features_csv(path: Path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric feature value") from None
            if len(rows[-1]) != len(rows[0]):
                raise DataError(
                    f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(rows[-1])}"
                )
    if not rows:
        raise DataError(f"{path}: no feature rows")
    return np.array(rows, dtype=np.float64)


def read_label_sets(path) -> list[tuple[int, ...]]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                ids = tuple(int(tok) for tok in line.split(";") if tok.strip())
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed label row {line!r}") from None
            if not ids:
                raise DataError(f"{path}:{lineno}: empty label row")
            if min(ids) < 0:
                raise DataError(f"{path}:{lineno}: negative label id")
            out.append(ids)
    return out


def load_dataset(features_path, labels_path, k: int | None = None) -> Dataset:
    """Read a features file (CSV or binary) and a labels file into a ``Dataset``."""
    for p in (features_path, labels_path):
        if not Path(p).is_file():
            raise DataError(f"{p}: no such file")
    features = read_features(features_path)
    label_sets = read_label_sets(labels_path)
    if len(label_sets) != features.shape[0]:
        raise DataError(
            f"row-count mismatch: {features.shape[0]} feature rows, {len(label_sets)} label rows"
        )
    if k is not None:
        top = max(max(s) for s in label_sets)
        if top >= k:
            raise DataError(f"label id {top} is not below k={k}")
    return Dataset(features, labels_to_indicator(label_sets, k))


def write_features(path, features, binary: bool = False) -> None:
    features = as_matrix(features)
    if binary:
        n, d = features.shape
        with open(path, "wb") as fh:
            fh.write(FEATURES_MAGIC + struct.pack("<II", n, d))
            fh.write(features.astype("<f8").tobytes())
        return
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in features:
            writer.writerow([repr(float(v)) for v in row])


def write_labels(path, dataset_or_labels) -> None:
    labels = getattr(dataset_or_labels, "labels", dataset_or_labels)
    with open(path, "w") as fh:
        for row in np.asarray(labels):
            fh.write(";".join(str(j) for j in np.flatnonzero(row)) + "\n")
