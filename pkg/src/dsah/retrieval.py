"""Hamming-space retrieval and the metric suite.

Relevance ground truth: two samples are relevant to each other when their
label sets intersect. Hash lookup retrieves every database item within
Hamming radius 2 of the query; precision and recall are averaged per query.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import encoder as enc
from .codes import as_codes, pack_codes, unpack_codes
from .dataio import Dataset, shared_label_matrix
from .errors import DataError, DimensionError

LOOKUP_RADIUS = 2


@dataclass(frozen=True)
class CodeDatabase:
    """Bit-packed codes with their label indicator rows."""

    packed: np.ndarray
    c: int
    labels: np.ndarray

    @classmethod
    def from_codes(cls, codes, labels) -> "CodeDatabase":
        codes = as_codes(codes)
        labels = np.asarray(labels)
        if labels.ndim != 2 or labels.shape[0] != codes.shape[0]:
            raise DataError(f"{codes.shape[0]} codes but label matrix has shape {labels.shape}")
        return cls(pack_codes(codes), codes.shape[1], (labels != 0).astype(np.uint8))

    @property
    def n(self) -> int:
        return self.packed.shape[0]

    def codes(self) -> np.ndarray:
        return unpack_codes(self.packed, self.c)


@dataclass(frozen=True)
class MetricsReport:
    map: float
    precision_r2: float
    recall_r2: float
    f_measure_r2: float
    pr_curve: list[tuple[float, float]] = field(repr=False)

    def rows(self) -> list[tuple[str, float]]:
        return [
            ("map", self.map),
            ("precision_r2", self.precision_r2),
            ("recall_r2", self.recall_r2),
            ("f_measure_r2", self.f_measure_r2),
        ]


def _popcount_rows(packed: np.ndarray) -> np.ndarray:
    return np.bitwise_count(packed).sum(axis=-1, dtype=np.int64)


def hamming_distance(a, b) -> int:
    """Differing positions between two {-1,+1} code rows, via packed popcount."""
    a = as_codes(a)
    b = as_codes(b)
    if a.shape != b.shape:
        raise DimensionError(f"code widths differ: {a.shape[1]} vs {b.shape[1]}")
    return int(_popcount_rows(pack_codes(a) ^ pack_codes(b))[0])


def hamming_to_all(db: CodeDatabase, query_code) -> np.ndarray:
    q = as_codes(query_code)
    if q.shape[1] != db.c:
        raise DimensionError(f"query has {q.shape[1]} bits, database has {db.c}")
    return _popcount_rows(db.packed ^ pack_codes(q))


def rank_by_hamming(db: CodeDatabase, query_code) -> np.ndarray:
    """Database indices by ascending Hamming distance; ties by ascending index."""
    if db.n == 0:
        raise DataError("empty database")
    return np.argsort(hamming_to_all(db, query_code), kind="stable")


def average_precision(ranked_relevance, top_k: int | None = None) -> float:
    rel = np.asarray(ranked_relevance, dtype=bool)
    if top_k is not None:
        rel = rel[:top_k]
    hits = np.flatnonzero(rel)
    if hits.size == 0:
        return 0.0
    precisions = np.arange(1, hits.size + 1) / (hits + 1.0)
    # cumsum adds strictly left to right
    return float(np.cumsum(precisions)[-1] / hits.size)


def evaluate(db: CodeDatabase, queries: CodeDatabase, top_k: int | None = None) -> MetricsReport:
    if queries.n == 0:
        raise DataError("empty query set")
    if db.n == 0:
        raise DataError("empty database")
    if queries.c != db.c:
        raise DimensionError(f"query codes have {queries.c} bits, database has {db.c}")
    if queries.labels.shape[1] != db.labels.shape[1]:
        raise DataError("query and database label spaces differ")
    relevant = shared_label_matrix(queries.labels, db.labels)
    q_codes = queries.codes()
    aps, precisions, recalls = [], [], []
    prec_curve = np.zeros(db.n)
    rec_curve = np.zeros(db.n)
    ranks = np.arange(1, db.n + 1)
    for qi in range(queries.n):
        dist = hamming_to_all(db, q_codes[qi])
        order = np.argsort(dist, kind="stable")
        rel = relevant[qi]
        ranked = rel[order]
        aps.append(average_precision(ranked, top_k))

        n_rel = int(rel.sum())
        inside = dist <= LOOKUP_RADIUS
        n_ret = int(inside.sum())
        hit = int((inside & rel).sum())
        precisions.append(Fraction(hit, n_ret) if n_ret else Fraction(0))
        recalls.append(Fraction(hit, n_rel) if n_rel else Fraction(0))

        cum = np.cumsum(ranked)
        prec_curve += cum / ranks
        if n_rel:
            rec_curve += cum / n_rel
    # counts are integers, so average exactly and round once
    p = sum(precisions) / queries.n
    r = sum(recalls) / queries.n
    f = 2 * p * r / (p + r) if p + r > 0 else Fraction(0)
    curve = list(zip((rec_curve / queries.n).tolist(), (prec_curve / queries.n).tolist()))
    return MetricsReport(float(np.mean(aps)), float(p), float(r), float(f), curve)


def evaluate_asymmetric(state, dataset: Dataset, queries: Dataset, top_k: int | None = None) -> MetricsReport:
    """Database = the learned training codes H; queries = sign of the encoder."""
    db = CodeDatabase.from_codes(state.H, dataset.labels)
    q = CodeDatabase.from_codes(enc.encode_binary(state.encoder, queries.features), queries.labels)
    return evaluate(db, q, top_k)


def evaluate_symmetric(state, dataset: Dataset, queries: Dataset, top_k: int | None = None) -> MetricsReport:
    """Both sides encoded through the network, H is not used."""
    db = CodeDatabase.from_codes(enc.encode_binary(state.encoder, dataset.features), dataset.labels)
    q = CodeDatabase.from_codes(enc.encode_binary(state.encoder, queries.features), queries.labels)
    return evaluate(db, q, top_k)


def write_metrics(path, report: MetricsReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "value"])
        for name, value in report.rows():
            writer.writerow([name, repr(float(value))])


def write_pr_curve(path, report: MetricsReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["recall", "precision"])
        for recall, precision in report.pr_curve:
            writer.writerow([repr(recall), repr(precision)])
