"""Clustering evaluation: contingency tables, macro precision/recall, ARI."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DegeneratePartitionWarning, LengthMismatch


@dataclass(frozen=True)
class Contingency:
    """Counts of (true class, predicted cluster) pairs."""

    table: np.ndarray
    classes: np.ndarray
    clusters: np.ndarray

    @property
    def n(self) -> int:
        return int(self.table.sum())

    @property
    def row_sums(self) -> np.ndarray:
        return self.table.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.table.sum(axis=0)

    def to_dict(self) -> dict:
        return {
            "classes": [_plain(c) for c in self.classes],
            "clusters": [_plain(c) for c in self.clusters],
            "table": self.table.tolist(),
        }


def _plain(v):
    return v.item() if hasattr(v, "item") else v


def contingency(true_labels, predicted_labels) -> Contingency:
    t = np.asarray(true_labels)
    p = np.asarray(predicted_labels)
    if t.shape != p.shape or t.ndim != 1:
        raise LengthMismatch(f"label vectors differ in length: {t.shape} vs {p.shape}")
    if t.size < 1:
        raise LengthMismatch("need at least one label")
    classes, ti = np.unique(t, return_inverse=True)
    clusters, pi = np.unique(p, return_inverse=True)
    table = np.zeros((classes.size, clusters.size), dtype=np.int64)
    np.add.at(table, (ti, pi), 1)
    return Contingency(table, classes, clusters)


def macro_precision_recall(ct: Contingency) -> tuple[float, float]:
    """Class-averaged precision and recall under an optimal one-to-one
    class/cluster matching (max total matched count).

    For class t matched to cluster k: a = n_tk, b = (cluster k size) - a,
    c = (class t size) - a.  Unmatched classes score 0 on both.
    """
    # Columns are put in a canonical order (by their count vectors) so the
    # matching cannot depend on how the predicted clusters happen to be named.
    order = np.lexsort(ct.table[::-1])
    table = ct.table[:, order].astype(float)
    col_sums = table.sum(axis=0)
    row_sums = table.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p_tk = np.where(col_sums[None, :] > 0, table / col_sums[None, :], 0.0)
        r_tk = np.where(row_sums[:, None] > 0, table / row_sums[:, None], 0.0)
    # Matched counts are integers, so a tie-break term summing to < 1 never
    # changes the optimal count; it only picks, among count-optimal
    # matchings, the one with the best per-class scores.
    delta = 1.0 / (4.0 * (min(table.shape) + 1))
    rows, cols = linear_sum_assignment(table + delta * (p_tk + r_tk), maximize=True)
    prec = np.zeros(table.shape[0])
    rec = np.zeros(table.shape[0])
    prec[rows] = p_tk[rows, cols]
    rec[rows] = r_tk[rows, cols]
    return float(prec.mean()), float(rec.mean())


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1.0) / 2.0


def adjusted_rand_index(true_labels, predicted_labels) -> float:
    """Hubert-Arabie adjusted Rand index.

    Returns 1.0 with a DegeneratePartitionWarning when the index is 0/0
    (both partitions trivial).
    """
    ct = contingency(true_labels, predicted_labels)
    if ct.n < 2:
        raise LengthMismatch("ARI needs at least two labelled points")
    sum_ij = _comb2(ct.table).sum()
    sum_a = _comb2(ct.row_sums).sum()
    sum_b = _comb2(ct.col_sums).sum()
    expected = sum_a * sum_b / _comb2(ct.n)
    max_index = 0.5 * (sum_a + sum_b)
    denom = max_index - expected
    if denom == 0:
        warnings.warn("ARI undefined for trivial partitions; returning 1", DegeneratePartitionWarning, stacklevel=2)
        return 1.0
    return float((sum_ij - expected) / denom)


def evaluate(true_labels, predicted_labels) -> dict:
    ct = contingency(true_labels, predicted_labels)
    mp, mr = macro_precision_recall(ct)
    return {
        "macro_precision": mp,
        "macro_recall": mr,
        "ari": adjusted_rand_index(true_labels, predicted_labels),
        "contingency": ct.to_dict(),
    }
