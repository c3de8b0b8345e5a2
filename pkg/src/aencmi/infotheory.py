"""Plugin (maximum-likelihood) information measures on discrete data, in bits.

Continuous columns are first mapped to integer codes by equal-frequency
binning.  All estimators use empirical frequencies with the convention
``0 * log 0 = 0`` and no bias correction.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DiscretizedMatrix:
    codes: np.ndarray
    bins_per_feature: np.ndarray
    bin_edges: tuple[np.ndarray, ...]

    @property
    def max_bins(self) -> int:
        return int(self.bins_per_feature.max())


@dataclass(frozen=True)
class JointDistribution:
    """Empirical joint distribution of one or more aligned discrete vectors."""

    counts: dict
    total: int

    @classmethod
    def from_vectors(cls, *vectors) -> "JointDistribution":
        columns = [np.asarray(v).tolist() for v in vectors]
        if len({len(c) for c in columns}) != 1:
            raise ValueError("vectors must have equal length")
        counts = Counter(zip(*columns))
        return cls(dict(counts), len(columns[0]))

    def probabilities(self) -> dict:
        return {k: c / self.total for k, c in self.counts.items()}


def discretize_equal_frequency(column, bins: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Bin a real vector at its empirical quantiles.

    Edges are the ``k/bins`` quantiles, ``k = 1..bins-1``; a value ``v`` gets
    the number of edges strictly below it, so equal values always share a
    bin.  Coincident edges merge bins and codes are then relabeled densely.

    Returns
    -------
    codes : ndarray of int
        Values in ``0..effective_bins-1``.
    edges : ndarray
        The distinct cut points actually used.
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    x = np.asarray(column, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("empty column")
    edges = np.unique(np.quantile(x, np.arange(1, bins) / bins))
    raw = np.searchsorted(edges, x, side="left")
    used, codes = np.unique(raw, return_inverse=True)
    # keep only edges that separate two occupied bins
    kept = edges[used[1:] - 1] if used.size > 1 else edges[:0]
    return codes.astype(np.int64), kept


def discretize_matrix(values, bins: int = 3) -> DiscretizedMatrix:
    values = np.asarray(values, dtype=float)
    codes = np.empty(values.shape, dtype=np.int64)
    edges = []
    for j in range(values.shape[1]):
        codes[:, j], e = discretize_equal_frequency(values[:, j], bins)
        edges.append(e)
    counts = np.array([e.size + 1 for e in edges], dtype=np.int64)
    return DiscretizedMatrix(codes, counts, tuple(edges))


def _check_same_length(*vectors):
    lengths = {len(v) for v in vectors}
    if len(lengths) != 1:
        raise ValueError(f"length mismatch: {sorted(lengths)}")
    if 0 in lengths:
        raise ValueError("empty vector")


def _dense(v) -> np.ndarray:
    return np.unique(np.asarray(v).reshape(-1), return_inverse=True)[1].reshape(-1)


def _entropy_of_counts(counts: np.ndarray) -> float:
    counts = counts[counts > 0].astype(float)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def entropy(v) -> float:
    """Shannon entropy of the empirical distribution of ``v``."""
    v = np.asarray(v).reshape(-1)
    if v.size == 0:
        raise ValueError("empty vector")
    return _entropy_of_counts(np.bincount(_dense(v)))


def _joint_codes(*vectors) -> np.ndarray:
    """Single integer code per row for a tuple of discrete vectors."""
    code = np.zeros(len(vectors[0]), dtype=np.int64)
    for v in vectors:
        d = _dense(v)
        code = code * (d.max() + 1) + d
    return code


def joint_entropy(*vectors) -> float:
    _check_same_length(*vectors)
    return entropy(_joint_codes(*vectors))


def conditional_entropy(a, z) -> float:
    """H(a | z) = sum_z p(z) H(a | Z=z)."""
    _check_same_length(a, z)
    a, z = np.asarray(a).reshape(-1), _dense(z)
    n = z.size
    return sum(np.count_nonzero(z == g) / n * entropy(a[z == g]) for g in range(z.max() + 1))


def mutual_information(a, b) -> float:
    """Plugin I(a; b) from the contingency table of the two vectors."""
    _check_same_length(a, b)
    a, b = _dense(a), _dense(b)
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a, b), 1.0)
    pab = table / a.size
    pa = pab.sum(axis=1, keepdims=True)
    pb = pab.sum(axis=0, keepdims=True)
    nz = pab > 0
    mi = float((pab[nz] * np.log2(pab[nz] / (pa @ pb)[nz])).sum())
    return max(mi, 0.0)


def conditional_mutual_information(a, b, z) -> float:
    """Plugin I(a; b | z) as the p(z)-weighted average of within-stratum MI."""
    _check_same_length(a, b, z)
    a, b, z = np.asarray(a).reshape(-1), np.asarray(b).reshape(-1), _dense(z)
    n = z.size
    total = 0.0
    for g in range(z.max() + 1):
        mask = z == g
        total += mask.sum() / n * mutual_information(a[mask], b[mask])
    return total
