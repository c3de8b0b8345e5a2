"""Per-feature significance scores and adaptive penalty weights.

A feature's significance is its average class-conditional mutual
information with the other features; its penalty weight is
``1 / (significance + delta)``, so features that share more
class-conditional information are penalized less.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import ExpressionDataset
from .infotheory import DiscretizedMatrix, discretize_matrix

DEFAULT_DELTA = 0.001
DEFAULT_BINS = 3

# rows of the count matrix processed per block; bounds peak memory
_BLOCK_ROWS = 768


@dataclass(frozen=True)
class WeightProfile:
    significance: np.ndarray
    weights: np.ndarray
    delta: float
    bins: int
    exclude_self: bool = False
    # features that took part in the significance sums
    reference: np.ndarray | None = field(default=None, repr=False)

    def summary(self) -> dict:
        return {
            "delta": self.delta,
            "bins": self.bins,
            "exclude_self": self.exclude_self,
            "significance_min": float(self.significance.min()),
            "significance_max": float(self.significance.max()),
            "weight_min": float(self.weights.min()),
            "weight_max": float(self.weights.max()),
        }


def _one_hot(codes: np.ndarray, n_bins: int) -> np.ndarray:
    n, p = codes.shape
    out = np.zeros((n, p * n_bins))
    out[np.repeat(np.arange(n), p), (np.arange(p) * n_bins + codes).ravel()] = 1.0
    return out


def _xlog2x_ratio(counts, row_marg, col_marg, n_stratum):
    """Sum of N * log2(N * n / (row * col)) over cells with N > 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = counts * n_stratum / np.multiply.outer(row_marg, col_marg)
        terms = np.where(counts > 0, counts * np.log2(np.where(counts > 0, ratio, 1.0)), 0.0)
    return terms


def pairwise_cmi_sums(codes: np.ndarray, labels: np.ndarray, reference=None,
                      n_bins: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Row sums of the class-conditional MI matrix, plus its diagonal.

    Returns ``(sums, diag)`` where ``sums[k] = sum_{j in reference} I(x_k; x_j | y)``
    and ``diag[k] = I(x_k; x_k | y)``.  Joint counts for every feature pair
    inside a class come from one-hot products, so the whole computation is
    a handful of matrix multiplies; counts are small integers and therefore
    exact in floating point.
    """
    codes = np.asarray(codes, dtype=np.int64)
    labels = np.asarray(labels)
    n, p = codes.shape
    if n_bins is None:
        n_bins = int(codes.max()) + 1
    ref = np.arange(p) if reference is None else np.asarray(reference, dtype=np.int64)
    sums = np.zeros(p)
    diag = np.zeros(p)
    for cls in np.unique(labels):
        rows = labels == cls
        n_c = int(rows.sum())
        onehot = _one_hot(codes[rows], n_bins)                     # n_c x (p*B)
        marg = onehot.sum(axis=0)                                  # p*B
        ref_cols = (ref[:, None] * n_bins + np.arange(n_bins)).ravel()
        ref_hot = onehot[:, ref_cols]
        ref_marg = marg[ref_cols]
        # diagonal: I(x;x|y=c) = H(x|y=c)
        m = marg.reshape(p, n_bins)
        with np.errstate(divide="ignore", invalid="ignore"):
            h = np.where(m > 0, m * np.log2(np.where(m > 0, n_c / m, 1.0)), 0.0).sum(axis=1)
        diag += h / n
        for start in range(0, p * n_bins, _BLOCK_ROWS):
            stop = min(start + _BLOCK_ROWS, p * n_bins)
            counts = onehot[:, start:stop].T @ ref_hot             # block x (|ref|*B)
            terms = _xlog2x_ratio(counts, marg[start:stop], ref_marg, n_c)
            per_row = terms.sum(axis=1)                            # sum over ref features and their bins
            feat = np.arange(start, stop) // n_bins
            np.add.at(sums, feat, per_row / n)
    np.maximum(sums, 0.0, out=sums)
    np.maximum(diag, 0.0, out=diag)
    return sums, diag


def gene_significance(dm: DiscretizedMatrix | np.ndarray, labels, *, exclude_self: bool = False,
                      reference=None) -> np.ndarray:
    """Average class-conditional MI of each feature with the reference features.

    ``s_k = (1/(m-1)) * sum_{j in R} I(x_k; x_j | y)`` with ``R`` the reference
    set (all features by default) and ``m = |R|``.  The sum includes the
    self-term ``j = k`` unless ``exclude_self`` is set.
    """
    codes = dm.codes if isinstance(dm, DiscretizedMatrix) else np.asarray(dm)
    labels = np.asarray(labels)
    p = codes.shape[1]
    ref = np.arange(p) if reference is None else np.asarray(reference, dtype=np.int64)
    if ref.size < 2:
        raise ValueError("significance needs at least two reference features")
    if labels.size != codes.shape[0]:
        raise ValueError("labels length does not match number of samples")
    if np.unique(labels).size < 2:
        raise ValueError("labels are constant")
    sums, diag = pairwise_cmi_sums(codes, labels, ref)
    if exclude_self:
        in_ref = np.isin(np.arange(p), ref)
        sums = sums - np.where(in_ref, diag, 0.0)
        np.maximum(sums, 0.0, out=sums)
    return sums / (ref.size - 1)


def weights_from_significance(s, delta: float = DEFAULT_DELTA) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if not delta > 0:
        raise ValueError("delta must be positive")
    if np.any(s < 0):
        raise ValueError("significance scores must be nonnegative")
    return 1.0 / (s + delta)


def build_weight_profile(ds: ExpressionDataset, subset=None, bins: int = DEFAULT_BINS,
                         delta: float = DEFAULT_DELTA, *, exclude_self: bool = False,
                         reference=None) -> WeightProfile:
    """Discretize the training rows, score every feature and convert to weights.

    Features that are constant over ``subset`` carry no information and are
    left out of the sums (they are also dropped by standardization); they
    receive significance 0 and the maximal weight ``1/delta``.

    ``reference`` optionally restricts the features summed over (by index
    into ``ds``), which is how re-adaptation on a previous support works.
    """
    subset = np.arange(ds.n_samples) if subset is None else np.asarray(subset, dtype=np.int64)
    block = ds.values[subset]
    labels = ds.labels[subset]
    varying = np.flatnonzero(np.ptp(block, axis=0) > 0)
    ref = varying if reference is None else np.intersect1d(np.asarray(reference, dtype=np.int64), varying)
    s = np.zeros(ds.n_features)
    if varying.size and ref.size >= 2:
        dm = discretize_matrix(block[:, varying], bins)
        # reference positions inside the varying block
        ref_local = np.searchsorted(varying, ref)
        s[varying] = gene_significance(dm, labels, exclude_self=exclude_self, reference=ref_local)
    return WeightProfile(significance=s, weights=weights_from_significance(s, delta),
                         delta=float(delta), bins=int(bins), exclude_self=exclude_self,
                         reference=ref)
