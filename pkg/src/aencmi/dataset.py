"""Expression matrices: loading, validation, standardization and splitting.

The regression core works on column-standardized features and a centered
response.  Standardization statistics are always estimated on a training
subset and then re-applied to held-out rows.
"""
from __future__ import annotations

import csv
import hashlib
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class ExpressionDataset:
    """Samples x features expression matrix with binary labels."""

    values: np.ndarray
    feature_ids: tuple[str, ...]
    sample_ids: tuple[str, ...]
    labels: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        labels = np.asarray(self.labels)
        if values.ndim != 2:
            raise DatasetError("values must be a 2-d matrix")
        n, p = values.shape
        if n < 2 or p < 1:
            raise DatasetError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if not np.all(np.isfinite(values)):
            raise DatasetError("values contain non-finite entries")
        if len(self.feature_ids) != p or len(self.sample_ids) != n:
            raise DatasetError("id lists do not match matrix shape")
        if len(set(self.feature_ids)) != p:
            dup = _first_duplicate(self.feature_ids)
            raise DatasetError(f"duplicate feature id {dup!r}")
        if labels.shape != (n,):
            raise DatasetError("labels must be a vector of length n")
        if not np.all((labels == 0) | (labels == 1)):
            raise DatasetError("labels must be 0 or 1")
        labels = labels.astype(np.int64)
        if labels.min() == labels.max():
            raise DatasetError("labels must contain both classes")
        values.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_ids", tuple(self.feature_ids))
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def class_counts(self) -> tuple[int, int]:
        ones = int(self.labels.sum())
        return self.n_samples - ones, ones

    def fingerprint(self) -> str:
        """SHA-256 over ids, labels and raw matrix bytes."""
        h = hashlib.sha256()
        h.update("\x1f".join(self.feature_ids).encode())
        h.update(b"\x1e")
        h.update("\x1f".join(self.sample_ids).encode())
        h.update(b"\x1e")
        h.update(np.ascontiguousarray(self.labels, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class StandardizedView:
    """Training-subset standardization of an :class:`ExpressionDataset`.

    ``values`` holds only the retained columns; ``retained`` maps them back
    to the dataset's feature indices.
    """

    values: np.ndarray
    column_means: np.ndarray
    column_scales: np.ndarray
    response: np.ndarray
    response_mean: float
    dropped_features: tuple[int, ...]
    retained: np.ndarray
    sample_subset: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class SplitSpec:
    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int


def _first_duplicate(items):
    seen = set()
    for item in items:
        if item in seen:
            return item
        seen.add(item)
    return None


def read_matrix_csv(matrix_path) -> tuple[np.ndarray, tuple[str, ...], tuple[str, ...]]:
    """Parse a ``sample_id,<feature ids...>`` matrix file.

    Returns ``(values, feature_ids, sample_ids)``.
    """
    matrix_path = Path(matrix_path)
    with matrix_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{matrix_path}: empty file") from None
        if len(header) < 2:
            raise DatasetError(f"{matrix_path}: header needs sample_id and at least one feature")
        feature_ids = [h.strip() for h in header[1:]]
        sample_ids, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(
                    f"{matrix_path}:{lineno}: ragged row ({len(row)} cells, expected {len(header)})")
            try:
                rows.append([float(cell) for cell in row[1:]])
            except ValueError as exc:
                raise DatasetError(f"{matrix_path}:{lineno}: non-numeric cell ({exc})") from None
            sample_ids.append(row[0].strip())
    if len(set(feature_ids)) != len(feature_ids):
        raise DatasetError(f"{matrix_path}: duplicate feature id {_first_duplicate(feature_ids)!r}")
    if len(set(sample_ids)) != len(sample_ids):
        raise DatasetError(f"{matrix_path}: duplicate sample id {_first_duplicate(sample_ids)!r}")
    values = np.array(rows, dtype=float).reshape(len(rows), len(feature_ids))
    return values, tuple(feature_ids), tuple(sample_ids)


def load_csv(matrix_path, labels_path) -> ExpressionDataset:
    """Read a matrix CSV and a ``sample_id,label`` CSV and join by sample id.

    The matrix file has a header ``sample_id,<feature ids...>`` and one row
    per sample.  Row order of the result follows the matrix file.
    """
    labels_path = Path(labels_path)
    values, feature_ids, sample_ids = read_matrix_csv(matrix_path)

    label_map = {}
    with labels_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["sample_id", "label"]:
            raise DatasetError(f"{labels_path}: header must be 'sample_id,label'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DatasetError(f"{labels_path}:{lineno}: expected 2 cells")
            sid, raw = row[0].strip(), row[1].strip()
            if raw not in ("0", "1"):
                raise DatasetError(f"{labels_path}:{lineno}: label {raw!r} not in {{0,1}}")
            if sid in label_map:
                raise DatasetError(f"{labels_path}:{lineno}: duplicate sample id {sid!r}")
            label_map[sid] = int(raw)

    missing = [s for s in sample_ids if s not in label_map]
    extra = sorted(set(label_map) - set(sample_ids))
    if missing or extra:
        raise DatasetError(
            f"sample ids differ between files (missing labels: {missing[:5]}, "
            f"unknown label rows: {extra[:5]})")
    labels = np.array([label_map[s] for s in sample_ids], dtype=np.int64)
    return ExpressionDataset(values, feature_ids, sample_ids, labels)


def write_csv(ds: ExpressionDataset, matrix_path, labels_path) -> None:
    """Inverse of :func:`load_csv`; floats are written with ``repr``."""
    with Path(matrix_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", *ds.feature_ids])
        for sid, row in zip(ds.sample_ids, ds.values):
            w.writerow([sid, *map(repr, row.tolist())])
    with Path(labels_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "label"])
        for sid, lab in zip(ds.sample_ids, ds.labels):
            w.writerow([sid, int(lab)])


def _as_subset(ds: ExpressionDataset, sample_subset) -> np.ndarray:
    subset = np.asarray(sample_subset, dtype=np.int64).reshape(-1)
    if subset.size and (subset.min() < 0 or subset.max() >= ds.n_samples):
        raise IndexError("sample index out of range")
    return subset


def standardize(ds: ExpressionDataset, sample_subset: Sequence[int] | None = None) -> StandardizedView:
    """Center and scale columns to mean 0 and mean-square 1 over ``sample_subset``.

    Columns that are constant over the subset cannot be scaled and are
    dropped with a warning.  The response is the label vector centered by
    its subset mean.
    """
    subset = np.arange(ds.n_samples) if sample_subset is None else _as_subset(ds, sample_subset)
    if subset.size < 2:
        raise DatasetError("standardization needs at least two samples")
    block = ds.values[subset]
    means = block.mean(axis=0)
    centered = block - means
    scales = np.sqrt(np.mean(centered ** 2, axis=0))
    # relative cutoff: tiny spread is float noise around a constant
    tiny = scales <= 1e-12 * np.maximum(1.0, np.abs(means))
    retained = np.flatnonzero(~tiny)
    dropped = tuple(int(j) for j in np.flatnonzero(tiny))
    if retained.size == 0:
        raise DatasetError("all columns have zero variance over the subset")
    if dropped:
        warnings.warn(f"dropping {len(dropped)} zero-variance feature(s)", stacklevel=2)
    values = centered[:, retained] / scales[retained]
    # second pass removes the O(eps) mean left by the first division
    values -= values.mean(axis=0)
    labels = ds.labels[subset].astype(float)
    y_mean = float(labels.mean())
    values.setflags(write=False)
    return StandardizedView(values=values, column_means=means, column_scales=scales,
                            response=labels - y_mean, response_mean=y_mean,
                            dropped_features=dropped, retained=retained, sample_subset=subset)


def apply_standardization(view: StandardizedView, ds: ExpressionDataset,
                          sample_subset: Sequence[int]) -> np.ndarray:
    """Transform rows of ``ds`` with the statistics stored in ``view``."""
    subset = _as_subset(ds, sample_subset)
    r = view.retained
    return (ds.values[np.ix_(subset, r)] - view.column_means[r]) / view.column_scales[r]


def _allocate(counts: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder apportionment of ``total`` across classes."""
    quota = counts * total / counts.sum()
    alloc = np.floor(quota).astype(int)
    order = np.argsort(-(quota - alloc), kind="stable")
    for k in order[: total - alloc.sum()]:
        alloc[k] += 1
    return alloc


def random_split(ds: ExpressionDataset, train_fraction: float | None = None, seed: int = 0,
                 *, train_size: int | None = None) -> SplitSpec:
    """Stratified random train/test split.

    Exactly one of ``train_fraction`` and ``train_size`` is used; the number
    of training samples is ``round(train_fraction * n)`` and it is spread
    over the two classes in proportion to their sizes.  Each side keeps at
    least one sample of each class.
    """
    n = ds.n_samples
    if train_size is None:
        if train_fraction is None or not 0.0 < train_fraction < 1.0:
            raise DatasetError("train_fraction must lie in (0, 1)")
        train_size = int(round(train_fraction * n))
    if not 2 <= train_size <= n - 2:
        raise DatasetError(f"train size {train_size} leaves a side without both classes (n={n})")
    counts = np.array(ds.class_counts())
    if counts.min() < 2:
        raise DatasetError("each class needs at least two samples to stratify")
    alloc = np.clip(_allocate(counts, train_size), 1, counts - 1)
    # clipping can only move one unit per class for train sizes in range
    while alloc.sum() < train_size:
        k = int(np.argmax(counts - 1 - alloc))
        alloc[k] += 1
    while alloc.sum() > train_size:
        k = int(np.argmax(alloc - 1))
        alloc[k] -= 1

    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls, k in zip((0, 1), alloc):
        members = np.flatnonzero(ds.labels == cls)
        members = members[rng.permutation(members.size)]
        train.append(members[:k])
        test.append(members[k:])
    return SplitSpec(np.sort(np.concatenate(train)), np.sort(np.concatenate(test)), int(seed))


def stratified_folds(labels: np.ndarray, folds: int, seed: int) -> list[np.ndarray]:
    """Assign positions ``0..len(labels)-1`` to ``folds`` class-stratified folds."""
    labels = np.asarray(labels)
    n_min = min(int((labels == 0).sum()), int((labels == 1).sum()))
    if folds < 2:
        raise DatasetError("need at least 2 folds")
    if folds > n_min:
        raise DatasetError(f"{folds} folds exceed the smaller class count ({n_min})")
    rng = np.random.default_rng(seed)
    assignment = np.empty(labels.size, dtype=np.int64)
    offset = 0
    for cls in (0, 1):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(members.size)]
        # continue the round-robin across classes so fold sizes stay balanced
        assignment[members] = (np.arange(members.size) + offset) % folds
        offset += members.size
    return [np.flatnonzero(assignment == f) for f in range(folds)]
