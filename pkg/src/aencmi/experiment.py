"""Repeated random-split evaluation, selection frequencies and plot data."""
from __future__ import annotations

import csv
import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import ExpressionDataset, random_split, standardize
from .model import (CV_SEED_OFFSET, CmiWeights, CvResult, EnetAdaptiveWeights, FitParams,
                    ModelFit, UnitWeights, classify, cross_validate, fit_model)
from .solver import GroupingAudit, PathFit, grouping_audit

METHODS = ("aen_cmi", "elastic_net", "adaptive_lasso", "aen_ridge_free")


@dataclass(frozen=True)
class RepeatRecord:
    repeat: int
    seed: int
    train_indices: tuple[int, ...]
    test_indices: tuple[int, ...]
    accuracy: float
    selected: tuple[str, ...]
    chosen_lambda: float

    @property
    def n_selected(self) -> int:
        return len(self.selected)


@dataclass(frozen=True)
class ExperimentReport:
    method: str
    repeats: int
    accuracy_mean: float
    accuracy_sd: float
    genes_mean: float
    genes_sd: float
    records: tuple[RepeatRecord, ...]
    selection_frequency: dict
    settings: dict = field(default_factory=dict)
    sd_defined: bool = True

    def to_dict(self) -> dict:
        return {
            "format": "aencmi-report",
            "version": __version__,
            "method": self.method,
            "repeats": self.repeats,
            "accuracy_mean": self.accuracy_mean,
            "accuracy_sd": self.accuracy_sd,
            "genes_mean": self.genes_mean,
            "genes_sd": self.genes_sd,
            "sd_defined": self.sd_defined,
            "settings": self.settings,
            "selection_frequency": self.selection_frequency,
            "per_repeat": [
                {**asdict(r), "train_indices": list(r.train_indices),
                 "test_indices": list(r.test_indices), "selected": list(r.selected),
                 "n_selected": r.n_selected}
                for r in self.records
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentReport":
        records = tuple(
            RepeatRecord(r["repeat"], r["seed"], tuple(r["train_indices"]), tuple(r["test_indices"]),
                         r["accuracy"], tuple(r["selected"]), r["chosen_lambda"])
            for r in doc["per_repeat"])
        return cls(doc["method"], doc["repeats"], doc["accuracy_mean"], doc["accuracy_sd"],
                   doc["genes_mean"], doc["genes_sd"], records, dict(doc["selection_frequency"]),
                   doc.get("settings", {}), doc.get("sd_defined", True))


def _mean_sd(values) -> tuple[float, float]:
    values = [float(v) for v in values]
    mean = math.fsum(values) / len(values)
    if len(values) < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(var)


def fit_method(ds: ExpressionDataset, train, method: str, params: FitParams,
               weight_override=None) -> ModelFit:
    """Fit one of the compared methods on ``train``.

    ``aen_ridge_free`` first picks an identity-weight elastic-net lambda by
    cross-validation, then uses ``1/(|theta_enet| + delta)`` weights
    recomputed on every fold's training rows at that lambda.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if weight_override is not None:
        return fit_model(ds, train, params, weight_override, method=method)
    if method == "aen_cmi":
        return fit_model(ds, train, params, method=method)
    if method == "elastic_net":
        return fit_model(ds, train, params, UnitWeights(), method=method)
    if method == "adaptive_lasso":
        scheme = CmiWeights(params.bins, params.delta, params.exclude_self)
        return fit_model(ds, train, params, scheme, alpha=1.0, method=method)
    initial = cross_validate(ds, train, params.alpha, UnitWeights(), params.folds,
                             params.seed + CV_SEED_OFFSET, params=params)
    scheme = EnetAdaptiveWeights(initial.chosen_lambda, params.alpha, params.delta,
                                 params.tol, params.max_sweeps)
    return fit_model(ds, train, params, scheme, method=method)


def _one_repeat(args) -> RepeatRecord:
    ds, method, r, seed, split_fraction, train_size, params, weight_override = args
    split = random_split(ds, split_fraction, seed, train_size=train_size)
    model = fit_method(ds, split.train_indices, method, replace(params, seed=seed), weight_override)
    test = split.test_indices
    predicted = classify(model, ds.values[test])
    accuracy = float(np.count_nonzero(predicted == ds.labels[test])) / test.size
    return RepeatRecord(r, seed, tuple(int(i) for i in split.train_indices),
                        tuple(int(i) for i in test), accuracy, model.selected_features,
                        model.chosen_lambda)


def run_protocol(ds: ExpressionDataset, method: str = "aen_cmi", repeats: int = 10,
                 split_fraction: float | None = 0.5, hyper: FitParams | None = None,
                 base_seed: int = 0, *, train_size: int | None = None, threads: int = 1,
                 weight_override=None) -> ExperimentReport:
    """Repeat split / fit / score ``repeats`` times with seeds ``base_seed + r``.

    Repeats run in worker processes when ``threads > 1``; records are
    always assembled in repeat order, so the report does not depend on the
    worker count.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    params = hyper or FitParams()
    jobs = [(ds, method, r, base_seed + r, split_fraction, train_size, params, weight_override)
            for r in range(repeats)]
    if threads > 1 and repeats > 1:
        with ProcessPoolExecutor(max_workers=min(threads, repeats)) as pool:
            records = list(pool.map(_one_repeat, jobs))
    else:
        records = [_one_repeat(job) for job in jobs]
    return summarize(method, records, _settings(ds, method, params, split_fraction, train_size,
                                                base_seed, weight_override))


def summarize(method: str, records, settings: dict | None = None) -> ExperimentReport:
    records = tuple(records)
    acc_mean, acc_sd = _mean_sd(r.accuracy for r in records)
    genes_mean, genes_sd = _mean_sd(r.n_selected for r in records)
    counts = Counter(fid for r in records for fid in r.selected)
    freq = {fid: c for fid, c in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))}
    return ExperimentReport(method, len(records), acc_mean, acc_sd, genes_mean, genes_sd,
                            records, freq, settings or {}, sd_defined=len(records) > 1)


def _settings(ds, method, params, split_fraction, train_size, base_seed, weight_override) -> dict:
    n0, n1 = ds.class_counts()
    alpha = 1.0 if method == "adaptive_lasso" else params.alpha
    notes = [
        "lambda chosen by stratified K-fold CV on 0/1 misclassification, ties toward larger lambda",
        "penalty weights and standardization recomputed inside every CV fold",
    ]
    if params.readapt > 1:
        notes.append("readapt > 1: significance re-estimated over the previous support "
                     "(constructed procedure)")
    if method == "aen_ridge_free":
        notes.append("aen_ridge_free weights are 1/(|elastic-net coef| + delta), a reconstruction")
    return {
        "dataset": {"n": ds.n_samples, "p": ds.n_features, "class_counts": [n0, n1],
                    "fingerprint": ds.fingerprint()},
        "split_fraction": split_fraction,
        "train_size": train_size,
        "base_seed": base_seed,
        "alpha_used": alpha,
        "hyperparameters": asdict(params),
        "weight_override": None if weight_override is None else repr(weight_override),
        "notes": notes,
    }


def selection_frequency_table(report: ExperimentReport, annotations: dict | None = None) -> list[dict]:
    """Features ranked by selection count, ties by id; unselected ones omitted."""
    rows = []
    for fid, count in sorted(report.selection_frequency.items(), key=lambda kv: (-kv[1], kv[0])):
        if count <= 0:
            continue
        row = {"feature_id": fid, "count": count, "frequency": f"{count}/{report.repeats}"}
        if annotations is not None:
            ann = annotations.get(fid, {})
            row["accession"] = ann.get("accession", "")
            row["description"] = ann.get("description", "")
        rows.append(row)
    return rows


def load_annotations(path) -> dict:
    """``feature_id,accession,description`` CSV -> mapping by feature id."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"feature_id", "accession", "description"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"annotation file lacks columns {sorted(missing)}")
        return {row["feature_id"]: {"accession": row["accession"], "description": row["description"]}
                for row in reader}


def write_frequency_table(rows: list[dict], path) -> None:
    fields = ["feature_id", "frequency", "count"]
    if rows and "accession" in rows[0]:
        fields = ["feature_id", "accession", "description", "frequency", "count"]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def write_report(report: ExperimentReport, json_path, csv_path) -> None:
    Path(json_path).write_text(json.dumps(report.to_dict(), indent=1) + "\n", encoding="utf-8")
    with Path(csv_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["repeat", "seed", "accuracy", "n_selected", "chosen_lambda", "selected"])
        for r in report.records:
            w.writerow([r.repeat, r.seed, repr(r.accuracy), r.n_selected, repr(r.chosen_lambda),
                        ";".join(r.selected)])


def read_report(json_path) -> ExperimentReport:
    return ExperimentReport.from_dict(json.loads(Path(json_path).read_text(encoding="utf-8")))


def emit_error_curve(cv: CvResult, path) -> None:
    """Write ``lambda,mean_misclassified,se`` rows in grid order."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "mean_misclassified", "se"])
        for lam, m, se in zip(cv.lambdas, cv.mean_misclassified, cv.se_misclassified):
            w.writerow([repr(float(lam)), repr(float(m)), repr(float(se))])


def read_error_curve(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    arr = np.array([[float(c) for c in row] for row in rows])
    return arr[:, 0], arr[:, 1], arr[:, 2]


def emit_path(path: PathFit, feature_ids, out_path, *, only_active: bool = True) -> None:
    """Write ``lambda,feature_id,coefficient`` for plotting coefficient paths.

    With ``only_active`` features that stay zero along the whole path are
    left out; active features get a row at every lambda.
    """
    B = path.coefficient_matrix()
    cols = np.flatnonzero(np.any(B != 0, axis=0)) if only_active else np.arange(B.shape[1])
    with Path(out_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "feature_id", "coefficient"])
        for lam, row in zip(path.lambdas, B):
            for j in cols:
                w.writerow([repr(float(lam)), feature_ids[j], repr(float(row[j]))])


def audit_model(model: ModelFit, ds: ExpressionDataset, train_subset) -> GroupingAudit:
    """Grouping audit of a fitted model on its own standardized training data."""
    view = standardize(ds, train_subset)
    return grouping_audit(model.std_coefficients[view.retained], view.values, view.response,
                          model.weights[view.retained], model.chosen_lambda, model.alpha)
