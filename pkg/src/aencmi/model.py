"""Cross-validated lambda selection, end-to-end fitting and classification.

Labels are regressed as centered 0/1 responses; a sample is assigned to
class 1 when its predicted score exceeds 0.5.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import ExpressionDataset, apply_standardization, standardize, stratified_folds
from .solver import (DEFAULT_ALPHA, DEFAULT_LAMBDA_MIN_RATIO, DEFAULT_MAX_SWEEPS, DEFAULT_N_LAMBDA,
                     DEFAULT_TOL, SolverConfig, fit, fit_path, lambda_grid, lambda_max)
from .weights import DEFAULT_BINS, DEFAULT_DELTA, WeightProfile, build_weight_profile

DEFAULT_FOLDS = 10
# fold assignment seed = split seed + this offset
CV_SEED_OFFSET = 7919


@dataclass(frozen=True)
class FitParams:
    """Hyperparameters shared by every fitting entry point."""

    alpha: float = DEFAULT_ALPHA
    delta: float = DEFAULT_DELTA
    bins: int = DEFAULT_BINS
    folds: int = DEFAULT_FOLDS
    seed: int = 0
    n_lambda: int = DEFAULT_N_LAMBDA
    lambda_min_ratio: float = DEFAULT_LAMBDA_MIN_RATIO
    tol: float = DEFAULT_TOL
    max_sweeps: int = DEFAULT_MAX_SWEEPS
    exclude_self: bool = False
    readapt: int = 1

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.readapt < 1:
            raise ValueError("readapt must be >= 1")


# --- weight schemes: callables (ds, subset) -> WeightProfile | ndarray of length p

@dataclass(frozen=True)
class CmiWeights:
    bins: int = DEFAULT_BINS
    delta: float = DEFAULT_DELTA
    exclude_self: bool = False
    reference: tuple[int, ...] | None = None

    def __call__(self, ds, subset):
        return build_weight_profile(ds, subset, self.bins, self.delta,
                                    exclude_self=self.exclude_self, reference=self.reference)


@dataclass(frozen=True)
class UnitWeights:
    def __call__(self, ds, subset):
        return np.ones(ds.n_features)


@dataclass(frozen=True)
class FixedWeights:
    weights: tuple[float, ...]

    def __call__(self, ds, subset):
        return np.asarray(self.weights, dtype=float)


@dataclass(frozen=True)
class EnetAdaptiveWeights:
    """``w_j = 1/(|theta_j| + delta)`` from an elastic-net fit at a fixed lambda."""

    lam: float
    alpha: float = DEFAULT_ALPHA
    delta: float = DEFAULT_DELTA
    tol: float = DEFAULT_TOL
    max_sweeps: int = DEFAULT_MAX_SWEEPS

    def __call__(self, ds, subset):
        view = _standardize_quiet(ds, subset)
        cfg = SolverConfig(self.alpha, self.lam, np.ones(view.retained.size), self.tol, self.max_sweeps)
        beta = np.zeros(ds.n_features)
        beta[view.retained] = fit(view.values, view.response, cfg).beta
        return 1.0 / (np.abs(beta) + self.delta)


def _weight_array(result) -> np.ndarray:
    return result.weights if isinstance(result, WeightProfile) else np.asarray(result, dtype=float)


def _standardize_quiet(ds, subset):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return standardize(ds, subset)


@dataclass(frozen=True)
class CvResult:
    lambdas: np.ndarray
    mean_misclassified: np.ndarray
    se_misclassified: np.ndarray
    chosen_lambda: float
    folds: int
    seed: int
    chosen_index: int = 0

    def to_dict(self) -> dict:
        return {
            "lambdas": self.lambdas.tolist(),
            "mean_misclassified": self.mean_misclassified.tolist(),
            "se_misclassified": self.se_misclassified.tolist(),
            "chosen_lambda": self.chosen_lambda,
            "chosen_index": self.chosen_index,
            "folds": self.folds,
            "seed": self.seed,
        }


def _shared_grid(ds, train, alpha, weight_fn, params):
    view = _standardize_quiet(ds, train)
    w = _weight_array(weight_fn(ds, train))[view.retained]
    lam_max = lambda_max(view.values, view.response, alpha, w)
    return lambda_grid(lam_max, params.n_lambda, params.lambda_min_ratio)


def cross_validate(ds: ExpressionDataset, train_subset, alpha: float, weights,
                   folds: int = DEFAULT_FOLDS, seed: int = 0, *, params: FitParams | None = None,
                   lambdas=None) -> CvResult:
    """Stratified K-fold estimate of misclassification along a lambda grid.

    Standardization and penalty weights are recomputed from each fold's
    training rows only.  The grid is shared by all folds and derived from
    the full training subset unless given.  Ties in the mean error are
    resolved toward the larger lambda; the top grid point is excluded.

    Parameters
    ----------
    weights : callable or array
        Weight scheme ``(ds, subset) -> WeightProfile | array``; a plain
        array is used as fixed weights.
    """
    params = params or FitParams(alpha=alpha, folds=folds, seed=seed)
    weight_fn = weights if callable(weights) else FixedWeights(tuple(np.asarray(weights, float)))
    train = np.asarray(train_subset, dtype=np.int64)
    if lambdas is None:
        lambdas = _shared_grid(ds, train, alpha, weight_fn, params)
    lambdas = np.asarray(lambdas, dtype=float)
    parts = stratified_folds(ds.labels[train], folds, seed)
    errors = np.zeros((folds, lambdas.size))
    for f, held in enumerate(parts):
        fold_test = train[held]
        fold_train = np.delete(train, held)
        view = _standardize_quiet(ds, fold_train)
        w = _weight_array(weight_fn(ds, fold_train))[view.retained]
        path = fit_path(view.values, view.response, alpha, w, tolerance=params.tol,
                        max_sweeps=params.max_sweeps, lambdas=lambdas)
        X_test = apply_standardization(view, ds, fold_test)
        scores = view.response_mean + X_test @ path.coefficient_matrix().T
        predicted = (scores > 0.5).astype(np.int64)
        errors[f] = (predicted != ds.labels[fold_test][:, None]).sum(axis=0)
    mean = errors.mean(axis=0)
    se = errors.std(axis=0, ddof=1) / np.sqrt(folds)
    # the grid's first point is where the full-training fit is empty by
    # construction, so it is never a candidate; among the rest the first
    # minimum is the largest lambda
    best = 1 + int(np.argmin(mean[1:])) if mean.size > 1 else 0
    return CvResult(lambdas=lambdas, mean_misclassified=mean, se_misclassified=se,
                    chosen_lambda=float(lambdas[best]), folds=folds, seed=int(seed),
                    chosen_index=best)


@dataclass(frozen=True)
class ModelFit:
    feature_ids: tuple[str, ...]
    coefficients: np.ndarray
    intercept: float
    selected_features: tuple[str, ...]
    weight_profile: WeightProfile | None
    weights: np.ndarray
    chosen_lambda: float
    alpha: float
    params: FitParams
    method: str = "aen_cmi"
    std_coefficients: np.ndarray = field(default=None, repr=False)
    column_means: np.ndarray = field(default=None, repr=False)
    column_scales: np.ndarray = field(default=None, repr=False)
    response_mean: float = 0.0
    cv: CvResult | None = field(default=None, repr=False)
    readapt_rounds: int = 1

    @property
    def selected_indices(self) -> np.ndarray:
        return np.flatnonzero(self.coefficients)


def _finalize(ds, train, alpha, weight_fn, params, method, cv_seed) -> tuple[ModelFit, object]:
    view = _standardize_quiet(ds, train)
    wres = weight_fn(ds, train)
    w_full = _weight_array(wres)
    w = w_full[view.retained]
    lambdas = lambda_grid(lambda_max(view.values, view.response, alpha, w),
                          params.n_lambda, params.lambda_min_ratio)
    cv = cross_validate(ds, train, alpha, weight_fn, params.folds, cv_seed, params=params,
                        lambdas=lambdas)
    path = fit_path(view.values, view.response, alpha, w, tolerance=params.tol,
                    max_sweeps=params.max_sweeps, lambdas=lambdas[: cv.chosen_index + 1],
                    intercept=view.response_mean)
    coef = path.fits[-1]
    if not coef.converged:
        warnings.warn(f"solver hit max_sweeps at lambda={cv.chosen_lambda:g}", stacklevel=2)
    beta_std = np.zeros(ds.n_features)
    beta_std[view.retained] = coef.beta
    scales = np.where(view.column_scales > 0, view.column_scales, 1.0)
    beta = np.zeros(ds.n_features)
    beta[view.retained] = coef.beta / scales[view.retained]
    intercept = view.response_mean - float(beta @ view.column_means)
    selected = tuple(ds.feature_ids[j] for j in np.flatnonzero(beta))
    model = ModelFit(
        feature_ids=ds.feature_ids, coefficients=beta, intercept=intercept,
        selected_features=selected,
        weight_profile=wres if isinstance(wres, WeightProfile) else None,
        weights=w_full, chosen_lambda=cv.chosen_lambda, alpha=float(alpha), params=params,
        method=method, std_coefficients=beta_std, column_means=view.column_means,
        column_scales=view.column_scales, response_mean=view.response_mean, cv=cv)
    return model, path


def fit_model(ds: ExpressionDataset, train_subset, params: FitParams, weight_fn=None, *,
              alpha: float | None = None, method: str = "aen_cmi") -> ModelFit:
    """Weights, cross-validation, final fit at the chosen lambda.

    With ``params.readapt > 1`` and the default CMI scheme, significance is
    re-estimated with the sums restricted to the previous round's selected
    features, and the model refitted; this repeats ``readapt`` times in
    total (fewer if fewer than two features remain selected).
    """
    train = np.asarray(train_subset, dtype=np.int64)
    alpha = params.alpha if alpha is None else alpha
    cmi_default = weight_fn is None
    if cmi_default:
        weight_fn = CmiWeights(params.bins, params.delta, params.exclude_self)
    cv_seed = params.seed + CV_SEED_OFFSET
    model, _ = _finalize(ds, train, alpha, weight_fn, params, method, cv_seed)
    rounds = 1
    while cmi_default and rounds < params.readapt:
        support = model.selected_indices
        if support.size < 2:
            break
        weight_fn = CmiWeights(params.bins, params.delta, params.exclude_self,
                               tuple(int(j) for j in support))
        model, _ = _finalize(ds, train, alpha, weight_fn, params, method, cv_seed)
        rounds += 1
    if rounds > 1:
        model = replace(model, readapt_rounds=rounds)
    return model


def fit_aen_cmi(ds: ExpressionDataset, train_subset=None, hyper: FitParams | None = None) -> ModelFit:
    """Adaptive elastic net with conditional-mutual-information weights."""
    train = np.arange(ds.n_samples) if train_subset is None else train_subset
    return fit_model(ds, train, hyper or FitParams())


def predict_score(model: ModelFit, x) -> np.ndarray | float:
    """Linear score ``intercept + x . coefficients`` on the original scale.

    ``x`` may be a single row of length p or an (m, p) matrix.
    """
    x = np.asarray(x, dtype=float)
    p = model.coefficients.size
    if x.shape[-1] != p:
        raise ValueError(f"expected {p} features, got {x.shape[-1]}")
    score = model.intercept + x @ model.coefficients
    return float(score) if np.ndim(score) == 0 else score


def classify(model: ModelFit, x):
    """Class 1 iff the score is strictly greater than 0.5."""
    score = predict_score(model, x)
    if np.ndim(score) == 0:
        return int(score > 0.5)
    return (score > 0.5).astype(np.int64)


# --- JSON model documents

def model_to_dict(model: ModelFit) -> dict:
    doc = {
        "format": "aencmi-model",
        "version": __version__,
        "method": model.method,
        "feature_ids": list(model.feature_ids),
        "coefficients": model.coefficients.tolist(),
        "intercept": model.intercept,
        "selected_features": list(model.selected_features),
        "chosen_lambda": model.chosen_lambda,
        "alpha": model.alpha,
        "hyperparameters": asdict(model.params),
        "readapt_rounds": model.readapt_rounds,
        "weights": model.weights.tolist(),
        "standardization": {
            "column_means": model.column_means.tolist(),
            "column_scales": model.column_scales.tolist(),
            "response_mean": model.response_mean,
            "std_coefficients": model.std_coefficients.tolist(),
        },
    }
    if model.weight_profile is not None:
        doc["weight_profile"] = {**model.weight_profile.summary(),
                                 "significance": model.weight_profile.significance.tolist()}
    if model.cv is not None:
        doc["cv"] = model.cv.to_dict()
    return doc


def model_from_dict(doc: dict) -> ModelFit:
    if doc.get("format") != "aencmi-model":
        raise ValueError("not an aencmi model document")
    params = FitParams(**doc["hyperparameters"])
    weights = np.asarray(doc["weights"], dtype=float)
    profile = None
    if "weight_profile" in doc:
        wp = doc["weight_profile"]
        profile = WeightProfile(np.asarray(wp["significance"], dtype=float), weights,
                                wp["delta"], wp["bins"], wp["exclude_self"])
    cv = None
    if "cv" in doc:
        c = doc["cv"]
        cv = CvResult(np.asarray(c["lambdas"]), np.asarray(c["mean_misclassified"]),
                      np.asarray(c["se_misclassified"]), c["chosen_lambda"], c["folds"], c["seed"],
                      c["chosen_index"])
    st = doc["standardization"]
    return ModelFit(
        feature_ids=tuple(doc["feature_ids"]),
        coefficients=np.asarray(doc["coefficients"], dtype=float),
        intercept=float(doc["intercept"]),
        selected_features=tuple(doc["selected_features"]),
        weight_profile=profile, weights=weights,
        chosen_lambda=float(doc["chosen_lambda"]), alpha=float(doc["alpha"]), params=params,
        method=doc["method"], std_coefficients=np.asarray(st["std_coefficients"], dtype=float),
        column_means=np.asarray(st["column_means"], dtype=float),
        column_scales=np.asarray(st["column_scales"], dtype=float),
        response_mean=float(st["response_mean"]), cv=cv,
        readapt_rounds=int(doc.get("readapt_rounds", 1)))


def save_model(model: ModelFit, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")


def load_model(path) -> ModelFit:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
