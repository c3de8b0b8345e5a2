"""Command-line front end.

Every subcommand writes its outputs plus a ``run_manifest.json`` into
``--out``.  The manifest holds the exact argument vector, the resolved
configuration and SHA-256 digests of the inputs, so rerunning
``aencmi <manifest argv>`` regenerates the outputs byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import DatasetError, load_csv, random_split, read_matrix_csv, standardize
from .experiment import (METHODS, emit_error_curve, emit_path, load_annotations, read_report,
                         run_protocol, selection_frequency_table, write_frequency_table,
                         write_report)
from .model import (CV_SEED_OFFSET, CmiWeights, FitParams, UnitWeights, classify, cross_validate,
                    fit_model, load_model, predict_score, save_model)
from .solver import SolverConfig, fit, fit_path

def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _at_least_two(text):
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError("must be at least 2")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _unit_interval(text):
    value = float(text)
    if not 0 <= value <= 1:
        raise argparse.ArgumentTypeError("must lie in [0, 1]")
    return value


def _open_fraction(text):
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return value


def _add_data(p, labels_required=True):
    p.add_argument("--matrix", required=True, help="samples x features CSV")
    p.add_argument("--labels", required=labels_required, help="sample_id,label CSV")


def _add_hyper(p):
    d = FitParams()
    g = p.add_argument_group("model")
    g.add_argument("--alpha", type=_unit_interval, default=d.alpha,
                   help="L1 share of the penalty (default %(default)s)")
    g.add_argument("--delta", type=_positive_float, default=d.delta,
                   help="offset in w = 1/(s + delta) (default %(default)s)")
    g.add_argument("--bins", type=_at_least_two, default=d.bins,
                   help="equal-frequency bins per feature (default %(default)s)")
    g.add_argument("--exclude-self", action="store_true",
                   help="drop the j = k term from the significance sum")
    g.add_argument("--readapt", type=_positive_int, default=d.readapt,
                   help="rounds of weight re-estimation on the previous support")
    g.add_argument("--folds", type=_at_least_two, default=d.folds, help="CV folds (default %(default)s)")
    g.add_argument("--n-lambda", type=_at_least_two, default=d.n_lambda)
    g.add_argument("--lambda-min-ratio", type=_open_fraction, default=d.lambda_min_ratio)
    g.add_argument("--tol", type=_positive_float, default=d.tol)
    g.add_argument("--max-sweeps", type=_positive_int, default=d.max_sweeps)
    g.add_argument("--seed", type=int, default=0, help="single source of randomness")


def _add_split(p, default_fraction=None):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--train-fraction", type=_open_fraction, default=default_fraction,
                   help="stratified training share (default: all samples)"
                   if default_fraction is None else "stratified training share (default %(default)s)")
    g.add_argument("--train-size", type=int, help="exact number of training samples")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aencmi",
        description="Adaptive elastic net with conditional-mutual-information penalty weights.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="weights, CV and final fit; writes model.json")
    _add_data(p)
    _add_hyper(p)
    _add_split(p)
    p.add_argument("--method", choices=("aen_cmi", "elastic_net"), default="aen_cmi")
    p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("cv", help="cross-validated error curve")
    _add_data(p)
    _add_hyper(p)
    _add_split(p)
    p.add_argument("--method", choices=("aen_cmi", "elastic_net"), default="aen_cmi")
    p.add_argument("--out", default=".")

    p = sub.add_parser("path", help="coefficient path (lambda,feature_id,coefficient)")
    _add_data(p)
    _add_hyper(p)
    _add_split(p)
    p.add_argument("--method", choices=("aen_cmi", "elastic_net"), default="aen_cmi")
    p.add_argument("--lambda", dest="lam", type=float,
                   help="fit this single lambda instead of the whole grid")
    p.add_argument("--all-features", action="store_true",
                   help="also write features that stay zero along the path")
    p.add_argument("--out", default=".")

    p = sub.add_parser("predict", help="score samples with a saved model")
    _add_data(p, labels_required=False)
    p.add_argument("--model", required=True)
    p.add_argument("--out", default=".")

    p = sub.add_parser("evaluate", help="repeated random-split evaluation")
    _add_data(p)
    _add_hyper(p)
    _add_split(p, default_fraction=0.5)
    p.add_argument("--method", choices=METHODS, default="aen_cmi")
    p.add_argument("--repeats", type=_positive_int, default=10)
    p.add_argument("--threads", type=_positive_int, default=1, help="worker processes")
    p.add_argument("--annotations", help="feature_id,accession,description CSV")
    p.add_argument("--out", default=".")

    p = sub.add_parser("rank", help="selection-frequency table from a report")
    p.add_argument("--report", required=True, help="report.json from evaluate")
    p.add_argument("--annotations", help="feature_id,accession,description CSV")
    p.add_argument("--out", default=".")
    return parser


def _params(args) -> FitParams:
    return FitParams(alpha=args.alpha, delta=args.delta, bins=args.bins, folds=args.folds,
                     seed=args.seed, n_lambda=args.n_lambda,
                     lambda_min_ratio=args.lambda_min_ratio, tol=args.tol,
                     max_sweeps=args.max_sweeps, exclude_self=args.exclude_self,
                     readapt=args.readapt)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _train_subset(ds, args):
    if args.train_fraction is None and args.train_size is None:
        return np.arange(ds.n_samples)
    return random_split(ds, args.train_fraction, args.seed, train_size=args.train_size).train_indices


def _weights_for(method, params):
    if method == "elastic_net":
        return UnitWeights()
    return CmiWeights(params.bins, params.delta, params.exclude_self)


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def _cmd_fit(args, out, manifest):
    ds = load_csv(args.matrix, args.labels)
    params = _params(args)
    train = _train_subset(ds, args)
    # aen_cmi goes through the default scheme so --readapt takes effect
    scheme = UnitWeights() if args.method == "elastic_net" else None
    model = fit_model(ds, train, params, scheme, method=args.method)
    save_model(model, out / "model.json")
    emit_error_curve(model.cv, out / "cv_curve.csv")
    manifest["dataset_fingerprint"] = ds.fingerprint()
    print(f"selected {len(model.selected_features)} features at lambda={model.chosen_lambda:.6g}")


def _cmd_cv(args, out, manifest):
    ds = load_csv(args.matrix, args.labels)
    params = _params(args)
    train = _train_subset(ds, args)
    cv = cross_validate(ds, train, params.alpha, _weights_for(args.method, params), params.folds,
                        params.seed + CV_SEED_OFFSET, params=params)
    emit_error_curve(cv, out / "cv_curve.csv")
    _write_json(out / "cv.json", cv.to_dict())
    manifest["dataset_fingerprint"] = ds.fingerprint()
    print(f"chosen lambda={cv.chosen_lambda:.6g} "
          f"(mean misclassified {cv.mean_misclassified[cv.chosen_index]:.3g})")


def _cmd_path(args, out, manifest):
    ds = load_csv(args.matrix, args.labels)
    params = _params(args)
    train = _train_subset(ds, args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        view = standardize(ds, train)
    wres = _weights_for(args.method, params)(ds, train)
    w = getattr(wres, "weights", wres)[view.retained]
    ids = [ds.feature_ids[j] for j in view.retained]
    if args.lam is not None:
        cfg = SolverConfig(params.alpha, args.lam, w, params.tol, params.max_sweeps)
        coef = fit(view.values, view.response, cfg)
        with (out / "coefficients.csv").open("w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["lambda", "feature_id", "coefficient"])
            for j in np.flatnonzero(coef.beta):
                wr.writerow([repr(float(args.lam)), ids[j], repr(float(coef.beta[j]))])
        print(f"{coef.support.size} nonzero coefficients at lambda={args.lam:.6g}")
    else:
        path = fit_path(view.values, view.response, params.alpha, w, params.n_lambda,
                        params.lambda_min_ratio, params.tol, params.max_sweeps)
        emit_path(path, ids, out / "path.csv", only_active=not args.all_features)
        print(f"path over {path.lambdas.size} lambdas written")
    manifest["dataset_fingerprint"] = ds.fingerprint()


def _cmd_predict(args, out, manifest):
    model = load_model(args.model)
    values, feature_ids, sample_ids = read_matrix_csv(args.matrix)
    position = {f: j for j, f in enumerate(feature_ids)}
    missing = [f for f in model.feature_ids if f not in position]
    if missing:
        raise DatasetError(f"matrix lacks {len(missing)} model features, e.g. {missing[:3]}")
    X = values[:, [position[f] for f in model.feature_ids]]
    scores = predict_score(model, X)
    classes = classify(model, X)
    with (out / "predictions.csv").open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["sample_id", "score", "class"])
        for sid, s, c in zip(sample_ids, np.atleast_1d(scores), np.atleast_1d(classes)):
            wr.writerow([sid, repr(float(s)), int(c)])
    if args.labels:
        ds = load_csv(args.matrix, args.labels)
        acc = float(np.mean(np.atleast_1d(classes) == ds.labels))
        manifest["accuracy"] = acc
        print(f"accuracy {acc:.4f} on {ds.n_samples} samples")


def _cmd_evaluate(args, out, manifest):
    ds = load_csv(args.matrix, args.labels)
    params = _params(args)
    report = run_protocol(ds, args.method, args.repeats, args.train_fraction, params, args.seed,
                          train_size=args.train_size, threads=args.threads)
    write_report(report, out / "report.json", out / "report.csv")
    ann = load_annotations(args.annotations) if args.annotations else None
    write_frequency_table(selection_frequency_table(report, ann), out / "selection_frequency.csv")
    manifest["dataset_fingerprint"] = ds.fingerprint()
    sd_note = "" if report.sd_defined else " (single repeat: sd reported as 0)"
    print(f"{report.method}: accuracy {report.accuracy_mean:.4f} ({report.accuracy_sd:.3f}), "
          f"genes {report.genes_mean:.2f} ({report.genes_sd:.2f}){sd_note}")


def _cmd_rank(args, out, manifest):
    report = read_report(args.report)
    ann = load_annotations(args.annotations) if args.annotations else None
    rows = selection_frequency_table(report, ann)
    write_frequency_table(rows, out / "selection_frequency.csv")
    for row in rows[:20]:
        print(f"{row['feature_id']}\t{row['frequency']}")


_HANDLERS = {"fit": _cmd_fit, "cv": _cmd_cv, "path": _cmd_path, "predict": _cmd_predict,
             "evaluate": _cmd_evaluate, "rank": _cmd_rank}
_INPUT_ARGS = ("matrix", "labels", "model", "report", "annotations")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out = Path(args.out)
    config = {k: v for k, v in vars(args).items()}
    manifest = {
        "tool": "aencmi",
        "version": __version__,
        "numpy_version": np.__version__,
        "argv": argv,
        "command": args.command,
        "config": config,
        "inputs": {},
    }
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name in _INPUT_ARGS:
            path = getattr(args, name, None)
            if path:
                manifest["inputs"][name] = {"path": path, "sha256": _sha256(path)}
        if args.command != "rank" and hasattr(args, "alpha"):
            manifest["resolved_hyperparameters"] = asdict(_params(args))
        _HANDLERS[args.command](args, out, manifest)
    except (DatasetError, ValueError, OSError, KeyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    _write_json(out / "run_manifest.json", manifest)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
