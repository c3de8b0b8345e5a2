"""Acceptance gate: one test, and one printed verdict line, per criterion.

Criteria 5-7 need the public colon and leukemia matrices.  Point
``AENCMI_DATA_DIR`` at a directory holding ``colon.csv``,
``colon_labels.csv``, ``leukemia.csv`` and ``leukemia_labels.csv`` to run
them; without the files they are reported as BLOCKED and skipped.
``AENCMI_THREADS`` sets the worker count for those runs.
"""
import json
import math
import os
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aencmi.cli import main
from aencmi.dataset import load_csv, write_csv
from aencmi.experiment import run_protocol
from aencmi.infotheory import (conditional_entropy, conditional_mutual_information, entropy,
                               mutual_information)
from aencmi.model import FitParams
from aencmi.solver import SolverConfig, check_kkt, fit, grouping_audit, lambda_max
from aencmi.synthetic import planted_signal
from oracles import brute_entropy, grid_then_compass, standardized_problem

TOL_INFO = 1e-10


# --- 1 -------------------------------------------------------------------

def test_criterion_1_solver_matches_grid_oracle(acceptance):
    rng = np.random.default_rng(20240601)
    start = time.perf_counter()
    worst_gap = worst_kkt = 0.0
    failures = []
    for i in range(50):
        n, p = int(rng.integers(5, 21)), int(rng.integers(1, 6))
        X, r = standardized_problem(rng, n, p)
        alpha = float(rng.choice([0.05, 0.5, 1.0]))
        w = rng.uniform(0.2, 5.0, p)
        lam = float(rng.uniform(0.05, 0.9)) * lambda_max(X, r, alpha, w)
        cfg = SolverConfig(alpha, lam, w, 1e-10, 100_000)
        ours = fit(X, r, cfg)
        _, oracle = grid_then_compass(X, r, lam, alpha, w)
        gap = abs(ours.objective_value - oracle)
        kkt = check_kkt(X, r, cfg, ours.beta)
        worst_gap, worst_kkt = max(worst_gap, gap), max(worst_kkt, kkt)
        if gap > 1e-4 or kkt > 1e-6:
            failures.append(i)
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 60
    acceptance(1, "solver oracle equivalence", "PASS" if ok else "FAIL",
               f"50 instances, max |J_cd - J_oracle| = {worst_gap:.2e} (tol 1e-4), "
               f"max KKT = {worst_kkt:.2e} (tol 1e-6), {elapsed:.1f}s (limit 60s), failing {failures}")
    assert ok


# --- 2 -------------------------------------------------------------------

def test_criterion_2_reduction_identities(acceptance):
    from sklearn.linear_model import ElasticNet, Lasso

    rng = np.random.default_rng(7)
    start = time.perf_counter()
    enet_dev = lasso_dev = 0.0
    for _ in range(20):
        n, p = int(rng.integers(10, 40)), int(rng.integers(2, 12))
        X, r = standardized_problem(rng, n, p)
        alpha = float(rng.uniform(0.05, 0.95))
        lam = float(rng.uniform(0.05, 0.8)) * lambda_max(X, r, alpha, np.ones(p))
        ours = fit(X, r, SolverConfig(alpha, lam, np.ones(p), 1e-13, 1_000_000)).beta
        ref = ElasticNet(alpha=lam, l1_ratio=alpha, fit_intercept=False, tol=1e-15,
                         max_iter=1_000_000).fit(X, r).coef_
        enet_dev = max(enet_dev, float(np.max(np.abs(ours - ref))))

        w = rng.uniform(0.2, 5.0, p)
        lam = float(rng.uniform(0.05, 0.8)) * lambda_max(X, r, 1.0, w)
        ours = fit(X, r, SolverConfig(1.0, lam, w, 1e-13, 1_000_000)).beta
        # weighted lasso as a plain lasso in gamma = w * theta on columns x_j / w_j
        gamma = Lasso(alpha=lam, fit_intercept=False, tol=1e-15, max_iter=1_000_000).fit(X / w, r).coef_
        lasso_dev = max(lasso_dev, float(np.max(np.abs(ours - gamma / w))))
    elapsed = time.perf_counter() - start
    ok = enet_dev <= 1e-8 and lasso_dev <= 1e-8
    acceptance(2, "reduction identities", "PASS" if ok else "FAIL",
               f"unit weights vs independent elastic net max |dtheta| = {enet_dev:.2e}; "
               f"alpha=1 vs independent weighted lasso max |dtheta| = {lasso_dev:.2e} "
               f"(tol 1e-8, 20 instances each), {elapsed:.1f}s")
    assert ok


# --- 3 -------------------------------------------------------------------

triples = st.integers(1, 50).flatmap(lambda n: st.tuples(
    *(st.lists(st.integers(0, k), min_size=n, max_size=n) for k in (4, 3, 2))))


@st.composite
def factorized(draw):
    """Count tables that are exactly p(a|z) p(b|z) within every stratum z."""
    a_vals, b_vals, z_vals = [], [], []
    for z in range(draw(st.integers(1, 3))):
        u = draw(st.lists(st.integers(0, 3), min_size=1, max_size=4).filter(any))
        v = draw(st.lists(st.integers(0, 3), min_size=1, max_size=4).filter(any))
        for i, ui in enumerate(u):
            for j, vj in enumerate(v):
                a_vals += [i] * (ui * vj)
                b_vals += [j] * (ui * vj)
                z_vals += [z] * (ui * vj)
    return a_vals, b_vals, z_vals


PROPERTY_CASES = dict(max_examples=1000, derandomize=True, deadline=None)
_info_worst = Counter()


@settings(**PROPERTY_CASES)
@given(triples)
def _nonnegativity(abz):
    a, b, z = abz
    low = min(entropy(a), mutual_information(a, b), conditional_mutual_information(a, b, z))
    _info_worst["nonnegativity"] = max(_info_worst["nonnegativity"], max(0.0, -low))
    assert low >= -TOL_INFO


@settings(**PROPERTY_CASES)
@given(triples)
def _symmetry(abz):
    a, b, z = abz
    d = max(abs(mutual_information(a, b) - mutual_information(b, a)),
            abs(conditional_mutual_information(a, b, z) - conditional_mutual_information(b, a, z)))
    _info_worst["symmetry"] = max(_info_worst["symmetry"], d)
    assert d <= TOL_INFO


@settings(**PROPERTY_CASES)
@given(triples)
def _self_information(abz):
    a, _, z = abz
    d = abs(conditional_mutual_information(a, a, z) - conditional_entropy(a, z))
    _info_worst["self"] = max(_info_worst["self"], d)
    assert d <= TOL_INFO


@settings(**PROPERTY_CASES)
@given(triples)
def _chain_rule(abz):
    a, b, z = abz
    # H(a|z) - H(a|b,z) from joint entropies of the tuples, counted independently
    h_a_given_z = brute_entropy(list(zip(a, z))) - brute_entropy(z)
    h_a_given_bz = brute_entropy(list(zip(a, b, z))) - brute_entropy(list(zip(b, z)))
    d = abs(conditional_mutual_information(a, b, z) - (h_a_given_z - h_a_given_bz))
    _info_worst["chain"] = max(_info_worst["chain"], d)
    assert d <= TOL_INFO


@settings(**PROPERTY_CASES)
@given(factorized())
def _factorized_zero(abz):
    a, b, z = abz
    d = abs(conditional_mutual_information(a, b, z))
    _info_worst["factorized"] = max(_info_worst["factorized"], d)
    assert d <= TOL_INFO


def test_criterion_3_information_theory_suite(acceptance):
    start = time.perf_counter()
    failed = []
    for name, prop in [("nonnegativity", _nonnegativity), ("symmetry", _symmetry),
                       ("self", _self_information), ("chain", _chain_rule),
                       ("factorized", _factorized_zero)]:
        try:
            prop()
        except AssertionError:
            failed.append(name)
    elapsed = time.perf_counter() - start
    worst = ", ".join(f"{k} {v:.1e}" for k, v in sorted(_info_worst.items()))
    acceptance(3, "information-theory properties", "FAIL" if failed else "PASS",
               f"5 properties x 1000 cases, worst deviations: {worst} (tol 1e-10), "
               f"{elapsed:.1f}s, failing {failed}")
    assert not failed


# --- 4 -------------------------------------------------------------------

def test_criterion_4_grouping_audit(acceptance):
    rng = np.random.default_rng(99)
    start = time.perf_counter()
    fits = pairs = bound_viol = 0
    worst_identity = worst_ratio = worst_dup = 0.0
    dup_cases = 0
    while fits < 100:
        n, p = int(rng.integers(15, 40)), int(rng.integers(3, 12))
        # correlated columns so the bound is exercised away from rho = 0
        Z = rng.standard_normal((n, p)) + rng.uniform(0, 2) * rng.standard_normal((n, 1))
        dup = fits % 4 == 0
        if dup:
            Z = np.column_stack([Z, Z[:, 0]])
        X = (Z - Z.mean(0)) / np.sqrt(((Z - Z.mean(0)) ** 2).mean(0))
        r = X[:, : min(3, p)].sum(axis=1) + rng.standard_normal(n)
        r -= r.mean()
        w = rng.uniform(0.2, 5.0, X.shape[1])
        if dup:
            w[-1] = w[0]
        alpha = float(rng.uniform(0.01, 0.95))
        lam = float(rng.uniform(0.02, 0.7)) * lambda_max(X, r, alpha, w)
        res = fit(X, r, SolverConfig(alpha, lam, w, 1e-13, 1_000_000))
        if not res.converged:
            continue
        fits += 1
        audit = grouping_audit(res.beta, X, r, w, lam, alpha)
        pairs += audit.n_pairs
        bound_viol += audit.bound_violations
        worst_identity = max(worst_identity, audit.max_identity_residual)
        worst_ratio = max(worst_ratio, audit.max_bound_ratio)
        if dup and res.beta[0] != 0:
            dup_cases += 1
            worst_dup = max(worst_dup, abs(res.beta[0] - res.beta[-1]))
    elapsed = time.perf_counter() - start
    ok = worst_identity <= 1e-8 and bound_viol == 0 and worst_dup <= 1e-8 and dup_cases > 0 and elapsed < 60
    acceptance(4, "grouping audit", "PASS" if ok else "FAIL",
               f"100 fits, {pairs} same-sign pairs, max identity residual {worst_identity:.2e} (tol 1e-8), "
               f"{bound_viol} bound violations (max |dtheta|/bound {worst_ratio:.3f}), "
               f"duplicated columns max |dtheta| {worst_dup:.2e} over {dup_cases} cases, {elapsed:.1f}s")
    assert ok


# --- 5, 6, 7: real data --------------------------------------------------

DATA_DIR = os.environ.get("AENCMI_DATA_DIR")
THREADS = int(os.environ.get("AENCMI_THREADS", os.cpu_count() or 1))
_runs = {}


def _dataset(name):
    if not DATA_DIR:
        return None
    m, l = Path(DATA_DIR) / f"{name}.csv", Path(DATA_DIR) / f"{name}_labels.csv"
    return load_csv(m, l) if m.exists() and l.exists() else None


def _run(name, method):
    key = (name, method)
    if key not in _runs:
        ds = _dataset(name)
        split = dict(split_fraction=0.5) if name == "colon" else dict(split_fraction=None, train_size=43)
        _runs[key] = run_protocol(ds, method, 10, hyper=FitParams(), base_seed=0, threads=THREADS, **split)
    return _runs[key]


def _blocked(acceptance, number, title, names):
    missing = [n for n in names if _dataset(n) is None]
    if missing:
        reason = f"BLOCKED: dataset not present ({', '.join(missing)}); set AENCMI_DATA_DIR"
        acceptance(number, title, "SKIP", reason)
        pytest.skip(reason)


def _band(rep, acc_target, genes_target):
    return abs(rep.accuracy_mean - acc_target) <= 0.07 and abs(rep.genes_mean - genes_target) <= 10


def test_criterion_5_colon(acceptance):
    _blocked(acceptance, 5, "colon reproduction", ["colon"])
    start = time.perf_counter()
    rep = _run("colon", "aen_cmi")
    ok = _band(rep, 0.8512, 24.43)
    acceptance(5, "colon reproduction", "PASS" if ok else "FAIL",
               f"accuracy {rep.accuracy_mean:.4f} ({rep.accuracy_sd:.3f}) vs 0.8512 +/- 0.07; "
               f"genes {rep.genes_mean:.2f} ({rep.genes_sd:.2f}) vs 24.43 +/- 10; "
               f"{time.perf_counter() - start:.0f}s")
    assert ok


def test_criterion_6_leukemia(acceptance):
    _blocked(acceptance, 6, "leukemia reproduction", ["leukemia"])
    start = time.perf_counter()
    rep = _run("leukemia", "aen_cmi")
    in_band = _band(rep, 0.8398, 23.43)
    detail = (f"accuracy {rep.accuracy_mean:.4f} vs 0.8398 +/- 0.07; genes {rep.genes_mean:.2f} "
              f"vs 23.43 +/- 10")
    ok = in_band
    if not in_band:
        enet = _run("leukemia", "elastic_net")
        ok = rep.accuracy_mean > enet.accuracy_mean and rep.genes_mean < enet.genes_mean
        detail += (f"; band missed, fallback dominance over elastic net "
                   f"(accuracy {enet.accuracy_mean:.4f}, genes {enet.genes_mean:.2f}): {ok}")
    acceptance(6, "leukemia reproduction", "PASS" if ok else "FAIL",
               f"{detail}; {time.perf_counter() - start:.0f}s")
    assert ok


def _ordering_ok(values, sds, higher_is_better):
    """At most one adjacent inversion overall, and it must be within one sd."""
    inversions = []
    for ds_vals, ds_sds in zip(values, sds):
        for k in range(2):
            better, worse = ds_vals[k], ds_vals[k + 1]
            diff = (worse - better) if higher_is_better else (better - worse)
            if diff > 0:
                inversions.append(diff <= max(ds_sds[k], ds_sds[k + 1]))
    return len(inversions) <= 1 and all(inversions), len(inversions)


def test_criterion_7_ordering(acceptance):
    _blocked(acceptance, 7, "method ordering", ["colon", "leukemia"])
    order = ("aen_cmi", "aen_ridge_free", "elastic_net")
    acc, acc_sd, genes, genes_sd = [], [], [], []
    for name in ("colon", "leukemia"):
        reps = [_run(name, m) for m in order]
        acc.append([r.accuracy_mean for r in reps])
        acc_sd.append([r.accuracy_sd for r in reps])
        genes.append([r.genes_mean for r in reps])
        genes_sd.append([r.genes_sd for r in reps])
    acc_ok, acc_inv = _ordering_ok(acc, acc_sd, True)
    gene_ok, gene_inv = _ordering_ok(genes, genes_sd, False)
    ok = acc_ok and gene_ok
    acceptance(7, "method ordering", "PASS" if ok else "FAIL",
               f"accuracy {acc} ({acc_inv} inversions), genes {genes} ({gene_inv} inversions)")
    assert ok


# --- 8 -------------------------------------------------------------------

def test_criterion_8_determinism(acceptance, tmp_path):
    write_csv(planted_signal(n=40, p=15, frac_ones=0.4, seed=3), tmp_path / "m.csv", tmp_path / "l.csv")
    base = ["evaluate", "--matrix", str(tmp_path / "m.csv"), "--labels", str(tmp_path / "l.csv"),
            "--repeats", "4", "--folds", "5", "--n-lambda", "40", "--seed", "11"]
    outputs = ("report.json", "report.csv", "selection_frequency.csv")
    runs = {"threads1": ["--threads", "1"], "threads2": ["--threads", "2"], "threads1_again": ["--threads", "1"]}
    for name, extra in runs.items():
        assert main(base + extra + ["--out", str(tmp_path / name)]) == 0
    # regenerate once more from the first run's manifest alone
    argv = json.loads((tmp_path / "threads1" / "run_manifest.json").read_text())["argv"]
    argv[argv.index("--out") + 1] = str(tmp_path / "from_manifest")
    assert main(argv) == 0
    reference = {f: (tmp_path / "threads1" / f).read_bytes() for f in outputs}
    mismatched = [(d, f) for d in ("threads2", "threads1_again", "from_manifest") for f in outputs
                  if (tmp_path / d / f).read_bytes() != reference[f]]
    ok = not mismatched
    acceptance(8, "determinism", "PASS" if ok else "FAIL",
               f"evaluate outputs byte-identical across threads 1/2, a rerun and a manifest replay "
               f"({len(outputs)} files x 3 comparisons), mismatches {mismatched}")
    assert ok
    assert math.isfinite(json.loads(reference["report.json"])["accuracy_mean"])
