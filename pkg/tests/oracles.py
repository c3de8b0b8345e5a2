"""Independent reference implementations used only by the tests.

These share no code with the package: information quantities are summed
cell by cell from Counters, and solver references are either closed forms,
normal equations, scikit-learn, or direct minimization.
"""
from __future__ import annotations

import math
from collections import Counter

import numpy as np


def brute_entropy(v):
    n = len(v)
    return -sum((c / n) * math.log2(c / n) for c in Counter(v).values())


def brute_mi(a, b):
    n = len(a)
    pab = Counter(zip(a, b))
    pa, pb = Counter(a), Counter(b)
    total = 0.0
    for (x, y), c in pab.items():
        total += (c / n) * math.log2((c / n) / ((pa[x] / n) * (pb[y] / n)))
    return total


def brute_cmi(a, b, z):
    """Sum p(x,y,z) log2[p(z) p(x,y,z) / (p(x,z) p(y,z))] over observed cells."""
    n = len(a)
    pxyz = Counter(zip(a, b, z))
    pxz = Counter(zip(a, z))
    pyz = Counter(zip(b, z))
    pz = Counter(z)
    total = 0.0
    for (x, y, s), c in pxyz.items():
        total += (c / n) * math.log2((pz[s] * c) / (pxz[(x, s)] * pyz[(y, s)]))
    return total


def brute_significance(codes, labels, exclude_self=False):
    """Loop over every (k, j) pair with the scalar Counter-based CMI."""
    codes = np.asarray(codes)
    p = codes.shape[1]
    y = [int(v) for v in labels]
    cols = [[int(v) for v in codes[:, k]] for k in range(p)]
    s = np.zeros(p)
    for k in range(p):
        acc = 0.0
        for j in range(p):
            if exclude_self and j == k:
                continue
            acc += brute_cmi(cols[k], cols[j], y)
        s[k] = acc / (p - 1)
    return s


def objective(X, r, beta, lam, alpha, w):
    n = X.shape[0]
    resid = r - X @ beta
    return (resid @ resid / (2 * n)
            + lam * (alpha * np.sum(w * np.abs(beta)) + 0.5 * (1 - alpha) * np.sum(w * beta ** 2)))


def grid_then_compass(X, r, lam, alpha, w, *, box=3.0, step=0.01, max_points=400_000,
                      final_step=1e-10):
    """Exhaustive grid over [-box, box]^p, then compass search from the best point.

    The grid uses ``step`` when that needs at most ``max_points`` points and
    otherwise the finest uniform grid within that budget.  Compass search
    halves its step down to ``final_step`` and also tries setting each
    coordinate to exactly zero, so kinks at the origin are reachable.
    """
    p = X.shape[1]
    literal = int(round(2 * box / step)) + 1
    per_axis = literal if literal ** p <= max_points else max(3, int(max_points ** (1.0 / p)))
    axis = np.linspace(-box, box, per_axis)
    best, best_val = None, np.inf
    total = per_axis ** p
    powers = per_axis ** np.arange(p)
    for start in range(0, total, 65_536):
        k = np.arange(start, min(start + 65_536, total))
        B = axis[(k[:, None] // powers[None, :]) % per_axis]
        best, best_val = _best_of(B, X, r, lam, alpha, w, best, best_val)
    theta = best.copy()
    val = best_val
    step = axis[1] - axis[0]
    while step > final_step:
        improved = False
        for j in range(p):
            for cand_val in (theta[j] + step, theta[j] - step, 0.0):
                cand = theta.copy()
                cand[j] = cand_val
                f = objective(X, r, cand, lam, alpha, w)
                if f < val - 1e-16:
                    theta, val, improved = cand, f, True
        if not improved:
            step /= 2
    return theta, val


def _best_of(B, X, r, lam, alpha, w, best, best_val):
    n = X.shape[0]
    R = r[None, :] - B @ X.T
    vals = (np.einsum("ij,ij->i", R, R) / (2 * n)
            + lam * (alpha * np.abs(B) @ w + 0.5 * (1 - alpha) * (B ** 2) @ w))
    i = int(np.argmin(vals))
    if vals[i] < best_val:
        return B[i].copy(), float(vals[i])
    return best, best_val


def standardized_problem(rng, n, p):
    X = rng.standard_normal((n, p))
    X -= X.mean(axis=0)
    X /= np.sqrt((X ** 2).mean(axis=0))
    r = X @ rng.standard_normal(p) + rng.standard_normal(n)
    r -= r.mean()
    return X, r
