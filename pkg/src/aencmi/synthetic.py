"""Synthetic expression datasets with known structure, for tests and demos."""
from __future__ import annotations

import numpy as np

from .dataset import ExpressionDataset


def _labels(rng, n, frac_ones):
    n1 = int(round(frac_ones * n))
    labels = np.r_[np.zeros(n - n1, dtype=np.int64), np.ones(n1, dtype=np.int64)]
    return labels[rng.permutation(n)]


def planted_signal(n: int = 40, p: int = 20, n_informative: int = 2, shift: float = 1.5,
                   shared: float = 1.0, noise: float = 0.5, frac_ones: float = 0.5,
                   seed: int = 0) -> ExpressionDataset:
    """Informative features = class shift + a shared latent factor + noise.

    The shared factor makes the informative features correlated within each
    class, so they carry class-conditional information about one another;
    the remaining ``p - n_informative`` features are independent standard
    normals.  Informative features come first (``g0``, ``g1``, ...).
    """
    rng = np.random.default_rng(seed)
    labels = _labels(rng, n, frac_ones)
    X = rng.standard_normal((n, p))
    latent = rng.standard_normal(n)
    signed = 2.0 * labels - 1.0
    for j in range(n_informative):
        X[:, j] = shift * signed + shared * latent + noise * rng.standard_normal(n)
    return _wrap(X, labels)


def null_model(n: int = 40, p: int = 20, frac_ones: float = 0.5, seed: int = 0) -> ExpressionDataset:
    """Features independent of labels."""
    rng = np.random.default_rng(seed)
    labels = _labels(rng, n, frac_ones)
    return _wrap(rng.standard_normal((n, p)), labels)


def microarray_like(n: int = 62, p: int = 2000, n_informative: int = 20, frac_ones: float = 40 / 62,
                    n_modules: int = 4, seed: int = 0) -> ExpressionDataset:
    """Log-normal intensities with a few co-regulated informative modules.

    Shapes default to the colon study (62 x 2000, 22 vs 40 samples).
    """
    rng = np.random.default_rng(seed)
    labels = _labels(rng, n, frac_ones)
    signed = 2.0 * labels - 1.0
    Z = rng.standard_normal((n, p))
    for m, block in enumerate(np.array_split(np.arange(n_informative), n_modules)):
        latent = rng.standard_normal(n)
        amp = 0.6 + 0.2 * m
        Z[:, block] = (amp * signed[:, None] + 0.8 * latent[:, None]
                       + 0.6 * rng.standard_normal((n, block.size)))
    values = np.exp(5.0 + 0.8 * Z)
    return _wrap(values, labels)


def _wrap(X, labels) -> ExpressionDataset:
    n, p = X.shape
    return ExpressionDataset(X, tuple(f"g{j}" for j in range(p)),
                             tuple(f"s{i}" for i in range(n)), labels)
