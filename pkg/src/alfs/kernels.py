"""Matrix norms, shrinkage operators, and angular reconstruction weights.

Pure functions on immutable inputs; every other module composes these.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset

DEFAULT_VARSIGMA = 1e-8


@dataclass(frozen=True)
class AngularWeights:
    """Symmetric n x n penalty weights between sample pairs.

    Entry (i, j) is ``1 / (|cos theta_ij| + varsigma)`` where ``theta_ij`` is
    the angle between sample columns i and j: near-collinear samples (which
    can reconstruct each other) get weight ~1, near-orthogonal ones get a
    weight up to ``1/varsigma``.
    """

    t: np.ndarray
    varsigma: float


def _require_finite(m: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{what} contains non-finite entries")
    return m


def l21_norm(m: np.ndarray) -> float:
    """Sum of the Euclidean norms of the rows (row-sparsity-inducing norm)."""
    m = _require_finite(m, "l21_norm input")
    return float(np.sqrt((m * m).sum(axis=1)).sum())


def nuclear_norm(m: np.ndarray) -> float:
    """Sum of singular values (convex surrogate for rank)."""
    m = _require_finite(m, "nuclear_norm input")
    return float(np.linalg.svd(m, compute_uv=False).sum())


def soft_threshold(k: np.ndarray, mu) -> np.ndarray:
    """Entrywise shrinkage ``max(|k| - mu, 0) * sign(k)``.

    ``mu`` may be a nonnegative scalar or a matrix of per-entry thresholds of
    the same shape (the weighted case needs per-entry values).
    """
    k = _require_finite(k, "soft_threshold input")
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise ValueError("soft_threshold requires nonnegative thresholds")
    if mu.ndim > 0 and mu.shape != k.shape:
        raise ValueError(
            f"threshold shape {mu.shape} does not match input shape {k.shape}"
        )
    return np.sign(k) * np.maximum(np.abs(k) - mu, 0.0)


def svt(k: np.ndarray, mu: float) -> np.ndarray:
    """Singular value thresholding: soft-threshold the spectrum of ``k``.

    Computes the thin SVD ``k = U diag(s) Vt`` and returns
    ``U diag(max(s - mu, 0)) Vt``, the proximal map of ``mu * ||.||_*``.
    """
    k = _require_finite(k, "svt input")
    if mu < 0:
        raise ValueError("svt requires a nonnegative threshold")
    u, s, vt = np.linalg.svd(k, full_matrices=False)
    s = np.maximum(s - mu, 0.0)
    return (u * s) @ vt


def angular_weights(ds: Dataset, varsigma: float = DEFAULT_VARSIGMA) -> AngularWeights:
    """Pairwise weights ``1 / (|cos theta_ij| + varsigma)`` between samples.

    The floor ``varsigma`` is applied in every entry, which keeps the map
    continuous in the data and caps the weight of orthogonal pairs at
    ``1/varsigma``. Zero columns have no direction and are rejected.
    """
    if varsigma <= 0:
        raise ValueError("varsigma must be positive")
    x = ds.matrix
    norms = np.linalg.norm(x, axis=0)
    zero = np.where(norms == 0.0)[0]
    if zero.size:
        raise ValueError(
            f"angular weights undefined: zero column(s) at {zero.tolist()}"
        )
    cos = (x.T @ x) / np.outer(norms, norms)
    np.clip(cos, -1.0, 1.0, out=cos)
    t = 1.0 / (np.abs(cos) + varsigma)
    t = 0.5 * (t + t.T)  # exact symmetry despite rounding
    t.setflags(write=False)
    return AngularWeights(t=t, varsigma=float(varsigma))
