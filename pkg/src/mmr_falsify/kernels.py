"""Kernels on covariate space and Gram-matrix assembly.

The default is the cubic polynomial kernel ``(<x, x'>/d + 1)^3`` on
z-scored covariates. It is not integrally strictly positive definite (its
feature space is finite-dimensional), so a null MMR does not strictly
imply the conditional moment restriction; ``rbf`` and ``laplacian`` are the
ISPD alternatives.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.spatial.distance import cdist, pdist

KernelKind = Literal["polynomial", "rbf", "laplacian"]

_BLOCK = 1024


@dataclass(frozen=True)
class KernelSpec:
    """``scale=None`` resolves to ``1/d`` at evaluation time."""

    kind: KernelKind = "polynomial"
    degree: int = 3
    scale: float | None = None
    offset: float = 1.0

    def __post_init__(self):
        if self.kind not in ("polynomial", "rbf", "laplacian"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.scale is not None and not self.scale > 0:
            raise ValueError("scale must be > 0")

    def resolved_scale(self, d: int) -> float:
        return float(self.scale) if self.scale is not None else 1.0 / max(d, 1)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "degree": self.degree, "scale": self.scale, "offset": self.offset}

    @classmethod
    def from_dict(cls, d: dict | None) -> "KernelSpec":
        return cls(**(d or {}))


def median_heuristic(X: np.ndarray, kind: KernelKind = "rbf", max_points: int = 2000, seed: int = 0) -> KernelSpec:
    """Kernel spec with ``scale = 1 / (2 * median^2)`` of pairwise distances.

    Distances are Euclidean for ``rbf`` and L1 for ``laplacian``; at most
    ``max_points`` rows (a seeded subsample) enter the median.
    """
    if kind == "polynomial":
        raise ValueError("the median heuristic applies to rbf/laplacian kernels only")
    X = np.asarray(X, dtype=float)
    if X.shape[0] > max_points:
        X = X[np.random.default_rng(seed).choice(X.shape[0], max_points, replace=False)]
    med = np.median(pdist(X, "euclidean" if kind == "rbf" else "cityblock"))
    if med <= 0:
        raise ValueError("median pairwise distance is zero")
    return KernelSpec(kind, scale=1.0 / (2.0 * med**2))


def standardize(X: np.ndarray, reference: np.ndarray | None = None):
    """Column z-scores of ``X`` using the mean/sd of ``reference`` (default ``X``).

    Zero-variance columns are centred but not scaled.
    """
    X = np.asarray(X, dtype=float)
    ref = X if reference is None else np.asarray(reference, dtype=float)
    mu = ref.mean(axis=0)
    sd = ref.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (X - mu) / sd


def kernel_eval(spec: KernelSpec, x, x_prime) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(x_prime, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    g = spec.resolved_scale(x.shape[0])
    if spec.kind == "polynomial":
        return float((g * np.dot(x, y) + spec.offset) ** spec.degree)
    if spec.kind == "rbf":
        return float(np.exp(-g * np.sum((x - y) ** 2)))
    return float(np.exp(-g * np.sum(np.abs(x - y))))


def _block(spec: KernelSpec, A: np.ndarray, B: np.ndarray, g: float) -> np.ndarray:
    if spec.kind == "polynomial":
        out = A @ B.T
        out *= g
        out += spec.offset
        return np.power(out, spec.degree, out=out)
    metric = "sqeuclidean" if spec.kind == "rbf" else "cityblock"
    out = cdist(A, B, metric)
    out *= -g
    return np.exp(out, out=out)


def cross_gram(spec: KernelSpec, X: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """``K[i, j] = k(X[i], Q[j])``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if X.shape[1] != Q.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Q.shape[1]}")
    return _block(spec, X, Q, spec.resolved_scale(X.shape[1]))


def gram_matrix(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    """Symmetric ``n x n`` Gram matrix, assembled by row blocks.

    Only the upper block triangle is computed; the lower one is mirrored, so
    the result equals its transpose exactly.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    g = spec.resolved_scale(d)
    K = np.empty((n, n))
    for i0 in range(0, n, _BLOCK):
        i1 = min(i0 + _BLOCK, n)
        blk = _block(spec, X[i0:i1], X[i0:], g)
        K[i0:i1, i0:] = blk
        # the diagonal block must itself be symmetric before mirroring
        diag = K[i0:i1, i0:i1]
        diag[np.tril_indices(i1 - i0, -1)] = diag.T[np.tril_indices(i1 - i0, -1)]
        K[i1:, i0:i1] = K[i0:i1, i1:].T
    return K
