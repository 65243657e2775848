"""Kernel maximum-moment-restriction test of ``E[psi | X] = 0``.

The statistic is the U-statistic

    M2 = 1/(n(n-1)) * sum_{i != j} psi_i K_ij psi_j

scaled by ``n``. Its null distribution is approximated with a multinomial
bootstrap on the centred weights ``(w - 1)/n``; nuisances stay fixed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from ._rng import SeedLike, child_seed, make_rng
from .data import CombinedDataset
from .kernels import KernelSpec, cross_gram, gram_matrix, standardize
from .nuisance import NuisanceEstimates
from .signals import SignalVector, absolute_signal, contrast_signal

DEFAULT_B = 100

TestMode = Literal["contrast", "absolute"]


class ZeroWitnessError(ValueError):
    """The witness is identically zero on the query grid, so it cannot be normalized."""


def _as_matrix(psi) -> np.ndarray:
    if isinstance(psi, SignalVector):
        return psi.as_matrix()
    a = np.asarray(psi, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _check_gram(K: np.ndarray, n: int) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.shape != (n, n):
        raise ValueError(f"Gram matrix has shape {K.shape}, expected ({n}, {n})")
    return K


def _ustat(P: np.ndarray, K: np.ndarray) -> tuple[float, float]:
    n = P.shape[0]
    if n < 2:
        raise ValueError(f"the U-statistic needs n >= 2, got {n}")
    K = _check_gram(K, n)
    total = float(np.sum(P * (K @ P)) - np.sum(np.diag(K)[:, None] * P * P))
    u = total / (n * (n - 1))
    return u, n * u


def mmr_statistic(psi, K: np.ndarray) -> tuple[float, float]:
    """``(M2, n * M2)`` for a scalar (contrast) signal; the diagonal is excluded."""
    P = _as_matrix(psi)
    if P.shape[1] != 1:
        raise ValueError("mmr_statistic takes a scalar signal; use mmr_statistic_vector")
    return _ustat(P, K)


def mmr_statistic_vector(psi_pair, K: np.ndarray) -> tuple[float, float]:
    """Same as :func:`mmr_statistic` with ``psi_i psi_j`` replaced by the inner product."""
    return _ustat(_as_matrix(psi_pair), K)


def bootstrap_weights(n: int, B: int, seed: SeedLike) -> np.ndarray:
    """``(n, B)`` multinomial counts; column ``k`` comes from its own substream."""
    W = np.empty((n, B))
    for k in range(B):
        W[:, k] = make_rng(child_seed(seed, k)).multinomial(n, np.full(n, 1.0 / n))
    return W


def bootstrap_null(psi, K: np.ndarray, B: int = DEFAULT_B, seed: SeedLike = 0, vector_mode: bool | None = None) -> np.ndarray:
    """Bootstrap replicates ``n * sum_{i != j} v_i K_ij v_j`` with ``v = (w - 1)/n * psi``.

    ``vector_mode`` is inferred from the signal shape when left as ``None``.
    """
    P = _as_matrix(psi)
    n, c = P.shape
    if n < 2:
        raise ValueError(f"the bootstrap needs n >= 2, got {n}")
    if B < 1:
        raise ValueError(f"need B >= 1 bootstrap draws, got {B}")
    if vector_mode is False and c != 1:
        raise ValueError("scalar bootstrap requested for a vector signal")
    return bootstrap_from_weights(P, K, bootstrap_weights(n, B, seed))


def bootstrap_from_weights(psi, K: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Bootstrap replicates for given ``(n, B)`` multinomial counts ``W``."""
    P = _as_matrix(psi)
    n, c = P.shape
    K = _check_gram(K, n)
    W = np.asarray(W, dtype=float).reshape(n, -1)
    C = (W - 1.0) / n
    out = np.zeros(W.shape[1])
    kdiag = np.diag(K)[:, None]
    for j in range(c):
        V = C * P[:, j : j + 1]
        out += np.sum(V * (K @ V), axis=0) - np.sum(kdiag * V * V, axis=0)
    return n * out


def p_value(statistic: float, boots) -> float:
    """``(#{k: statistic <= boot_k} + 1) / (B + 1)``."""
    boots = np.asarray(boots, dtype=float).ravel()
    if boots.size == 0:
        raise ValueError("no bootstrap samples")
    return float((np.sum(statistic <= boots) + 1) / (boots.size + 1))


@dataclass(frozen=True)
class MmrTestResult:
    statistic: float
    u_stat: float
    bootstrap_samples: np.ndarray
    p_value: float
    alpha: float
    reject: bool
    B: int
    seed: int | None
    kernel: dict = field(default_factory=dict)
    mode: str = "contrast"

    def to_dict(self, include_samples: bool = False) -> dict:
        d = {
            "statistic": self.statistic,
            "u_stat": self.u_stat,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "reject": self.reject,
            "B": self.B,
            "seed": self.seed,
            "kernel": self.kernel,
            "mode": self.mode,
        }
        if include_samples:
            d["bootstrap_samples"] = [float(b) for b in self.bootstrap_samples]
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw), sort_keys=True)


def _seed_repr(seed: SeedLike):
    return seed if isinstance(seed, (int, np.integer)) else None


def run_signal_test(psi, K: np.ndarray, B: int = DEFAULT_B, alpha: float = 0.05, seed: SeedLike = 0) -> MmrTestResult:
    """Statistic, bootstrap and decision for a precomputed signal and Gram matrix."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    P = _as_matrix(psi)
    u, stat = _ustat(P, K)
    boots = bootstrap_null(P, K, B, seed)
    pv = p_value(stat, boots)
    mode = "contrast" if P.shape[1] == 1 else "absolute"
    return MmrTestResult(stat, u, boots, pv, alpha, bool(pv < alpha), B, _seed_repr(seed), mode=mode)


def run_mmr_test(
    data: CombinedDataset,
    nuisances: NuisanceEstimates,
    kernel: KernelSpec | None = None,
    B: int = DEFAULT_B,
    alpha: float = 0.05,
    seed: SeedLike = 0,
    mode: TestMode = "contrast",
    K: np.ndarray | None = None,
) -> MmrTestResult:
    """Signals, Gram matrix on pooled z-scored covariates, bootstrap, decision.

    ``mode="absolute"`` tests the per-arm potential-outcome signal vector
    instead of the treatment contrast. A precomputed ``K`` may be passed to
    share one Gram matrix between modes.
    """
    kernel = kernel or KernelSpec()
    if mode == "contrast":
        psi = contrast_signal(data, nuisances)
    elif mode == "absolute":
        psi = absolute_signal(data, nuisances)
    else:
        raise ValueError(f"unknown test mode {mode!r}")
    if K is None:
        K = gram_matrix(kernel, standardize(data.covariates))
    res = run_signal_test(psi, K, B, alpha, seed)
    return MmrTestResult(
        res.statistic, res.u_stat, res.bootstrap_samples, res.p_value, alpha, res.reject,
        B, _seed_repr(seed), kernel.to_dict(), mode,
    )


# ---------------------------------------------------------------- witness


@dataclass(frozen=True)
class WitnessEvaluation:
    query_points: np.ndarray
    values: np.ndarray
    normalizer: float

    def write_csv(self, path, column_names: Sequence[str] | None = None) -> None:
        import csv

        d = self.query_points.shape[1]
        names = list(column_names) if column_names else [f"q{j}" for j in range(d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + ["witness"])
            for q, v in zip(self.query_points, self.values):
                w.writerow([repr(float(x)) for x in q] + [repr(float(v))])


def witness_eval(
    psi,
    train_X: np.ndarray,
    kernel: KernelSpec | None,
    query_points: np.ndarray,
    standardize_inputs: bool = True,
) -> WitnessEvaluation:
    """Witness ``C * (1/n) sum_i psi_i k(x_i, q)`` scaled to unit RMS over the queries.

    With ``standardize_inputs`` both training and query points are z-scored
    with the training means and deviations, matching :func:`run_mmr_test`.
    Query points are returned in their original units.
    """
    kernel = kernel or KernelSpec()
    P = _as_matrix(psi)
    if P.shape[1] != 1:
        raise ValueError("the witness is defined for scalar contrast signals")
    X = np.atleast_2d(np.asarray(train_X, dtype=float))
    Q = np.asarray(query_points, dtype=float)
    if Q.ndim == 1:
        Q = Q[:, None] if X.shape[1] == 1 else Q[None, :]
    if Q.shape[0] == 0:
        raise ValueError("empty query grid")
    if X.shape[0] != P.shape[0]:
        raise ValueError(f"{P.shape[0]} signal values for {X.shape[0]} training rows")
    if standardize_inputs:
        Xs, Qs = standardize(X), standardize(Q, reference=X)
    else:
        Xs, Qs = X, Q
    raw = cross_gram(kernel, Qs, Xs) @ P[:, 0] / X.shape[0]
    rms = float(np.sqrt(np.mean(raw**2)))
    if not rms > 0:
        raise ZeroWitnessError("zero witness: the signal-weighted kernel mean vanishes on the grid")
    c = 1.0 / rms
    return WitnessEvaluation(Q.copy(), raw * c, c)


def projection_grid(X: np.ndarray, columns: tuple[int, int], resolution: int = 25, quantiles=(0.0, 1.0)) -> np.ndarray:
    """``resolution**2`` points varying two columns over their observed range.

    Every other covariate is held at its median over ``X``; grid axes span the
    given quantiles of each projected column.
    """
    X = np.asarray(X, dtype=float)
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    a, b = columns
    for c in (a, b):
        if not 0 <= c < X.shape[1]:
            raise ValueError(f"column index {c} out of range")
    ga = np.linspace(*np.quantile(X[:, a], quantiles), resolution)
    gb = np.linspace(*np.quantile(X[:, b], quantiles), resolution)
    grid = np.tile(np.median(X, axis=0), (resolution * resolution, 1))
    aa, bb = np.meshgrid(ga, gb, indexing="ij")
    grid[:, a] = aa.ravel()
    grid[:, b] = bb.ravel()
    return grid
