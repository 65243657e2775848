"""Average-effect falsification baselines and their closed-form power.

``ate_test`` compares the RCT difference in means with the transported
doubly-robust estimate from the observational study. ``gate_test`` repeats
the comparison inside pre-specified subgroups with a Bonferroni correction.
The ``power_*`` functions give the asymptotic power of both tests in the
two-subgroup Gaussian model with drifts ``delta1``, ``delta2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .data import CombinedDataset
from .nuisance import NuisanceEstimates
from .signals import obs_contrast_signal


def norm_cdf(x):
    return ndtr(x)


def norm_ppf(q):
    return ndtri(q)


def z_upper(a: float) -> float:
    """Upper ``a`` quantile ``z_a`` with ``P(Z > z_a) = a``."""
    return float(-ndtri(a))


def two_sided_p(z: float) -> float:
    # 2 * (1 - Phi(|z|)) via the lower tail to avoid cancellation
    return float(2.0 * ndtr(-abs(z)))


@dataclass(frozen=True)
class ZTestResult:
    estimate_rct: float
    estimate_obs: float
    se_combined: float
    z: float
    p_value: float
    reject: bool
    group_label: str | None = None
    alpha: float = 0.05

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _ztest(est0: float, var0: float, est1: float, var1: float, alpha: float, label=None) -> ZTestResult:
    se = math.sqrt(var0 + var1)
    if not se > 0:
        raise ValueError(f"zero variance estimate{'' if label is None else f' in subgroup {label!r}'}")
    z = (est1 - est0) / se
    p = two_sided_p(z)
    return ZTestResult(est0, est1, se, z, p, bool(p < alpha), label, alpha)


def _rct_difference(Y: np.ndarray, A: np.ndarray, label=None) -> tuple[float, float]:
    y1, y0 = Y[A == 1], Y[A == 0]
    if y1.size < 2 or y0.size < 2:
        raise ValueError(f"need two RCT rows per arm{'' if label is None else f' in subgroup {label!r}'}")
    return float(y1.mean() - y0.mean()), float(y1.var(ddof=1) / y1.size + y0.var(ddof=1) / y0.size)


def _transported(data: CombinedDataset, nuis: NuisanceEstimates, psi1: np.ndarray, rows: np.ndarray, label=None):
    """DR estimate of the RCT-population average of the observational CATE.

    ``sum(pi * psi1) / n0`` over ``rows``; the variance is from the
    estimated influence values.
    """
    S = data.study[rows]
    n, n0 = rows.size, int(np.sum(S == 0))
    if n0 == 0:
        raise ValueError(f"no RCT rows{'' if label is None else f' in subgroup {label!r}'}")
    h = nuis.pi_rct[rows] * psi1[rows]
    est = float(h.sum() / n0)
    phi = (h - est * (S == 0)) * (n / n0)
    return est, float(np.mean(phi**2) / n)


def ate_test(data: CombinedDataset, nuisances: NuisanceEstimates, alpha: float = 0.05) -> ZTestResult:
    rows = np.arange(data.n)
    rct = data.study == 0
    est0, var0 = _rct_difference(data.outcome[rct], data.treatment[rct])
    psi1 = obs_contrast_signal(data, nuisances).values
    est1, var1 = _transported(data, nuisances, psi1, rows)
    return _ztest(est0, var0, est1, var1, alpha)


@dataclass(frozen=True)
class GateResult:
    groups: tuple[ZTestResult, ...]
    reject: bool
    alpha: float

    @property
    def p_value(self) -> float:
        """Bonferroni-adjusted overall p-value ``min(1, G * min_g p_g)``."""
        return min(1.0, len(self.groups) * min(g.p_value for g in self.groups))


def gate_test(
    data: CombinedDataset,
    nuisances: NuisanceEstimates,
    subgroups: Sequence,
    alpha: float = 0.05,
) -> GateResult:
    """Per-subgroup Z-tests at level ``alpha / G``; reject if any subgroup does.

    ``subgroups`` is a length-n label per row; each distinct label is a group.
    """
    labels = np.asarray(subgroups)
    if labels.shape[0] != data.n:
        raise ValueError(f"{labels.shape[0]} subgroup labels for {data.n} rows")
    groups = list(dict.fromkeys(labels.tolist()))
    G = len(groups)
    psi1 = obs_contrast_signal(data, nuisances).values
    results = []
    for g in groups:
        rows = np.flatnonzero(labels == g)
        if rows.size == 0:
            raise ValueError(f"empty subgroup {g!r}")
        S, A = data.study[rows], data.treatment[rows]
        for s in (0, 1):
            for a in (0, 1):
                if not np.any((S == s) & (A == a)):
                    raise ValueError(f"subgroup {g!r} has no rows with S={s}, A={a}")
        r0 = rows[S == 0]
        est0, var0 = _rct_difference(data.outcome[r0], data.treatment[r0], g)
        est1, var1 = _transported(data, nuisances, psi1, rows, g)
        res = _ztest(est0, var0, est1, var1, alpha / G, str(g))
        results.append(res)
    return GateResult(tuple(results), any(r.reject for r in results), alpha)


def subgroup_labels(X: np.ndarray, columns: Sequence[int], thresholds: Sequence[float]) -> np.ndarray:
    """Cross-classify rows by ``X[:, c] >= t`` for each (column, threshold) pair."""
    X = np.asarray(X, dtype=float)
    bits = [(X[:, c] >= t).astype(int) for c, t in zip(columns, thresholds)]
    return np.array(["".join(map(str, b)) for b in zip(*bits)])


# ---------------------------------------------------------------- power


@dataclass(frozen=True)
class PowerSpec:
    """Two equal-size subgroups with drifts ``delta1``, ``delta2`` and common scale ``sigma``."""

    delta1: float
    delta2: float
    sigma: float
    N: int
    alpha: float = 0.05

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.N > 0:
            raise ValueError("N must be positive")


def _acceptance(mu, z):
    return ndtr(mu + z) - ndtr(mu - z)


def power_ate(spec: PowerSpec) -> float:
    dbar = abs(spec.delta1 + spec.delta2) / 2.0
    mu = dbar * math.sqrt(spec.N) / spec.sigma
    return float(1.0 - _acceptance(mu, z_upper(spec.alpha / 2)))


def power_gate(spec: PowerSpec) -> float:
    z = z_upper(spec.alpha / 4)
    scale = math.sqrt(spec.N) / (math.sqrt(2.0) * spec.sigma)
    keep = 1.0
    for d in (spec.delta1, spec.delta2):
        keep *= _acceptance(abs(d) * scale, z)
    return float(1.0 - keep)


def scenario_bounds(spec: PowerSpec, scenario: int) -> float:
    """Smallest ``|delta|`` beyond which GATE is guaranteed more powerful than ATE.

    Scenario 1: one subgroup drifts (``delta2 = 0``). Scenario 2: opposite
    drifts (``delta1 = -delta2``).
    """
    a, s, N = spec.alpha, spec.sigma, spec.N
    if scenario == 1:
        return float(2.0 * s / math.sqrt(N) * (math.sqrt(math.log(2.0)) + z_upper(a / 2)))
    if scenario == 2:
        return float(s / math.sqrt(N / 2.0) * (z_upper(a / 4) + ndtri(1.0 - math.sqrt(1.0 - a))))
    raise ValueError(f"unknown scenario {scenario!r}; expected 1 or 2")


def scenario3_g(delta_star, alpha: float = 0.05):
    """``g(d) = [Phi(d/sqrt2 + z4) - Phi(d/sqrt2 - z4)]^2 - [Phi(d + z2) - Phi(d - z2)]``.

    ``g`` equals ``power_ate - power_gate`` when both subgroups drift by the
    same standardized amount ``delta_star``, so positive ``g`` means the
    pooled test is the more powerful one.
    """
    d = np.asarray(delta_star, dtype=float)
    if np.any(d < 0):
        raise ValueError("delta_star must be non-negative")
    g = _acceptance(d / math.sqrt(2.0), z_upper(alpha / 4)) ** 2 - _acceptance(d, z_upper(alpha / 2))
    return float(g) if g.ndim == 0 else g


def simulate_power(spec: PowerSpec, draws: int = 100_000, seed=0) -> tuple[float, float]:
    """Monte-Carlo rejection rates ``(ate, gate)`` of the Gaussian-limit tests.

    Each subgroup estimate is ``N(delta_i, 2 sigma^2 / N)``; the overall
    estimate is their average.
    """
    rng = np.random.default_rng(seed)
    sd = spec.sigma * math.sqrt(2.0 / spec.N)
    e1 = spec.delta1 + sd * rng.standard_normal(draws)
    e2 = spec.delta2 + sd * rng.standard_normal(draws)
    ate_z = (e1 + e2) / 2.0 / (spec.sigma / math.sqrt(spec.N))
    ate = np.mean(np.abs(ate_z) > z_upper(spec.alpha / 2))
    z4 = z_upper(spec.alpha / 4)
    gate = np.mean((np.abs(e1 / sd) > z4) | (np.abs(e2 / sd) > z4))
    return float(ate), float(gate)
