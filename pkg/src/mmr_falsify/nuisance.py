"""Cross-fitted nuisance functions for the CATE signals.

For each row ``i`` in fold ``k`` every model applied to ``i`` is trained on
rows outside fold ``k`` only:

* ``mu0``, ``mu1``: outcome surfaces ``E[Y | A=a, S=1, X]`` (observational rows)
* ``e_obs``: treatment propensity ``P(A=1 | S=1, X)`` (observational rows)
* ``pi_rct``: selection propensity ``P(S=0 | X)`` (all rows)

``p_assign = P(A=1 | S=0)`` is the treated fraction of the whole RCT stratum.
Nuisances are fit once per dataset and never inside bootstrap replicates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._rng import SeedLike, child_seed
from .data import CombinedDataset, FoldAssignment, assign_folds
from .learners import EPS_CLIP, GBT, LINEAR, LearnerSpec, clip_probability, fit, predict


@dataclass(frozen=True)
class NuisanceEstimates:
    mu0: np.ndarray
    mu1: np.ndarray
    e_obs: np.ndarray
    pi_rct: np.ndarray
    p_assign: float

    def __post_init__(self):
        n = len(self.mu0)
        for name in ("mu1", "e_obs", "pi_rct"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"nuisance {name} has length {len(getattr(self, name))}, expected {n}")
        if not 0 < self.p_assign < 1:
            raise ValueError("p_assign must lie in (0, 1)")

    @property
    def n(self) -> int:
        return len(self.mu0)


@dataclass(frozen=True)
class NuisanceSpecs:
    """Learner per nuisance; defaults follow the semi-synthetic setup."""

    outcome: LearnerSpec = LINEAR
    treatment: LearnerSpec = GBT
    selection: LearnerSpec = GBT

    @classmethod
    def from_dict(cls, d: dict | None) -> "NuisanceSpecs":
        d = d or {}
        return cls(**{k: LearnerSpec.from_dict(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {k: getattr(self, k).to_dict() for k in ("outcome", "treatment", "selection")}


# a GBT-everywhere variant for binary outcomes
BINARY_OUTCOME_SPECS = NuisanceSpecs(outcome=GBT)


def estimate_rct_assignment(data: CombinedDataset, eps: float = EPS_CLIP) -> float:
    """Treated fraction among RCT rows, clipped to ``[eps, 1 - eps]``."""
    rct = data.study == 0
    if not rct.any():
        raise ValueError("no RCT rows")
    return float(np.clip(data.treatment[rct].mean(), eps, 1 - eps))


def _check_fold(data: CombinedDataset, out: np.ndarray, k: int) -> None:
    S, A = data.study[out], data.treatment[out]
    problems = []
    if not np.any(S == 0):
        problems.append("RCT rows")
    for a in (0, 1):
        if not np.any((S == 1) & (A == a)):
            problems.append(f"observational rows with A={a}")
    if problems:
        raise ValueError(f"complement of fold {k} has no {' or '.join(problems)}")


def crossfit_nuisances(
    data: CombinedDataset,
    specs: NuisanceSpecs | None = None,
    folds: FoldAssignment | None = None,
    seed: SeedLike = 0,
    K: int = 3,
    eps: float = EPS_CLIP,
) -> NuisanceEstimates:
    """K-fold cross-fitted nuisances for every row (both strata)."""
    specs = specs or NuisanceSpecs()
    if folds is None:
        folds = assign_folds(data.n, K, child_seed(seed, 0))
    elif len(folds.fold_of_row) != data.n:
        raise ValueError("fold assignment does not match dataset size")
    X, A, Y, S = data.covariates, data.treatment, data.outcome, data.study
    n = data.n
    mu0, mu1, e, pi = (np.empty(n) for _ in range(4))

    for k in range(folds.K):
        inside, out = folds.rows_in(k), folds.rows_out(k)
        _check_fold(data, out, k)
        if inside.size == 0:
            continue
        obs_out = out[S[out] == 1]
        for a, target in ((0, mu0), (1, mu1)):
            rows = obs_out[A[obs_out] == a]
            model = fit(specs.outcome, X[rows], Y[rows], child_seed(seed, 1, k, a))
            target[inside] = predict(model, X[inside], eps)
        model = fit(specs.treatment, X[obs_out], A[obs_out], child_seed(seed, 2, k))
        e[inside] = predict(model, X[inside], eps)
        model = fit(specs.selection, X[out], (S[out] == 0).astype(float), child_seed(seed, 3, k))
        pi[inside] = predict(model, X[inside], eps)

    # propensity-type outputs are clipped whichever learner produced them
    return NuisanceEstimates(
        mu0, mu1, clip_probability(e, eps), clip_probability(pi, eps), estimate_rct_assignment(data, eps)
    )


NuisanceFn = Callable[[np.ndarray], np.ndarray]


def oracle_nuisances(
    data: CombinedDataset,
    mu0: NuisanceFn | np.ndarray,
    mu1: NuisanceFn | np.ndarray,
    e_obs: NuisanceFn | np.ndarray,
    pi_rct: NuisanceFn | np.ndarray,
    p_assign: float | None = None,
    eps: float = EPS_CLIP,
) -> NuisanceEstimates:
    """Nuisances from known closed forms, bypassing fitting.

    Each argument is either a function of the covariate matrix or a
    precomputed per-row array. Probabilities are clipped like fitted ones.
    """

    def evaluate(f):
        v = f(data.covariates) if callable(f) else f
        v = np.asarray(v, dtype=float).ravel()
        if v.shape[0] != data.n:
            raise ValueError(f"oracle returned {v.shape[0]} values for {data.n} rows")
        return v

    p = estimate_rct_assignment(data, eps) if p_assign is None else float(np.clip(p_assign, eps, 1 - eps))
    return NuisanceEstimates(
        evaluate(mu0),
        evaluate(mu1),
        clip_probability(evaluate(e_obs), eps),
        clip_probability(evaluate(pi_rct), eps),
        p,
    )
