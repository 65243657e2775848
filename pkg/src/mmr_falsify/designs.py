"""Small fully-synthetic designs with known answers.

These complement the IHDP-style generator in :mod:`simgen`:

* :class:`BaselineShiftDesign` - both studies share the CATE but the
  observational outcomes carry an extra study-specific baseline, so only
  potential-outcome level tests should reject.
* :class:`BinaryOutcomeDesign` - a binary-outcome RCT + observational pair
  on which selection bias can be injected.
* :func:`step_bias_signals` and :func:`gaussian_signals` - signals drawn
  directly, for checking the statistic and witness in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import SeedLike, make_rng
from .data import CombinedDataset
from .nuisance import NuisanceEstimates, oracle_nuisances


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _study_split(n: int, rng, X: np.ndarray, slope: np.ndarray) -> np.ndarray:
    """Study labels with ``P(S=0 | X)`` logistic in ``X @ slope``."""
    return (rng.random(n) >= _sigmoid(X @ slope)).astype(int)


@dataclass(frozen=True)
class BaselineShiftDesign:
    """``Y = X b + U + tau(X) A + eps`` with ``U ~ N(shift * S, 1)`` and ``tau(x) = 1 + x_0``.

    The unobserved ``U`` moves the observational baseline but is independent
    of treatment within each study, so the contrast is transportable while
    the per-arm outcome means are not.
    """

    n: int = 3000
    d: int = 3
    shift: float = 1.0
    p_assign: float = 0.5

    def tau(self, X: np.ndarray) -> np.ndarray:
        return 1.0 + X[:, 0]

    def sample(self, seed: SeedLike = 0) -> CombinedDataset:
        rng = make_rng(seed)
        X = rng.standard_normal((self.n, self.d))
        S = _study_split(self.n, rng, X, np.r_[0.5, np.zeros(self.d - 1)])
        # observational treatment depends on the covariates only
        e = _sigmoid(0.5 * X[:, 1] - 0.25 * X[:, 0])
        pA = np.where(S == 0, self.p_assign, e)
        A = (rng.random(self.n) < pA).astype(int)
        U = self.shift * S + rng.standard_normal(self.n)
        b = np.linspace(1.0, -0.5, self.d)
        Y = X @ b + U + self.tau(X) * A + rng.standard_normal(self.n)
        return CombinedDataset(X, A, Y, S)

    def oracle_nuisances(self, data: CombinedDataset) -> NuisanceEstimates:
        X = data.covariates
        base = X @ np.linspace(1.0, -0.5, self.d) + self.shift
        return oracle_nuisances(
            data, base, base + self.tau(X),
            _sigmoid(0.5 * X[:, 1] - 0.25 * X[:, 0]), _sigmoid(0.5 * X[:, 0]), self.p_assign,
        )


@dataclass(frozen=True)
class BinaryOutcomeDesign:
    """Binary outcome with ``logit P(Y=1) = base(X) + tau_logit(X) A``, shared by both studies.

    Columns 2 and 3 are binary and define four pre-specified subgroups.
    """

    n0: int = 3000
    n1: int = 3000
    p_assign: float = 0.5

    @staticmethod
    def covariates(n: int, rng) -> np.ndarray:
        X = np.empty((n, 4))
        X[:, :2] = rng.standard_normal((n, 2))
        X[:, 2:] = rng.random((n, 2)) < 0.5
        return X

    @staticmethod
    def baseline_logit(X):
        return -0.2 + 0.6 * X[:, 0] - 0.4 * X[:, 1] + 0.3 * X[:, 2]

    @staticmethod
    def effect_logit(X):
        return 0.5 - 0.4 * X[:, 3] + 0.3 * X[:, 0]

    def sample(self, seed: SeedLike = 0) -> CombinedDataset:
        rng = make_rng(seed)
        X = np.vstack([self.covariates(self.n0, rng), self.covariates(self.n1, rng)])
        # shift the observational covariates so the strata differ
        X[self.n0 :, 0] += 0.3
        S = np.r_[np.zeros(self.n0, int), np.ones(self.n1, int)]
        e = _sigmoid(-0.3 + 0.5 * X[:, 0] + 0.4 * X[:, 3])
        pA = np.where(S == 0, self.p_assign, e)
        A = (rng.random(S.size) < pA).astype(int)
        p = _sigmoid(self.baseline_logit(X) + self.effect_logit(X) * A)
        Y = (rng.random(S.size) < p).astype(float)
        return CombinedDataset(X, A, Y, S, ("x0", "x1", "g0", "g1"))

    def oracle_nuisances(self, data: CombinedDataset) -> NuisanceEstimates:
        """True nuisances; valid only before any rows are dropped."""
        X = data.covariates
        b = self.baseline_logit(X)
        # observational x0 is N(0.3, 1): density ratio exp(0.3 x0 - 0.045)
        ratio = (self.n1 / self.n0) * np.exp(0.3 * X[:, 0] - 0.045)
        return oracle_nuisances(
            data, _sigmoid(b), _sigmoid(b + self.effect_logit(X)),
            _sigmoid(-0.3 + 0.5 * X[:, 0] + 0.4 * X[:, 3]), 1.0 / (1.0 + ratio), self.p_assign,
        )

    @staticmethod
    def subgroups(data: CombinedDataset) -> np.ndarray:
        return (2 * data.column("g0") + data.column("g1")).astype(int)


def step_bias_signals(n: int = 500, bias: float = 1.0, noise: float = 1.0, seed: SeedLike = 0):
    """``x ~ U(-2, 2)``, ``psi = bias * 1{x > 0} + noise * N(0, 1)``; returns ``(x[:, None], psi)``."""
    rng = make_rng(seed)
    x = rng.uniform(-2.0, 2.0, n)
    psi = bias * (x > 0) + noise * rng.standard_normal(n)
    return x[:, None], psi


def gaussian_signals(n: int, d: int = 2, drift: float = 0.0, seed: SeedLike = 0):
    """``X ~ N(0, I_d)`` and ``psi = drift * x_0 + N(0, 1)``; ``drift = 0`` is the null."""
    rng = make_rng(seed)
    X = rng.standard_normal((n, d))
    return X, drift * X[:, 0] + rng.standard_normal(n)
