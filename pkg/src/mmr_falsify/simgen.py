"""Semi-synthetic RCT + observational benchmark on IHDP-style covariates.

Pipeline (:func:`generate_benchmark`):

1. resample base rows uniformly for the RCT and with down-weighting of
   male / smoking / working-mother rows for the observational study;
2. draw treatment in both studies at the base treated rate;
3. generate ``m`` confounders from five summary covariates, shifted by
   treatment in the observational study only;
4. simulate both potential outcomes from a linear response surface;
5. conceal the ``c_z`` confounders with the largest ``|gamma|``.

The real IHDP extract is not distributed; :func:`synthetic_ihdp_base` draws
a stand-in with the same 28 columns in their natural units, and
:func:`load_ihdp_base` reads the real file when available.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, replace
from typing import Literal

import numpy as np

from ._rng import SeedLike, child_seed, make_rng
from .data import CombinedDataset, DataValidationError
from .learners import EPS_CLIP
from .nuisance import NuisanceEstimates, oracle_nuisances

IHDP_COLUMNS = (
    "bw", "b.head", "preterm", "birth.o", "nnhealth", "momage",
    "sex", "twin", "b.marr", "mom.lths", "mom.hs", "mom.scoll", "cig", "first",
    "booze", "drugs", "work.dur", "prenatal", "ark", "ein", "har", "mia", "pen",
    "tex", "was", "momwhite", "momblack", "momhisp",
)
CONTINUOUS_COLUMNS = ("bw", "b.head", "preterm", "birth.o", "nnhealth", "momage")
SELECTION_COLUMNS = ("sex", "cig", "work.dur")
SUMMARY_COLUMNS = ("nnhealth", "birth.o", "booze", "mom.hs")

XI = np.array([0.1, -0.1, 0.2, -0.3, 0.4])
DELTA = np.array([1.0, -0.1, 0.5, -3.0, 4.0])
GAMMA_LEVELS = {"low": (0.1, 0.2, 0.5, 0.75, 1.0), "high": (1.0, 1.75, 2.0, 2.25, 2.75)}
BETA_LEVELS = (0.0, 0.1, 0.2, 0.3, 0.4)
BETA_PROBS = (0.6, 0.1, 0.1, 0.1, 0.1)
SELECTION_SLOPE = 0.2


# ---------------------------------------------------------------- base covariates


@dataclass(frozen=True)
class BaseCovariates:
    """Base rows to resample from, with per-column standardization constants.

    ``center``/``scale`` are 0/1 for binary columns and the base mean/sd for
    continuous ones, so the standardized matrix does not depend on which rows
    a replicate happens to draw.
    """

    X: np.ndarray
    treatment: np.ndarray
    names: tuple[str, ...] = IHDP_COLUMNS

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise DataValidationError("base covariates must be a non-empty matrix")
        if X.shape[1] != len(self.names):
            raise DataValidationError(f"{X.shape[1]} base columns for {len(self.names)} names")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "treatment", np.asarray(self.treatment, dtype=int))
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataValidationError(f"base covariates lack column {name!r}") from None

    @property
    def treated_rate(self) -> float:
        return float(self.treatment.mean())

    def standardization(self) -> tuple[np.ndarray, np.ndarray]:
        center = np.zeros(self.X.shape[1])
        scale = np.ones(self.X.shape[1])
        for c in CONTINUOUS_COLUMNS:
            if c in self.names:
                j = self.index(c)
                center[j] = self.X[:, j].mean()
                scale[j] = self.X[:, j].std() or 1.0
        return center, scale

    def standardize(self, X: np.ndarray) -> np.ndarray:
        center, scale = self.standardization()
        return (X - center) / scale


def synthetic_ihdp_base(n: int = 985, seed: SeedLike = 0, treated_rate: float = 377 / 985) -> BaseCovariates:
    """Stand-in for the IHDP covariate extract.

    Marginals roughly follow the published IHDP summaries: birth weight in
    grams around 2000, categorical education, site and race as one-hot
    blocks. Treatment is assigned independently of the covariates.
    """
    rng = make_rng(seed)
    cols = {}
    bw = np.clip(rng.normal(2000, 500, n), 700, 3500)
    cols["bw"] = np.round(bw)
    cols["b.head"] = np.round(np.clip(26 + 3.3 * (bw / 1000) + rng.normal(0, 1.2, n), 20, 40), 1)
    cols["preterm"] = np.clip(np.round(rng.normal(7, 2.5, n)), 0, 14)
    cols["birth.o"] = np.clip(rng.poisson(0.9, n) + 1, 1, 6).astype(float)
    cols["nnhealth"] = np.round(np.clip(rng.normal(100, 15, n), 45, 140))
    cols["momage"] = np.clip(np.round(rng.normal(24.5, 5.5, n)), 13, 43)
    for c, p in (("sex", 0.51), ("twin", 0.09), ("b.marr", 0.47), ("cig", 0.40), ("first", 0.40),
                 ("booze", 0.14), ("drugs", 0.05), ("work.dur", 0.56), ("prenatal", 0.97)):
        cols[c] = rng.binomial(1, p, n).astype(float)
    edu = rng.choice(3, n, p=[0.39, 0.29, 0.32])
    for k, c in enumerate(("mom.lths", "mom.hs", "mom.scoll")):
        cols[c] = (edu == k).astype(float)
    # the eighth site is the reference category
    site = rng.choice(8, n)
    for k, c in enumerate(("ark", "ein", "har", "mia", "pen", "tex", "was")):
        cols[c] = (site == k).astype(float)
    race = rng.choice(3, n, p=[0.30, 0.52, 0.18])
    for k, c in enumerate(("momwhite", "momblack", "momhisp")):
        cols[c] = (race == k).astype(float)
    X = np.column_stack([cols[c] for c in IHDP_COLUMNS])
    A = rng.binomial(1, treated_rate, n)
    return BaseCovariates(X, A, IHDP_COLUMNS)


def load_ihdp_base(path: str | os.PathLike, treatment_column: str = "treat") -> BaseCovariates:
    """Read an IHDP-style CSV holding the 28 covariate columns and a treatment column."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in (*IHDP_COLUMNS, treatment_column) if c not in header]
        if missing:
            raise DataValidationError(f"{path}: missing columns {missing}")
        rows = list(reader)
    if not rows:
        raise DataValidationError(f"{path}: no data rows")
    try:
        X = np.array([[float(r[c]) for c in IHDP_COLUMNS] for r in rows])
        A = np.array([float(r[treatment_column]) for r in rows])
    except ValueError as exc:
        raise DataValidationError(f"{path}: {exc}") from None
    return BaseCovariates(X, A.astype(int), IHDP_COLUMNS)


# ---------------------------------------------------------------- resampling


def resample_rct(base_covariates: np.ndarray, n0: int, seed: SeedLike = 0) -> np.ndarray:
    """Uniform with-replacement draw of ``n0`` row indices."""
    m = np.asarray(base_covariates).shape[0]
    if m == 0:
        raise DataValidationError("empty base covariates")
    return make_rng(seed).integers(0, m, n0)


def selection_weight(flag_count) -> np.ndarray:
    """Relative draw probability ``1 / (1 + exp(0.2 * count))`` for the observational study.

    Decreasing in the number of flags (male, smoking, working mother), so
    flagged rows become less prevalent.
    """
    return 1.0 / (1.0 + np.exp(SELECTION_SLOPE * np.asarray(flag_count, dtype=float)))


def observational_probabilities(base: BaseCovariates) -> np.ndarray:
    flags = sum(base.X[:, base.index(c)] for c in SELECTION_COLUMNS)
    w = selection_weight(flags)
    return w / w.sum()


def resample_obs_weighted(base: BaseCovariates, n: int, seed: SeedLike = 0) -> np.ndarray:
    """Weighted with-replacement draw of ``n`` row indices."""
    probs = observational_probabilities(base)
    return make_rng(seed).choice(base.n, size=n, replace=True, p=probs)


# ---------------------------------------------------------------- confounders and outcomes


def summary_design(base: BaseCovariates, X: np.ndarray) -> np.ndarray:
    """``X_s``: an intercept then the four summary covariates (continuous ones standardized)."""
    Xstd = base.standardize(X)
    return np.column_stack([np.ones(X.shape[0])] + [Xstd[:, base.index(c)] for c in SUMMARY_COLUMNS])


def generate_confounders(X_s: np.ndarray, A, is_rct: bool, m: int, seed: SeedLike = 0) -> np.ndarray:
    """``z = X_s xi + (X_s delta) * A + N(0, 1)``, dropping the ``A`` term in the RCT."""
    X_s = np.atleast_2d(np.asarray(X_s, dtype=float))
    if X_s.shape[1] != XI.size:
        raise ValueError(f"X_s needs {XI.size} columns (intercept first), got {X_s.shape[1]}")
    n = X_s.shape[0]
    A = np.asarray(A, dtype=float).ravel()
    if A.size != n:
        raise ValueError(f"{A.size} treatments for {n} rows")
    mean = X_s @ XI
    if not is_rct:
        mean = mean + (X_s @ DELTA) * A
    return mean[:, None] + make_rng(seed).standard_normal((n, m))


def sample_coefficients(m: int, d: int, strength: str, seed: SeedLike = 0):
    """``(gamma, delta_out, beta)`` for ``m`` confounders and ``d`` covariates."""
    if strength not in GAMMA_LEVELS:
        raise ValueError(f"strength must be 'low' or 'high', got {strength!r}")
    rng = make_rng(seed)
    levels = np.array(GAMMA_LEVELS[strength])
    gamma = rng.choice(levels, m)
    delta_out = rng.choice(levels, m)
    beta = rng.choice(BETA_LEVELS, d + 1, p=BETA_PROBS)
    return gamma, delta_out, beta


def outcome_means(X_tilde_body: np.ndarray, Z: np.ndarray, gamma, delta_out, beta, omega: float):
    """Mean of ``Y0`` and ``Y1`` given standardized covariates and confounders."""
    beta = np.asarray(beta, dtype=float)
    lin = X_tilde_body @ beta[1:]
    m0 = lin + 0.5 * beta.sum() + Z @ np.asarray(gamma, dtype=float)
    m1 = beta[0] + lin + Z @ np.asarray(delta_out, dtype=float) + omega
    return m0, m1


def simulate_outcomes(X_tilde: np.ndarray, Z: np.ndarray, gamma, beta, omega: float = 23.0, seed: SeedLike = 0, delta_out=None):
    """``(Y0, Y1, Y)`` with unit-variance Gaussian noise.

    ``X_tilde`` has the treatment in column 0. ``delta_out`` (the confounder
    loadings of ``Y1``) defaults to ``gamma``.
    """
    X_tilde = np.atleast_2d(np.asarray(X_tilde, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    delta_out = gamma if delta_out is None else np.asarray(delta_out, dtype=float)
    n = X_tilde.shape[0]
    if beta.size != X_tilde.shape[1]:
        raise ValueError(f"beta has {beta.size} entries for {X_tilde.shape[1]} columns")
    if Z.shape[0] != n or gamma.size != Z.shape[1] or delta_out.size != Z.shape[1]:
        raise ValueError("confounder matrix and loadings do not match")
    m0, m1 = outcome_means(X_tilde[:, 1:], Z, gamma, delta_out, beta, omega)
    noise = make_rng(seed).standard_normal((n, 2))
    Y0, Y1 = m0 + noise[:, 0], m1 + noise[:, 1]
    A = X_tilde[:, 0]
    return Y0, Y1, np.where(A == 1, Y1, Y0)


def concealment_order(gamma) -> np.ndarray:
    """Confounder indices by decreasing ``|gamma|``; ties keep the lower index first."""
    return np.argsort(-np.abs(np.asarray(gamma, dtype=float)), kind="stable")


# ---------------------------------------------------------------- benchmark


@dataclass(frozen=True)
class SimConfig:
    n0: int = 2955
    size_ratio: float = 1.0
    m: int = 7
    c_z: int = 0
    strength: Literal["low", "high"] = "low"
    omega: float = 23.0
    seed: int = 0
    base_path: str | None = None
    treatment_column: str = "treat"

    def __post_init__(self):
        if self.n0 < 2:
            raise ValueError("n0 must be >= 2")
        if not self.size_ratio > 0:
            raise ValueError("size_ratio must be positive")
        if self.m < 0 or not 0 <= self.c_z <= self.m:
            raise ValueError(f"need 0 <= c_z <= m, got c_z={self.c_z}, m={self.m}")
        if self.strength not in GAMMA_LEVELS:
            raise ValueError(f"strength must be 'low' or 'high', got {self.strength!r}")

    @property
    def n1(self) -> int:
        return max(2, int(round(self.size_ratio * self.n0)))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict | None) -> "SimConfig":
        return cls(**(d or {}))


@dataclass(frozen=True)
class GeneratedBenchmark:
    """One simulated RCT + observational pair with everything needed for an oracle.

    ``base_rows`` index the base covariates; ``Z`` holds every confounder,
    ``concealed`` the ones dropped from :attr:`dataset`.
    """

    config: SimConfig
    base: BaseCovariates
    base_rows: np.ndarray
    treatment: np.ndarray
    study: np.ndarray
    Z: np.ndarray
    Y0: np.ndarray
    Y1: np.ndarray
    gamma: np.ndarray
    delta_out: np.ndarray
    beta: np.ndarray
    p_treat: float
    concealed: tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return self.base_rows.size

    @property
    def covariates(self) -> np.ndarray:
        return self.base.X[self.base_rows]

    @property
    def outcome(self) -> np.ndarray:
        return np.where(self.treatment == 1, self.Y1, self.Y0)

    @property
    def visible(self) -> list[int]:
        return [j for j in range(self.Z.shape[1]) if j not in self.concealed]

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.base.names + tuple(f"z{j}" for j in self.visible)

    @property
    def dataset(self) -> CombinedDataset:
        X = np.column_stack([self.covariates, self.Z[:, self.visible]])
        return CombinedDataset(X, self.treatment, self.outcome, self.study, self.feature_names)

    # oracle pieces -------------------------------------------------------

    def _summary(self):
        X_s = summary_design(self.base, self.covariates)
        return X_s @ XI, X_s @ DELTA

    def true_cate(self) -> np.ndarray:
        """RCT CATE given the observed columns (visible confounders included)."""
        m0, _ = self._summary()
        Zc = self.Z.copy()
        Zc[:, list(self.concealed)] = m0[:, None]
        loading = self.delta_out - self.gamma
        return self.beta[0] - 0.5 * self.beta.sum() + self.omega + Zc @ loading

    @property
    def omega(self) -> float:
        return self.config.omega

    def true_outcome_surfaces(self) -> tuple[np.ndarray, np.ndarray]:
        """``E[Y | A=a, S=1, observed columns]`` for ``a = 0, 1``."""
        m0, dlt = self._summary()
        Xstd = self.base.standardize(self.covariates)
        out = []
        for a in (0, 1):
            Zc = self.Z.copy()
            Zc[:, list(self.concealed)] = (m0 + a * dlt)[:, None]
            mu0, mu1 = outcome_means(Xstd, Zc, self.gamma, self.delta_out, self.beta, self.omega)
            out.append(mu1 if a else mu0)
        return out[0], out[1]

    def _visible_log_lr(self) -> np.ndarray:
        """``log f(z_vis | A=1, x) / f(z_vis | A=0, x)`` under the observational model."""
        m0, dlt = self._summary()
        zv = self.Z[:, self.visible]
        return np.sum((zv - m0[:, None]) * dlt[:, None] - 0.5 * dlt[:, None] ** 2, axis=1)

    def true_propensity(self) -> np.ndarray:
        """``P(A=1 | S=1, observed columns)``."""
        p = self.p_treat
        return 1.0 / (1.0 + np.exp(-(np.log(p / (1 - p)) + self._visible_log_lr())))

    def true_selection(self) -> np.ndarray:
        """``P(S=0 | observed columns)`` in the pooled sample.

        Identical base rows form one covariate atom; its RCT mass is the row
        count share and its observational mass the summed draw probability.
        """
        _, inverse, counts = np.unique(self.base.X, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        q = counts / self.base.n
        u = np.bincount(inverse, weights=observational_probabilities(self.base))
        atom = inverse[self.base_rows]
        lr = np.exp(self._visible_log_lr())
        z_ratio = self.p_treat * lr + (1 - self.p_treat)
        n0 = int(np.sum(self.study == 0))
        n1 = self.n - n0
        return 1.0 / (1.0 + (n1 / n0) * (u[atom] / q[atom]) * z_ratio)

    def oracle_nuisances(self, eps: float = EPS_CLIP) -> NuisanceEstimates:
        mu0, mu1 = self.true_outcome_surfaces()
        return oracle_nuisances(
            self.dataset, mu0, mu1, self.true_propensity(), self.true_selection(), self.p_treat, eps
        )

    def oracle_dict(self) -> dict:
        return {
            "gamma": self.gamma.tolist(),
            "delta_out": self.delta_out.tolist(),
            "beta": self.beta.tolist(),
            "xi": XI.tolist(),
            "delta": DELTA.tolist(),
            "omega": self.omega,
            "p_treat": self.p_treat,
            "concealed": list(self.concealed),
            "concealment_order": concealment_order(self.gamma).tolist(),
            "cate_intercept": float(self.beta[0] - 0.5 * self.beta.sum() + self.omega),
            "cate_confounder_loadings": (self.delta_out - self.gamma).tolist(),
        }


def conceal_confounders(bench: GeneratedBenchmark, c_z: int) -> GeneratedBenchmark:
    m = bench.Z.shape[1]
    if not 0 <= c_z <= m:
        raise ValueError(f"c_z must lie in [0, {m}], got {c_z}")
    hidden = tuple(sorted(int(j) for j in concealment_order(bench.gamma)[:c_z]))
    return replace(bench, concealed=hidden)


def generate_benchmark(config: SimConfig, base: BaseCovariates | None = None) -> GeneratedBenchmark:
    """Full simulation for one replicate; deterministic in ``config.seed``."""
    if base is None:
        base = (
            load_ihdp_base(config.base_path, config.treatment_column)
            if config.base_path
            else synthetic_ihdp_base()
        )
    seed = config.seed
    gamma, delta_out, beta = sample_coefficients(config.m, len(base.names), config.strength, child_seed(seed, 0))
    rows0 = resample_rct(base.X, config.n0, child_seed(seed, 1))
    rows1 = resample_obs_weighted(base, config.n1, child_seed(seed, 2))
    # treatment is redrawn per resampled row; keeping the base value would
    # make it a deterministic function of the duplicated covariates
    p = base.treated_rate
    if not 0 < p < 1:
        raise DataValidationError("base treatment must contain both arms")
    trt = make_rng(child_seed(seed, 3))
    A0 = trt.binomial(1, p, config.n0)
    A1 = trt.binomial(1, p, config.n1)
    Z0 = generate_confounders(summary_design(base, base.X[rows0]), A0, True, config.m, child_seed(seed, 4))
    Z1 = generate_confounders(summary_design(base, base.X[rows1]), A1, False, config.m, child_seed(seed, 5))
    rows = np.concatenate([rows0, rows1])
    A = np.concatenate([A0, A1])
    Z = np.vstack([Z0, Z1])
    Xt = np.column_stack([A, base.standardize(base.X[rows])])
    Y0, Y1, _ = simulate_outcomes(Xt, Z, gamma, beta, config.omega, child_seed(seed, 6), delta_out)
    S = np.concatenate([np.zeros(config.n0, int), np.ones(config.n1, int)])
    bench = GeneratedBenchmark(config, base, rows, A, S, Z, Y0, Y1, gamma, delta_out, beta, p)
    return conceal_confounders(bench, config.c_z)


def write_benchmark(bench: GeneratedBenchmark, directory: str | os.PathLike) -> None:
    """Bundle: ``observed.csv``, ``oracle.json``, ``config.json``."""
    from .data import write_csv

    os.makedirs(directory, exist_ok=True)
    write_csv(bench.dataset, os.path.join(directory, "observed.csv"))
    with open(os.path.join(directory, "oracle.json"), "w") as fh:
        json.dump(bench.oracle_dict(), fh, indent=2, sort_keys=True)
    with open(os.path.join(directory, "config.json"), "w") as fh:
        json.dump(bench.config.to_dict(), fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------- selection bias


def inject_selection_bias(data: CombinedDataset, p: float, seed: SeedLike = 0, return_kept: bool = False):
    """Drop each observational, untreated, event-free row with probability ``p``.

    A single uniform per row decides the drop (``u < p``), so for a fixed
    seed the rows dropped at a smaller ``p`` are also dropped at any larger
    one.
    """
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    Y = data.outcome
    if not np.all(np.isin(Y, (0.0, 1.0))):
        raise DataValidationError("selection-bias injection needs a binary outcome")
    eligible = (data.study == 1) & (data.treatment == 0) & (Y == 0)
    u = make_rng(seed).random(data.n)
    keep = ~(eligible & (u < p))
    out = data if keep.all() else data.take(np.flatnonzero(keep))
    return (out, keep) if return_kept else out
