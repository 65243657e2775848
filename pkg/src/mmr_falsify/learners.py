"""Nuisance learners: ridge / logistic regression and gradient-boosted trees.

These are deliberately small: enough to estimate outcome surfaces and
propensities inside cross-fitting, deterministic for a fixed seed, and
nothing else (no early stopping, no categorical handling).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from ._rng import SeedLike, make_rng

EPS_CLIP = 0.01

Kind = Literal["linear-regression", "logistic-regression", "gradient-boosted-trees"]
KINDS = ("linear-regression", "logistic-regression", "gradient-boosted-trees")


@dataclass(frozen=True)
class GBTParams:
    learning_rate: float = 0.01
    n_estimators: int = 50
    max_depth: int = 2
    min_samples_leaf: int = 50
    min_samples_split: int = 50
    max_features: Literal["sqrt", "all"] = "sqrt"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.n_estimators < 1 or self.max_depth < 1:
            raise ValueError("n_estimators and max_depth must be >= 1")
        if self.min_samples_leaf < 1 or self.min_samples_split < 1:
            raise ValueError("min_samples_leaf and min_samples_split must be >= 1")
        if self.max_features not in ("sqrt", "all"):
            raise ValueError(f"max_features must be 'sqrt' or 'all', got {self.max_features!r}")


@dataclass(frozen=True)
class LearnerSpec:
    """Learner configuration.

    ``ridge_penalty=None`` means 0 for linear regression and 1.0 for logistic
    regression (the usual unit L2 default for logistic fits). ``objective``
    only matters for boosted trees: ``auto`` picks log-loss when the target
    is 0/1 and squared error otherwise.
    """

    kind: Kind = "gradient-boosted-trees"
    gbt: GBTParams = field(default_factory=GBTParams)
    ridge_penalty: float | None = None
    objective: Literal["auto", "regression", "classification"] = "auto"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}")
        if self.ridge_penalty is not None and self.ridge_penalty < 0:
            raise ValueError("ridge_penalty must be non-negative")
        if self.objective not in ("auto", "regression", "classification"):
            raise ValueError(f"unknown objective {self.objective!r}")

    @property
    def penalty(self) -> float:
        if self.ridge_penalty is not None:
            return float(self.ridge_penalty)
        return 1.0 if self.kind == "logistic-regression" else 0.0

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerSpec":
        d = dict(d)
        gbt = d.pop("gbt_params", d.pop("gbt", None)) or {}
        return cls(gbt=GBTParams(**gbt), **d)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "gbt_params": self.gbt.__dict__.copy(),
            "ridge_penalty": self.ridge_penalty,
            "objective": self.objective,
        }


LINEAR = LearnerSpec("linear-regression")
LOGISTIC = LearnerSpec("logistic-regression")
GBT = LearnerSpec("gradient-boosted-trees")


def clip_probability(p: np.ndarray, eps: float = EPS_CLIP) -> np.ndarray:
    return np.clip(p, eps, 1.0 - eps)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _is_binary(y: np.ndarray) -> bool:
    return bool(np.all((y == 0) | (y == 1)))


# ------------------------------------------------------------ linear models


class _Standardizer:
    def __init__(self, X: np.ndarray):
        self.mean = X.mean(axis=0)
        sd = X.std(axis=0)
        # constant columns carry no information; map them to zero
        self.scale = np.where(sd > 0, sd, 1.0)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


@dataclass(frozen=True)
class FittedLearner:
    """Fitted model; ``mode`` is ``mean`` or ``probability``."""

    kind: str
    mode: str
    n_features: int
    state: dict
    train_loss: tuple[float, ...] = ()
    gradient_norm: float | None = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        return predict(self, X)


def _fit_linear(X, y, penalty):
    st = _Standardizer(X)
    Z = st(X)
    m, d = Z.shape
    intercept = y.mean()
    yc = y - intercept
    if d == 0:
        coef = np.zeros(0)
    elif penalty > 0:
        coef = np.linalg.solve(Z.T @ Z + penalty * np.eye(d), Z.T @ yc)
    else:
        coef = np.linalg.lstsq(Z, yc, rcond=None)[0]
    return {"std": st, "intercept": intercept, "coef": coef}


def _logistic_objective(w, b, Z, y, penalty):
    eta = Z @ w + b
    # log(1 + exp(eta)) - y * eta, written stably
    loss = np.sum(np.logaddexp(0.0, eta) - y * eta) + 0.5 * penalty * w @ w
    p = _sigmoid(eta)
    r = p - y
    grad_w = Z.T @ r + penalty * w
    grad_b = r.sum()
    return loss, np.concatenate([[grad_b], grad_w]), p


def _fit_logistic(X, y, penalty, tol=1e-10, max_iter=100):
    st = _Standardizer(X)
    Z = st(X)
    m, d = Z.shape
    w = np.zeros(d)
    ybar = np.clip(y.mean(), 1e-12, 1 - 1e-12)
    b = np.log(ybar / (1 - ybar))
    loss, grad, p = _logistic_objective(w, b, Z, y, penalty)
    Z1 = np.hstack([np.ones((m, 1)), Z])
    reg = np.diag(np.r_[0.0, np.full(d, penalty)])
    for _ in range(max_iter):
        if np.linalg.norm(grad) < tol:
            break
        H = (Z1 * (p * (1 - p))[:, None]).T @ Z1 + reg
        step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        while True:
            b_new, w_new = b - t * step[0], w - t * step[1:]
            new_loss, new_grad, new_p = _logistic_objective(w_new, b_new, Z, y, penalty)
            if new_loss <= loss + 1e-12 * abs(loss) or t < 1e-10:
                break
            t *= 0.5
        b, w, loss, grad, p = b_new, w_new, new_loss, new_grad, new_p
    return {"std": st, "intercept": b, "coef": w}, float(np.linalg.norm(grad))


# ------------------------------------------------------------ boosted trees


@dataclass
class _Tree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                return node
            idx = rows[internal]
            nd = node[idx]
            go_left = X[idx, f[internal]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


def _best_split(order, in_node, X, r, n_feat_try, min_leaf, rng, n_features):
    """Best squared-error split for the rows flagged in ``in_node``.

    Ties go to the lowest feature index, then the lowest threshold.
    """
    m = int(in_node.sum())
    if n_feat_try < n_features:
        candidates = np.sort(rng.choice(n_features, size=n_feat_try, replace=False))
    else:
        candidates = np.arange(n_features)
    total = r[in_node].sum()
    base = total * total / m
    best = (0.0, -1, 0.0)
    for j in candidates:
        idx = order[j][in_node[order[j]]]
        xs = X[idx, j]
        cs = np.cumsum(r[idx])[:-1]
        n_left = np.arange(1, m)
        valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (m - n_left >= min_leaf)
        if not valid.any():
            continue
        gain = cs * cs / n_left + (total - cs) ** 2 / (m - n_left) - base
        gain = np.where(valid, gain, -np.inf)
        k = int(np.argmax(gain))
        if gain[k] > best[0]:
            best = (float(gain[k]), int(j), 0.5 * (xs[k] + xs[k + 1]))
    return best


def _grow_tree(X, order, r, hess, params: GBTParams, rng, newton: bool) -> _Tree:
    m, d = X.shape
    n_try = max(1, int(np.sqrt(d))) if params.max_features == "sqrt" else d
    feature, threshold, left, right, value = [], [], [], [], []

    def leaf_value(mask):
        if newton:
            den = hess[mask].sum()
            return r[mask].sum() / den if den > 1e-12 else 0.0
        return r[mask].mean()

    def new_node():
        for lst, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (value, 0.0)):
            lst.append(v)
        return len(feature) - 1

    stack = [(new_node(), np.ones(m, dtype=bool), 0)]
    while stack:
        node, mask, depth = stack.pop()
        count = int(mask.sum())
        split = None
        if depth < params.max_depth and count >= params.min_samples_split and count >= 2 * params.min_samples_leaf:
            gain, j, thr = _best_split(order, mask, X, r, n_try, params.min_samples_leaf, rng, d)
            if j >= 0 and gain > 0:
                split = (j, thr)
        if split is None:
            value[node] = leaf_value(mask)
            continue
        j, thr = split
        goes_left = X[:, j] <= thr
        lnode, rnode = new_node(), new_node()
        feature[node], threshold[node], left[node], right[node] = j, thr, lnode, rnode
        stack.append((rnode, mask & ~goes_left, depth + 1))
        stack.append((lnode, mask & goes_left, depth + 1))
    return _Tree(
        np.array(feature), np.array(threshold), np.array(left), np.array(right), np.array(value)
    )


def _fit_gbt(X, y, params: GBTParams, classification: bool, rng):
    m, d = X.shape
    order = [np.argsort(X[:, j], kind="stable") for j in range(d)]
    if classification:
        ybar = np.clip(y.mean(), 1e-12, 1 - 1e-12)
        f0 = float(np.log(ybar / (1 - ybar)))
    else:
        f0 = float(y.mean())
    F = np.full(m, f0)
    trees = []

    def loss(F):
        if classification:
            return float(np.mean(np.logaddexp(0.0, F) - y * F))
        return float(np.mean((y - F) ** 2))

    losses = [loss(F)]
    for _ in range(params.n_estimators):
        if classification:
            p = _sigmoid(F)
            r, h = y - p, p * (1 - p)
        else:
            r, h = y - F, None
        tree = _grow_tree(X, order, r, h, params, rng, newton=classification)
        F = F + params.learning_rate * tree.predict(X)
        trees.append(tree)
        losses.append(loss(F))
    return {"f0": f0, "trees": trees, "lr": params.learning_rate}, tuple(losses)


# ------------------------------------------------------------ public API


def fit(spec: LearnerSpec, X: np.ndarray, y: np.ndarray, seed: SeedLike = 0) -> FittedLearner:
    """Fit a learner; deterministic for a fixed ``seed``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if X.shape[0] < 2:
        raise ValueError(f"need at least 2 training rows, got {X.shape[0]}")
    d = X.shape[1]

    if spec.kind == "linear-regression":
        return FittedLearner(spec.kind, "mean", d, _fit_linear(X, y, spec.penalty))

    if spec.kind == "logistic-regression":
        if not _is_binary(y):
            raise ValueError("logistic regression needs a 0/1 target")
        if y.min() == y.max():
            # degenerate target: constant probability, clipped at predict time
            state = {"std": _Standardizer(X), "intercept": 0.0, "coef": np.zeros(d), "const": y[0]}
            return FittedLearner(spec.kind, "probability", d, state, gradient_norm=0.0)
        state, gnorm = _fit_logistic(X, y, spec.penalty)
        return FittedLearner(spec.kind, "probability", d, state, gradient_norm=gnorm)

    classification = {
        "auto": _is_binary(y),
        "classification": True,
        "regression": False,
    }[spec.objective]
    if classification and not _is_binary(y):
        raise ValueError("boosted-tree classification needs a 0/1 target")
    state, losses = _fit_gbt(X, y, spec.gbt, classification, make_rng(seed))
    return FittedLearner(
        spec.kind, "probability" if classification else "mean", d, state, train_loss=losses
    )


def raw_predict(model: FittedLearner, X: np.ndarray) -> np.ndarray:
    """Unclipped predictions (probabilities or means)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} columns, got {X.shape[1]}")
    if X.shape[0] == 0:
        return np.empty(0)
    s = model.state
    if model.kind == "linear-regression":
        return s["intercept"] + s["std"](X) @ s["coef"]
    if model.kind == "logistic-regression":
        if "const" in s:
            return np.full(X.shape[0], float(s["const"]))
        return _sigmoid(s["intercept"] + s["std"](X) @ s["coef"])
    F = np.full(X.shape[0], s["f0"])
    for tree in s["trees"]:
        F += s["lr"] * tree.predict(X)
    return _sigmoid(F) if model.mode == "probability" else F


def predict(model: FittedLearner, X: np.ndarray, eps: float = EPS_CLIP) -> np.ndarray:
    """Predictions; probability-mode outputs are clipped to ``[eps, 1 - eps]``."""
    out = raw_predict(model, X)
    return clip_probability(out, eps) if model.mode == "probability" else out
