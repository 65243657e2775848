"""Combined RCT + observational dataset, fold assignment and CSV I/O.

Study convention: ``S = 0`` marks a randomized-trial row, ``S = 1`` an
observational row. This is fixed throughout the package.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ._rng import SeedLike, make_rng


class DataValidationError(ValueError):
    """Raised when a dataset violates the combined-study invariants."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CombinedDataset:
    """Rows of ``(X, A, Y, S)`` pooled across the RCT and the observational study.

    Arrays are copied on construction and frozen, so instances can be shared
    between threads or processes without defensive copies.
    """

    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    study: np.ndarray
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = np.array(self.covariates, dtype=float, copy=True)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise DataValidationError("covariates must be a 2-D matrix")
        n = X.shape[0]
        A = np.array(self.treatment, copy=True).ravel()
        Y = np.array(self.outcome, dtype=float, copy=True).ravel()
        S = np.array(self.study, copy=True).ravel()
        if not (len(A) == len(Y) == len(S) == n):
            raise DataValidationError(
                f"column groups differ in length: covariates={n}, treatment={len(A)}, "
                f"outcome={len(Y)}, study={len(S)}"
            )
        if n < 2:
            raise DataValidationError(f"need at least 2 rows, got {n}")
        for name, col in (("treatment", A), ("study", S)):
            bad = np.flatnonzero(~np.isin(col, (0, 1)))
            if bad.size:
                raise DataValidationError(
                    f"non-binary {name} at row {int(bad[0])}: {col[bad[0]]!r}"
                )
        A = A.astype(np.int8)
        S = S.astype(np.int8)
        if not np.all(np.isfinite(X)):
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise DataValidationError(f"non-finite covariate at row {r}, column {c}")
        if not np.all(np.isfinite(Y)):
            raise DataValidationError(
                f"non-finite outcome at row {int(np.flatnonzero(~np.isfinite(Y))[0])}"
            )
        if not np.any(S == 0):
            raise DataValidationError("RCT stratum empty (no rows with S=0)")
        if not np.any(S == 1):
            raise DataValidationError("observational stratum empty (no rows with S=1)")
        for s, label in ((0, "RCT"), (1, "observational")):
            arms = set(np.unique(A[S == s]).tolist())
            if arms != {0, 1}:
                missing = ({0, 1} - arms).pop()
                raise DataValidationError(f"{label} stratum has no rows with A={missing}")

        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataValidationError(
                f"{len(names)} feature names for {X.shape[1]} covariate columns"
            )
        object.__setattr__(self, "covariates", _readonly(X))
        object.__setattr__(self, "treatment", _readonly(A))
        object.__setattr__(self, "outcome", _readonly(Y))
        object.__setattr__(self, "study", _readonly(S))
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    @property
    def n0(self) -> int:
        return int(np.sum(self.study == 0))

    @property
    def n1(self) -> int:
        return int(np.sum(self.study == 1))

    @property
    def rct_index(self) -> np.ndarray:
        return np.flatnonzero(self.study == 0)

    @property
    def obs_index(self) -> np.ndarray:
        return np.flatnonzero(self.study == 1)

    def column(self, name: str) -> np.ndarray:
        try:
            j = self.feature_names.index(name)
        except ValueError:
            raise KeyError(f"unknown covariate {name!r}") from None
        return self.covariates[:, j]

    def take(self, rows) -> "CombinedDataset":
        """Row subset (boolean mask or integer index), re-validated."""
        rows = np.asarray(rows)
        return CombinedDataset(
            self.covariates[rows],
            self.treatment[rows],
            self.outcome[rows],
            self.study[rows],
            self.feature_names,
        )

    def drop_columns(self, names: Sequence[str]) -> "CombinedDataset":
        keep = [j for j, nm in enumerate(self.feature_names) if nm not in set(names)]
        return CombinedDataset(
            self.covariates[:, keep],
            self.treatment,
            self.outcome,
            self.study,
            tuple(self.feature_names[j] for j in keep),
        )

    @classmethod
    def concat(cls, parts: Sequence["CombinedDataset"]) -> "CombinedDataset":
        names = parts[0].feature_names
        if any(p.feature_names != names for p in parts):
            raise DataValidationError("cannot concatenate datasets with different columns")
        return cls(
            np.vstack([p.covariates for p in parts]),
            np.concatenate([p.treatment for p in parts]),
            np.concatenate([p.outcome for p in parts]),
            np.concatenate([p.study for p in parts]),
            names,
        )


@dataclass(frozen=True)
class FoldAssignment:
    fold_of_row: np.ndarray
    K: int

    def rows_in(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row == k)

    def rows_out(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row != k)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of_row, minlength=self.K)


def assign_folds(n: int, K: int = 3, seed: SeedLike = 0) -> FoldAssignment:
    """Balanced random K-fold split: fold sizes differ by at most one."""
    if K < 2:
        raise ValueError(f"need K >= 2 folds, got {K}")
    if K > n:
        raise ValueError(f"cannot split {n} rows into {K} folds")
    perm = make_rng(seed).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % K
    return FoldAssignment(_readonly(folds), K)


# ---------------------------------------------------------------- CSV I/O

DEFAULT_SCHEMA = {"outcome": "Y", "treatment": "A", "study": "S"}


def load_csv(path: str | os.PathLike, schema: Mapping[str, object] | None = None) -> CombinedDataset:
    """Read a one-row-per-subject CSV with a header row.

    ``schema`` maps ``outcome``, ``treatment`` and ``study`` to column names.
    An optional ``covariates`` list selects covariate columns; by default all
    remaining columns are used, in file order. Empty cells are rejected, not
    imputed.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataValidationError(f"{path}: empty file (header row required)") from None
        rows = [r for r in reader if r]

    def col_index(role: str) -> int:
        name = schema[role]
        if name not in header:
            raise DataValidationError(f"{path}: missing {role} column {name!r}")
        return header.index(name)

    iy, ia, is_ = col_index("outcome"), col_index("treatment"), col_index("study")
    if schema.get("covariates") is not None:
        cov_names = list(schema["covariates"])
        for c in cov_names:
            if c not in header:
                raise DataValidationError(f"{path}: missing covariate column {c!r}")
        icov = [header.index(c) for c in cov_names]
    else:
        icov = [j for j in range(len(header)) if j not in (iy, ia, is_)]
    cols = [iy, ia, is_] + icov

    values = np.empty((len(rows), len(cols)))
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DataValidationError(
                f"{path}: row {r} has {len(row)} cells, header has {len(header)}"
            )
        for c, j in enumerate(cols):
            cell = row[j].strip()
            try:
                v = float(cell)
            except ValueError:
                raise DataValidationError(
                    f"{path}: non-numeric cell at row {r}, column {header[j]!r}: {cell!r}"
                ) from None
            if not math.isfinite(v):
                raise DataValidationError(
                    f"{path}: non-finite cell at row {r}, column {header[j]!r}"
                )
            values[r, c] = v

    if len(rows) < 2:
        raise DataValidationError(f"{path}: need at least 2 rows, got {len(rows)}")
    for c, role in ((1, "treatment"), (2, "study")):
        bad = np.flatnonzero(~np.isin(values[:, c], (0.0, 1.0)))
        if bad.size:
            raise DataValidationError(
                f"{path}: non-binary {role} at row {int(bad[0])}: {values[bad[0], c]!r}"
            )
    return CombinedDataset(
        values[:, 3:],
        values[:, 1].astype(np.int8),
        values[:, 0],
        values[:, 2].astype(np.int8),
        tuple(header[j] for j in icov),
    )


def write_csv(data: CombinedDataset, path: str | os.PathLike, schema: Mapping[str, str] | None = None) -> None:
    """Write ``data`` so that :func:`load_csv` reproduces it bit-exactly."""
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([schema["outcome"], schema["treatment"], schema["study"], *data.feature_names])
        for i in range(data.n):
            # repr() is the shortest string that round-trips a double
            w.writerow(
                [repr(float(data.outcome[i])), int(data.treatment[i]), int(data.study[i])]
                + [repr(float(v)) for v in data.covariates[i]]
            )
