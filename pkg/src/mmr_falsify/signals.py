"""Instance-wise CATE signals.

``psi0`` uses RCT outcomes only (inverse-probability contrast with the known
assignment rate); ``psi1`` is the doubly-robust transported signal built from
observational outcomes. Both have conditional mean equal to the RCT CATE
under the causal assumptions, so their difference has conditional mean zero.
The outcome-pair variants do the same per treatment arm.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .data import CombinedDataset
from .nuisance import NuisanceEstimates


@dataclass(frozen=True)
class SignalVector:
    """``values`` has shape ``(n,)`` for ``contrast`` and ``(n, 2)`` for ``outcome-pair``.

    Column ``a`` of an outcome-pair signal refers to treatment arm ``a``.
    """

    kind: Literal["contrast", "outcome-pair"]
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if self.kind == "contrast" and v.ndim != 1:
            raise ValueError("contrast signals are 1-D")
        if self.kind == "outcome-pair" and (v.ndim != 2 or v.shape[1] != 2):
            raise ValueError("outcome-pair signals have shape (n, 2)")
        if self.kind not in ("contrast", "outcome-pair"):
            raise ValueError(f"unknown signal kind {self.kind!r}")
        if not np.all(np.isfinite(v)):
            raise ValueError("signal has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.shape[0]

    def as_matrix(self) -> np.ndarray:
        """``(n, c)`` view: one column for contrasts, two for outcome pairs."""
        return self.values[:, None] if self.kind == "contrast" else self.values


def _check(data: CombinedDataset, nuis: NuisanceEstimates) -> None:
    if nuis.n != data.n:
        raise ValueError(f"nuisances cover {nuis.n} rows, dataset has {data.n}")


def rct_contrast_signal(data: CombinedDataset, nuis: NuisanceEstimates) -> SignalVector:
    _check(data, nuis)
    rct = data.study == 0
    A, Y, p = data.treatment, data.outcome, nuis.p_assign
    contrast = np.where(A == 1, 1.0 / p, -1.0 / (1.0 - p))
    return SignalVector("contrast", np.where(rct, Y * contrast / nuis.pi_rct, 0.0))


def obs_contrast_signal(data: CombinedDataset, nuis: NuisanceEstimates) -> SignalVector:
    _check(data, nuis)
    A, Y, pi, e = data.treatment, data.outcome, nuis.pi_rct, nuis.e_obs
    surface = nuis.mu1 - nuis.mu0
    ipw = np.where(A == 1, (Y - nuis.mu1) / e, -(Y - nuis.mu0) / (1.0 - e))
    # 1/pi * pi/(1-pi) on observational rows
    values = np.where(data.study == 0, surface / pi, ipw / (1.0 - pi))
    return SignalVector("contrast", values)


def contrast_signal_difference(psi1: SignalVector, psi0: SignalVector) -> SignalVector:
    if psi1.kind != "contrast" or psi0.kind != "contrast":
        raise ValueError("contrast_signal_difference needs two contrast signals")
    if len(psi1) != len(psi0):
        raise ValueError(f"length mismatch: {len(psi1)} vs {len(psi0)}")
    return SignalVector("contrast", psi1.values - psi0.values)


def outcome_pair_signals(data: CombinedDataset, nuis: NuisanceEstimates) -> tuple[SignalVector, SignalVector]:
    """Per-arm signals ``(psi0_pair, psi1_pair)``, columns ordered ``a = 0, 1``."""
    _check(data, nuis)
    A, Y, S = data.treatment, data.outcome, data.study
    pi, e, p = nuis.pi_rct, nuis.e_obs, nuis.p_assign
    rct = S == 0
    psi0 = np.zeros((data.n, 2))
    psi1 = np.zeros((data.n, 2))
    for a, mu, assign, prop in ((0, nuis.mu0, 1.0 - p, 1.0 - e), (1, nuis.mu1, p, e)):
        arm = A == a
        psi0[:, a] = np.where(rct & arm, Y / (pi * assign), 0.0)
        psi1[:, a] = np.where(rct, mu / pi, np.where(arm, (Y - mu) / (prop * (1.0 - pi)), 0.0))
    return SignalVector("outcome-pair", psi0), SignalVector("outcome-pair", psi1)


def pair_signal_difference(psi1: SignalVector, psi0: SignalVector) -> SignalVector:
    if psi1.kind != "outcome-pair" or psi0.kind != "outcome-pair":
        raise ValueError("pair_signal_difference needs two outcome-pair signals")
    if len(psi1) != len(psi0):
        raise ValueError(f"length mismatch: {len(psi1)} vs {len(psi0)}")
    return SignalVector("outcome-pair", psi1.values - psi0.values)


def contrast_signal(data: CombinedDataset, nuis: NuisanceEstimates) -> SignalVector:
    """``psi = psi1 - psi0``."""
    return contrast_signal_difference(obs_contrast_signal(data, nuis), rct_contrast_signal(data, nuis))


def absolute_signal(data: CombinedDataset, nuis: NuisanceEstimates) -> SignalVector:
    """Vector difference of the outcome-pair signals."""
    psi0, psi1 = outcome_pair_signals(data, nuis)
    return pair_signal_difference(psi1, psi0)


def write_signals_csv(path: str | os.PathLike, data: CombinedDataset, **signals: SignalVector) -> None:
    """Audit export: ``row, S, A`` then one column per signal component."""
    header = ["row", "S", "A"]
    cols = []
    for name, sig in signals.items():
        if len(sig) != data.n:
            raise ValueError(f"signal {name!r} has {len(sig)} rows, dataset has {data.n}")
        if sig.kind == "contrast":
            header.append(name)
            cols.append(sig.values)
        else:
            header += [f"{name}_a0", f"{name}_a1"]
            cols += [sig.values[:, 0], sig.values[:, 1]]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(data.n):
            w.writerow([i, int(data.study[i]), int(data.treatment[i])] + [repr(float(c[i])) for c in cols])
