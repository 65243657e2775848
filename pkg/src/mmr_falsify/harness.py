"""Experiment orchestration: replicate loops, rejection rates and exports.

An experiment is described by a JSON-compatible :class:`ExperimentConfig`.
``falsify`` runs the tests on a CSV (bootstrapping rows across replicates
when ``replicates > 1``), ``simulate-power`` regenerates a synthetic design
per replicate, ``power-curves`` tabulates the closed-form power functions.

Replicate ``r`` uses the integer seed derived from ``(seed, r)`` for every
condition, so conditions are compared on common random numbers.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ._rng import child_seed, make_rng
from .baselines import PowerSpec, ate_test, gate_test, power_ate, power_gate, scenario3_g, subgroup_labels
from .data import CombinedDataset, FoldAssignment, assign_folds, load_csv
from .designs import BaselineShiftDesign, BinaryOutcomeDesign
from .kernels import KernelSpec, gram_matrix, median_heuristic, standardize
from .mmr import ZeroWitnessError, projection_grid, run_mmr_test, witness_eval
from .nuisance import NuisanceSpecs, crossfit_nuisances
from .signals import contrast_signal
from .simgen import SimConfig, generate_benchmark, inject_selection_bias

METHODS = ("mmr-contrast", "mmr-absolute", "ate", "gate")
MODES = ("falsify", "simulate-power", "power-curves")
DESIGNS = ("ihdp", "binary", "baseline-shift")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Everything needed to rerun an experiment; see the module docstring.

    ``design`` selects the generator for ``simulate-power``: ``{"kind":
    "ihdp", ...SimConfig fields}``, ``{"kind": "binary", "n0", "n1"}`` or
    ``{"kind": "baseline-shift", "n", "shift"}``. ``conditions`` is a list of
    overrides applied on top of it; the key ``selection_bias`` injects
    selection bias with that drop probability. ``kernel`` may set
    ``"scale": "median"`` for the median heuristic.
    """

    mode: str = "simulate-power"
    data_path: str | None = None
    schema: dict | None = None
    design: dict = field(default_factory=lambda: {"kind": "ihdp"})
    conditions: list = field(default_factory=lambda: [{}])
    methods: list = field(default_factory=lambda: ["mmr-contrast", "ate", "gate"])
    subgroups: dict | None = None
    kernel: dict = field(default_factory=dict)
    nuisance: dict = field(default_factory=dict)
    oracle_nuisances: bool = False
    folds: int = 3
    B: int = 100
    alpha: float = 0.05
    replicates: int = 100
    seed: int = 0
    output_dir: str | None = None
    max_gram_bytes: float = 3e9
    workers: int = 1
    power_curves: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.mode == "power-curves":
            return
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; expected a subset of {METHODS}")
        if "gate" in self.methods and self.subgroups is None and self.design.get("kind") != "binary":
            raise ConfigError("method 'gate' requires a subgroup spec")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.B < 1:
            raise ConfigError("B must be >= 1")
        if self.mode == "falsify" and not self.data_path:
            raise ConfigError("falsify mode needs data_path")
        if self.mode == "falsify" and self.oracle_nuisances:
            raise ConfigError("oracle nuisances are only available for simulated designs")
        if self.mode == "simulate-power" and self.design.get("kind") not in DESIGNS:
            raise ConfigError(f"unknown design {self.design.get('kind')!r}; expected one of {DESIGNS}")
        if not self.conditions:
            raise ConfigError("conditions must be non-empty (use [{}] for a single run)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None


@dataclass
class ExperimentReport:
    config: dict
    input_hash: str
    conditions: list
    runtime_seconds: float = 0.0

    def rates(self) -> list[dict]:
        return [{"condition": c["label"], **c["rates"]} for c in self.conditions]

    def to_dict(self, include_runtime: bool = True) -> dict:
        d = {"config": self.config, "input_hash": self.input_hash, "conditions": self.conditions}
        if include_runtime:
            d["runtime_seconds"] = self.runtime_seconds
        return d

    def write(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "report.json"), "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
        with open(os.path.join(directory, "rates.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["condition", "method", "rate", "replicates", "failed"])
            for c in self.conditions:
                for m, rate in c["rates"].items():
                    w.writerow([c["label"], m, repr(rate), c["completed"], c["failed"]])


def replicate_seed(master: int, r: int) -> int:
    return int(child_seed(master, r).generate_state(1)[0])


def input_hash(config: ExperimentConfig) -> str:
    """SHA-256 over the canonical config JSON and, in falsify mode, the data file bytes.

    ``output_dir`` and ``workers`` do not affect results and are left out.
    """
    d = {k: v for k, v in config.to_dict().items() if k not in ("output_dir", "workers")}
    h = hashlib.sha256(json.dumps(d, sort_keys=True).encode())
    if config.data_path:
        with open(config.data_path, "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()


# ---------------------------------------------------------------- per-replicate work


def _kernel_for(config: ExperimentConfig, Xs: np.ndarray) -> KernelSpec:
    spec = dict(config.kernel)
    if spec.get("scale") == "median":
        return median_heuristic(Xs, spec.get("kind", "rbf"))
    return KernelSpec.from_dict(spec)


def _subgroups_for(config: ExperimentConfig, data: CombinedDataset) -> np.ndarray:
    sg = config.subgroups
    if sg is None:
        return BinaryOutcomeDesign.subgroups(data)
    cols = []
    for name in sg["columns"]:
        if name not in data.feature_names:
            raise ConfigError(f"unknown subgroup column {name!r}")
        cols.append(data.feature_names.index(name))
    return subgroup_labels(data.covariates, cols, sg["thresholds"])


def _design_sample(config: ExperimentConfig, overrides: dict, seed: int):
    """``(data, oracle_fn)``; ``oracle_fn`` is None when no oracle exists."""
    design = {**config.design, **{k: v for k, v in overrides.items() if k != "selection_bias"}}
    kind = design.pop("kind")
    if kind == "ihdp":
        bench = generate_benchmark(SimConfig.from_dict({**design, "seed": seed}))
        return bench.dataset, bench.oracle_nuisances
    if kind == "binary":
        des = BinaryOutcomeDesign(**design)
    else:
        des = BaselineShiftDesign(**design)
    data = des.sample(seed)
    return data, lambda: des.oracle_nuisances(data)


def _design_size(config: ExperimentConfig, overrides: dict) -> int:
    design = {**config.design, **{k: v for k, v in overrides.items() if k != "selection_bias"}}
    kind = design.pop("kind")
    if kind == "ihdp":
        c = SimConfig.from_dict(design)
        return c.n0 + c.n1
    if kind == "binary":
        d = BinaryOutcomeDesign(**design)
        return d.n0 + d.n1
    return BaselineShiftDesign(**design).n


def run_methods(config: ExperimentConfig, data: CombinedDataset, nuis, seed: int) -> dict:
    """p-value and decision per configured method on one dataset."""
    out = {}
    K = None
    if any(m.startswith("mmr") for m in config.methods):
        Xs = standardize(data.covariates)
        kernel = _kernel_for(config, Xs)
        K = gram_matrix(kernel, Xs)
    for m in config.methods:
        if m in ("mmr-contrast", "mmr-absolute"):
            res = run_mmr_test(data, nuis, kernel, config.B, config.alpha, seed, m.split("-")[1], K=K)
            out[m] = (res.p_value, res.reject)
        elif m == "ate":
            res = ate_test(data, nuis, config.alpha)
            out[m] = (res.p_value, res.reject)
        else:
            res = gate_test(data, nuis, _subgroups_for(config, data), config.alpha)
            out[m] = (res.p_value, res.reject)
    return out


def _one_replicate(config: ExperimentConfig, overrides: dict, r: int, base_data=None) -> dict:
    seed = replicate_seed(config.seed, r)
    rec = {"index": r, "seed": seed, "p_values": {}, "reject": {}, "error": None}
    try:
        if config.mode == "falsify":
            data = base_data
            if config.replicates > 1:
                rng = make_rng(seed)
                rows = np.concatenate([rng.choice(idx, idx.size) for idx in (data.rct_index, data.obs_index)])
                data = data.take(rows)
            oracle = None
        else:
            data, oracle = _design_sample(config, overrides, seed)
        folds = assign_folds(data.n, config.folds, child_seed(seed, 0))
        p = overrides.get("selection_bias")
        if p is not None:
            data, keep = inject_selection_bias(data, p, child_seed(seed, 1), return_kept=True)
            # keep the fold labels of surviving rows so conditions share folds
            folds = FoldAssignment(folds.fold_of_row[keep], folds.K)
        if config.oracle_nuisances:
            if p:
                raise ConfigError("oracle nuisances are undefined after selection-bias injection")
            nuis = oracle()
        else:
            specs = NuisanceSpecs.from_dict(config.nuisance)
            nuis = crossfit_nuisances(data, specs, folds, seed=child_seed(seed, 2))
        for m, (pv, rej) in run_methods(config, data, nuis, seed).items():
            rec["p_values"][m] = pv
            rec["reject"][m] = rej
    except (ValueError, np.linalg.LinAlgError) as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
    return rec


def _condition_label(overrides: dict) -> str:
    return ",".join(f"{k}={v}" for k, v in sorted(overrides.items())) or "default"


def aggregate(records: Sequence[dict], methods: Sequence[str]) -> dict:
    ok = [r for r in records if r["error"] is None]
    rates = {m: (float(np.mean([r["reject"][m] for r in ok])) if ok else float("nan")) for m in methods}
    return {"rates": rates, "completed": len(ok), "failed": len(records) - len(ok)}


def check_memory(config: ExperimentConfig, n: int) -> None:
    need = 8.0 * n * n
    if need > config.max_gram_bytes:
        raise ConfigError(
            f"a Gram matrix for n={n} needs {need / 1e9:.2f} GB, above max_gram_bytes="
            f"{config.max_gram_bytes / 1e9:.2f} GB"
        )


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    t0 = time.perf_counter()
    if config.mode == "power-curves":
        rows = power_curve_rows(**_power_curve_args(config.power_curves))
        report = ExperimentReport(config.to_dict(), input_hash(config), [{"label": "power-curves", "rows": rows}])
        if config.output_dir:
            os.makedirs(config.output_dir, exist_ok=True)
            _write_power_csv(rows, os.path.join(config.output_dir, "power_curves.csv"))
        return report

    base_data = None
    if config.mode == "falsify":
        base_data = load_csv(config.data_path, config.schema)
        sizes = [base_data.n]
    else:
        sizes = [_design_size(config, c) for c in config.conditions]
    if any(m.startswith("mmr") for m in config.methods):
        check_memory(config, max(sizes))

    conditions = []
    for overrides in config.conditions:
        args = [(config, overrides, r, base_data) for r in range(config.replicates)]
        if config.workers > 1:
            with ProcessPoolExecutor(config.workers) as ex:
                records = list(ex.map(_one_replicate, *zip(*args)))
        else:
            records = [_one_replicate(*a) for a in args]
        conditions.append({"label": _condition_label(overrides), "overrides": overrides,
                           **aggregate(records, config.methods), "replicates": records})
    report = ExperimentReport(config.to_dict(), input_hash(config), conditions, time.perf_counter() - t0)
    if config.output_dir:
        report.write(config.output_dir)
    return report


# ---------------------------------------------------------------- exports


def export_witness(
    data: CombinedDataset,
    nuisances,
    projection: tuple[str, str],
    resolution: int = 25,
    kernel: KernelSpec | None = None,
    output_dir: str | None = None,
    prefix: str = "witness",
) -> dict:
    """Witness of the contrast signal on a 2-D projection grid.

    Off-grid covariates sit at their pooled medians. Writes
    ``<prefix>.csv`` and ``<prefix>.json``; the metadata records
    ``status = "zero witness"`` instead of failing when the signal vanishes.
    """
    for name in projection:
        if name not in data.feature_names:
            raise ConfigError(f"unknown projection column {name!r}")
    cols = tuple(data.feature_names.index(c) for c in projection)
    grid = projection_grid(data.covariates, cols, resolution)
    psi = contrast_signal(data, nuisances)
    kernel = kernel or KernelSpec()
    meta = {"projection": list(projection), "resolution": resolution, "kernel": kernel.to_dict(),
            "n": data.n, "grid_points": int(grid.shape[0])}
    try:
        wit = witness_eval(psi, data.covariates, kernel, grid)
    except ZeroWitnessError as exc:
        meta.update(status="zero witness", message=str(exc))
        wit = None
    else:
        meta.update(status="ok", normalizer=wit.normalizer,
                    rms=float(np.sqrt(np.mean(wit.values**2))),
                    positive_fraction=float(np.mean(wit.values > 0)))
    if output_dir:
        os.makedirs(output_dir, exist_ok=True)
        if wit is not None:
            with open(os.path.join(output_dir, f"{prefix}.csv"), "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow([*projection, "witness"])
                for q, v in zip(grid, wit.values):
                    w.writerow([repr(float(q[cols[0]])), repr(float(q[cols[1]])), repr(float(v))])
        with open(os.path.join(output_dir, f"{prefix}.json"), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
    meta["evaluation"] = wit
    return meta


def _power_curve_args(d: dict) -> dict:
    return {
        "alphas": d.get("alphas", [0.005, 0.01, 0.05, 0.1]),
        "deltas": d.get("deltas", np.round(np.arange(0, 10.001, 0.01), 10).tolist()),
        "sigma": d.get("sigma", 1.0),
        "N": d.get("N", 1),
    }


def power_curve_rows(alphas, deltas, sigma: float = 1.0, N: int = 1) -> list[dict]:
    """Closed-form power with equal drift ``delta`` in both subgroups.

    ``delta_star = delta * sqrt(N) / sigma`` is the standardized drift at
    which ``g`` is evaluated.
    """
    if len(deltas) == 0 or len(alphas) == 0:
        raise ValueError("empty alpha list or delta grid")
    rows = []
    for a in alphas:
        for d in deltas:
            spec = PowerSpec(d, d, sigma, N, a)
            ds = abs(d) * np.sqrt(N) / sigma
            rows.append({"alpha": a, "delta": d, "delta_star": float(ds), "power_ate": power_ate(spec),
                         "power_gate": power_gate(spec), "g": scenario3_g(ds, a)})
    return rows


def _write_power_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) for k, v in r.items()})


def export_power_curves(alphas, deltas, sigma: float, N: int, path) -> list[dict]:
    rows = power_curve_rows(alphas, deltas, sigma, N)
    _write_power_csv(rows, path)
    return rows
