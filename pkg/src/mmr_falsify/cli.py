"""Command-line entry point: ``mmr-falsify {falsify,simulate,power-curves,witness}``.

Every subcommand accepts ``--config`` (a JSON experiment config) plus
overrides. Failures print a JSON object ``{"error": ..., "type": ...}`` to
stdout and exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import sys

from .data import load_csv
from .harness import ConfigError, ExperimentConfig, export_power_curves, export_witness, run_experiment
from .kernels import KernelSpec
from .nuisance import NuisanceSpecs, crossfit_nuisances


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmr-falsify", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--methods", help="comma-separated subset of mmr-contrast,mmr-absolute,ate,gate")
        sp.add_argument("--replicates", type=int)
        sp.add_argument("--B", type=int, help="bootstrap draws")
        sp.add_argument("--alpha", type=float)

    f = sub.add_parser("falsify", help="run the tests on a combined CSV")
    common(f)
    f.add_argument("--data", help="CSV with outcome, treatment, study and covariate columns")
    f.add_argument("--subgroups", help="GATE subgroups as col:threshold[,col:threshold]")

    s = sub.add_parser("simulate", help="rejection rates on a simulated design")
    common(s)
    s.add_argument("--oracle-nuisances", action="store_true", help="use the true nuisance functions")

    pc = sub.add_parser("power-curves", help="tabulate closed-form ATE/GATE power")
    pc.add_argument("--config")
    pc.add_argument("--out", required=True)
    pc.add_argument("--alphas", default="0.005,0.01,0.05,0.1")
    pc.add_argument("--delta-max", type=float, default=10.0)
    pc.add_argument("--delta-step", type=float, default=0.01)
    pc.add_argument("--sigma", type=float, default=1.0)
    pc.add_argument("--N", type=int, default=1)

    w = sub.add_parser("witness", help="export the witness function on a 2-D projection")
    w.add_argument("--config")
    w.add_argument("--data", required=True)
    w.add_argument("--projection", required=True, help="two covariate names, comma-separated")
    w.add_argument("--resolution", type=int, default=25)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--out", required=True)
    return p


def _load_config(args, mode: str) -> ExperimentConfig:
    base = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            base = json.load(fh)
    base["mode"] = mode
    for key, attr in (("seed", "seed"), ("output_dir", "out"), ("replicates", "replicates"), ("B", "B"), ("alpha", "alpha")):
        v = getattr(args, attr, None)
        if v is not None:
            base[key] = v
    if getattr(args, "methods", None):
        base["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if getattr(args, "data", None):
        base["data_path"] = args.data
    if getattr(args, "subgroups", None):
        pairs = [s.rsplit(":", 1) for s in args.subgroups.split(",")]
        base["subgroups"] = {"columns": [c for c, _ in pairs], "thresholds": [float(t) for _, t in pairs]}
    if getattr(args, "oracle_nuisances", False):
        base["oracle_nuisances"] = True
    if mode == "falsify" and "replicates" not in base:
        base["replicates"] = 1
    return ExperimentConfig.from_dict(base)


def _summary(report) -> dict:
    out = {"input_hash": report.input_hash, "conditions": []}
    for c in report.conditions:
        entry = {"label": c["label"], "rates": c.get("rates"), "failed": c.get("failed")}
        if c.get("replicates") and len(c["replicates"]) == 1:
            entry["p_values"] = c["replicates"][0]["p_values"]
            entry["error"] = c["replicates"][0]["error"]
        out["conditions"].append(entry)
    return out


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "power-curves":
            import numpy as np

            alphas = [float(a) for a in args.alphas.split(",")]
            deltas = np.round(np.arange(0.0, args.delta_max + args.delta_step / 2, args.delta_step), 10).tolist()
            import os

            os.makedirs(args.out, exist_ok=True)
            path = os.path.join(args.out, "power_curves.csv")
            rows = export_power_curves(alphas, deltas, args.sigma, args.N, path)
            print(json.dumps({"path": path, "rows": len(rows)}))
        elif args.command == "witness":
            cfg = {}
            if args.config:
                with open(args.config) as fh:
                    cfg = json.load(fh)
            data = load_csv(args.data, cfg.get("schema"))
            nuis = crossfit_nuisances(data, NuisanceSpecs.from_dict(cfg.get("nuisance")), seed=args.seed,
                                      K=cfg.get("folds", 3))
            cols = tuple(c.strip() for c in args.projection.split(","))
            if len(cols) != 2:
                raise ConfigError("--projection needs exactly two column names")
            meta = export_witness(data, nuis, cols, args.resolution, KernelSpec.from_dict(cfg.get("kernel")), args.out)
            meta.pop("evaluation")
            print(json.dumps(meta, sort_keys=True))
        else:
            config = _load_config(args, "falsify" if args.command == "falsify" else "simulate-power")
            report = run_experiment(config)
            print(json.dumps(_summary(report), sort_keys=True))
    except (ValueError, OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}))
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
