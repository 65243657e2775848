"""Rejection rates as selection bias is injected into the observational study.

Untreated, event-free observational rows are dropped with probability p.
The default sizes are small so the script finishes in a couple of minutes;
pass ``--replicates 100 --n 4000`` for the full-size sweep.

    python demos/selection_bias_sweep.py [--replicates R] [--n N]
"""

import argparse

from mmr_falsify.harness import ExperimentConfig, run_experiment

parser = argparse.ArgumentParser()
parser.add_argument("--replicates", type=int, default=10)
parser.add_argument("--n", type=int, default=1500, help="rows per study")
args = parser.parse_args()

logit = {"kind": "logistic-regression"}
cfg = ExperimentConfig(
    design={"kind": "binary", "n0": args.n, "n1": args.n},
    conditions=[{"selection_bias": p} for p in (0.0, 0.05, 0.10, 0.15)],
    methods=["mmr-contrast", "ate", "gate"],
    kernel={"kind": "rbf", "scale": "median"},
    nuisance={"outcome": logit, "treatment": logit, "selection": logit},
    replicates=args.replicates,
    seed=0,
)
report = run_experiment(cfg)
print(f"{'condition':>20}  {'mmr-contrast':>12}  {'ate':>6}  {'gate':>6}")
for row in report.rates():
    print(f"{row['condition']:>20}  {row['mmr-contrast']:12.2f}  {row['ate']:6.2f}  {row['gate']:6.2f}")
print(f"{report.runtime_seconds:.0f}s for {args.replicates} replicates per condition")
