"""End-to-end acceptance checks at their stated Monte Carlo sizes.

Each test records a one-line verdict that is printed in the terminal
summary. The full module takes roughly an hour on one core; the slowest part
is the size-ratio sweep with cross-fitted nuisances.
"""

import math

import numpy as np
import pytest

from mmr_falsify._rng import child_seed
from mmr_falsify.baselines import PowerSpec, power_ate, power_gate, scenario3_g, simulate_power
from mmr_falsify.designs import gaussian_signals, step_bias_signals
from mmr_falsify.harness import ExperimentConfig, run_experiment
from mmr_falsify.kernels import KernelSpec, gram_matrix, standardize
from mmr_falsify.mmr import bootstrap_from_weights, bootstrap_weights, mmr_statistic, witness_eval

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

LOGIT = {"kind": "logistic-regression"}
IHDP_SUBGROUPS = {"columns": ["bw", "b.marr"], "thresholds": [2000.0, 1.0]}


def rates(report, label_index=0):
    return report.conditions[label_index]["rates"]


def se_diff(p, q, R):
    return math.sqrt((p * (1 - p) + q * (1 - q)) / R)


def test_c1_nominal_level_oracle(criterion):
    cfg = ExperimentConfig(design={"kind": "ihdp", "n0": 2955, "size_ratio": 1.0, "c_z": 0},
                           methods=["mmr-contrast"], oracle_nuisances=True, replicates=200, seed=0)
    rep = run_experiment(cfg)
    r = rates(rep)["mmr-contrast"]
    ok = rep.conditions[0]["failed"] == 0 and 0.021 <= r <= 0.087
    assert criterion(1, ok, f"oracle MMR-Contrast rate {r:.3f}, band [0.021, 0.087], runtime {rep.runtime_seconds:.0f}s"), r
    assert rep.runtime_seconds < 20 * 60


def test_c2_estimated_signals_shrink(criterion):
    ordered, high = [], []
    for seed in range(5):
        cfg = ExperimentConfig(design={"kind": "ihdp", "n0": 2955, "c_z": 0},
                               conditions=[{"size_ratio": 0.1}, {"size_ratio": 1.0}],
                               methods=["mmr-contrast"], replicates=200, seed=seed)
        rep = run_experiment(cfg)
        lo_s, hi_s = rates(rep, 0)["mmr-contrast"], rates(rep, 1)["mmr-contrast"]
        ordered.append(hi_s <= lo_s)
        high.append(hi_s)
        assert all(c["failed"] == 0 for c in rep.conditions)
    pooled = float(np.mean(high))
    ok = sum(ordered) >= 4 and 0.02 <= pooled <= 0.12
    detail = (f"rate(s=1) <= rate(s=0.1) in {sum(ordered)}/5 seeds; rate(s=1) per seed "
              f"{[round(h, 3) for h in high]}, pooled {pooled:.3f} in [0.02, 0.12]")
    assert criterion(2, ok, detail), detail


def test_c3_power_ordering(criterion):
    out = {}
    for strength in ("high", "low"):
        cfg = ExperimentConfig(design={"kind": "ihdp", "c_z": 1, "strength": strength},
                               methods=["mmr-contrast", "ate", "gate"], subgroups=IHDP_SUBGROUPS,
                               replicates=100, seed=0)
        out[strength] = rates(run_experiment(cfg))
    h, l = out["high"], out["low"]
    R = 100
    order = (h["mmr-contrast"] - h["ate"] >= -se_diff(h["mmr-contrast"], h["ate"], R)
             and h["ate"] - h["gate"] >= -se_diff(h["ate"], h["gate"], R))
    gap_h, gap_l = h["mmr-contrast"] - h["ate"], l["mmr-contrast"] - l["ate"]
    ok = order and gap_l > gap_h
    detail = (f"high: mmr {h['mmr-contrast']:.2f} ate {h['ate']:.2f} gate {h['gate']:.2f}; "
              f"low: mmr {l['mmr-contrast']:.2f} ate {l['ate']:.2f} gate {l['gate']:.2f}; "
              f"mmr-ate gap high {gap_h:+.2f} low {gap_l:+.2f}")
    assert criterion(3, ok, detail), detail


def test_c4_contrast_vs_absolute(criterion):
    cfg = ExperimentConfig(design={"kind": "baseline-shift", "n": 3000, "shift": 1.0},
                           methods=["mmr-contrast", "mmr-absolute"], replicates=100, seed=0)
    r = rates(run_experiment(cfg))
    ok = r["mmr-absolute"] >= 0.9 and r["mmr-contrast"] <= 0.12
    detail = f"MMR-Absolute {r['mmr-absolute']:.2f} (>= 0.9), MMR-Contrast {r['mmr-contrast']:.2f} (<= 0.12)"
    assert criterion(4, ok, detail), detail


def test_c5_selection_bias_monotone(criterion):
    ps = (0.0, 0.05, 0.10, 0.15)
    methods = ["mmr-contrast", "ate", "gate"]
    cfg = ExperimentConfig(design={"kind": "binary", "n0": 4000, "n1": 4000},
                           conditions=[{"selection_bias": p} for p in ps], methods=methods,
                           kernel={"kind": "rbf", "scale": "median"},
                           nuisance={"outcome": LOGIT, "treatment": LOGIT, "selection": LOGIT},
                           replicates=100, seed=0)
    rep = run_experiment(cfg)
    table = {m: [c["rates"][m] for c in rep.conditions] for m in methods}
    monotone = all(np.all(np.diff(v) >= 0) for v in table.values())
    dominates = all(a >= b for a, b in zip(table["mmr-contrast"], table["gate"]))
    ok = monotone and dominates and all(c["failed"] == 0 for c in rep.conditions)
    detail = "; ".join(f"{m} {[round(x, 2) for x in v]}" for m, v in table.items())
    assert criterion(5, ok, detail), detail


def _loop_u(psi, K):
    n = len(psi)
    total = 0.0
    for i in range(n):
        Ki, pi = K[i], psi[i]
        for j in range(n):
            if i != j:
                total += pi * Ki[j] * psi[j]
    return total / (n * (n - 1))


def _loop_boot(psi, K, w):
    n = len(psi)
    v = [(w[i] - 1.0) / n * psi[i] for i in range(n)]
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                total += v[i] * K[i, j] * v[j]
    return n * total


def test_c6_ustat_oracle(criterion):
    rng = np.random.default_rng(2024)
    worst_stat = worst_boot = 0.0
    for k in range(50):
        n = int(rng.integers(2, 501))
        d = int(rng.integers(1, 6))
        X = rng.standard_normal((n, d))
        kind = ("polynomial", "rbf", "laplacian")[k % 3]
        K = gram_matrix(KernelSpec(kind, scale=0.5 if kind != "polynomial" else None), standardize(X))
        psi = rng.standard_normal(n) * rng.uniform(0.1, 30)
        u, _ = mmr_statistic(psi, K)
        ref = _loop_u(psi.tolist(), K)
        scale = max(1.0, float(np.mean(np.abs(np.outer(psi, psi) * K))))
        worst_stat = max(worst_stat, abs(u - ref) / scale)
        W = bootstrap_weights(n, 3, seed=k)
        boots = bootstrap_from_weights(psi, K, W)
        for b in range(3):
            refb = _loop_boot(psi, K, W[:, b])
            worst_boot = max(worst_boot, abs(boots[b] - refb) / (n * scale))
    ok = worst_stat <= 1e-12 and worst_boot <= 1e-12
    detail = f"max scaled error: statistic {worst_stat:.1e}, bootstrap {worst_boot:.1e} (tolerance 1e-12)"
    assert criterion(6, ok, detail), detail


def test_c7_closed_form_power(criterion):
    rng = np.random.default_rng(7)
    worst = 0.0
    for k in range(10):
        spec = PowerSpec(float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)), float(rng.uniform(0.5, 3)),
                         int(rng.integers(10, 400)), float(rng.choice([0.005, 0.01, 0.05, 0.1])))
        ate, gate = simulate_power(spec, 100_000, seed=k)
        worst = max(worst, abs(ate - power_ate(spec)), abs(gate - power_gate(spec)))
    size_err = max(abs(power_ate(PowerSpec(d, -d, 1.0, 50, a)) - a)
                   for a in (0.005, 0.01, 0.05, 0.1) for d in (0.0, 0.3, 2.0))
    grid = np.arange(0, 10 + 1e-9, 0.01)
    g_min = min(float(np.min(scenario3_g(grid, a))) for a in (0.005, 0.01, 0.05, 0.1))
    g0 = scenario3_g(0.0, 0.05)
    ok = worst <= 0.01 and size_err <= 1e-15 and g_min > 0 and abs(g0 - 0.000625) <= 1e-9
    detail = (f"max |MC - closed form| {worst:.4f}; |power_ate(dbar=0) - alpha| {size_err:.1e}; "
              f"min g on grid {g_min:.2e}; g(0, 0.05) = {g0:.12f}")
    assert criterion(7, ok, detail), detail


def _stats(n, drift, R, seed):
    out = []
    for r in range(R):
        X, psi = gaussian_signals(n, 2, drift, seed=child_seed(seed, n, r))
        K = gram_matrix(KernelSpec(), standardize(X))
        out.append(mmr_statistic(psi, K)[1])
    return np.array(out)


def test_c8_asymptotic_regimes(criterion):
    v500, v2000 = _stats(500, 0.0, 1000, 0).var(ddof=1), _stats(2000, 0.0, 1000, 0).var(ddof=1)
    rel = abs(v2000 - v500) / v500
    m500, m2000 = _stats(500, 0.3, 200, 1).mean(), _stats(2000, 0.3, 200, 1).mean()
    ok = rel < 0.25 and m2000 >= 3 * m500
    detail = (f"H0 var(n M2): n=500 {v500:.3f}, n=2000 {v2000:.3f} (rel diff {rel:.1%} < 25%); "
              f"H1 mean: {m500:.2f} -> {m2000:.2f} (x{m2000 / m500:.2f} >= 3)")
    assert criterion(8, ok, detail), detail


def test_c9_witness_sign(criterion):
    grid = np.linspace(-2, 2, 201)[:, None]
    right = grid[:, 0] > 0
    good, worst_norm = 0, 0.0
    for seed in range(100):
        x, psi = step_bias_signals(500, seed=seed)
        w = witness_eval(psi, x, KernelSpec(), grid)
        good += np.mean(w.values[right] > 0) >= 0.95
        worst_norm = max(worst_norm, abs(math.sqrt(np.mean(w.values**2)) - 1.0))
    ok = good >= 95 and worst_norm <= 1e-9
    detail = f"positive on >= 95% of x>0 grid in {good}/100 runs; max |L2 norm - 1| {worst_norm:.1e}"
    assert criterion(9, ok, detail), detail
