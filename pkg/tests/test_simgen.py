import csv
import json
import math

import numpy as np
import pytest

from mmr_falsify.data import CombinedDataset, DataValidationError
from mmr_falsify.simgen import (
    DELTA,
    IHDP_COLUMNS,
    SimConfig,
    conceal_confounders,
    concealment_order,
    generate_benchmark,
    generate_confounders,
    inject_selection_bias,
    load_ihdp_base,
    resample_obs_weighted,
    resample_rct,
    sample_coefficients,
    selection_weight,
    simulate_outcomes,
    synthetic_ihdp_base,
    write_benchmark,
)

@pytest.fixture(scope="module")
def base():
    return synthetic_ihdp_base()

def test_synthetic_base_shape(base):
    assert base.X.shape == (985, 28)
    assert base.names == IHDP_COLUMNS
    assert set(np.unique(base.treatment)) == {0, 1}
    assert 0.3 < base.treated_rate < 0.47

def test_load_ihdp_base_roundtrip(base, tmp_path):
    path = tmp_path / "ihdp.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["treat", *IHDP_COLUMNS])
        for a, row in zip(base.treatment, base.X):
            w.writerow([a, *(repr(float(v)) for v in row)])
    loaded = load_ihdp_base(path)
    assert np.array_equal(loaded.X, base.X) and np.array_equal(loaded.treatment, base.treatment)
    bad = tmp_path / "bad.csv"
    bad.write_text("treat,bw\n1,2000\n")
    with pytest.raises(DataValidationError, match="missing columns"):
        load_ihdp_base(bad)

def test_resample_rct(base):
    idx = resample_rct(base.X, base.n, seed=3)
    assert idx.shape == (base.n,) and idx.min() >= 0 and idx.max() < base.n
    assert not np.array_equal(np.sort(idx), np.sort(resample_rct(base.X, base.n, seed=4)))
    assert resample_rct(base.X, SimConfig().n0).size == 2955
    with pytest.raises(DataValidationError):
        resample_rct(np.empty((0, 3)), 5)

def test_selection_weight_values():
    assert selection_weight(0) == 0.5
    # the printed sigmoid at three flags is 0.6457; the adopted direction uses its complement
    assert selection_weight(3) == pytest.approx(1 / (1 + math.exp(0.6)), abs=1e-15)
    assert 1 - selection_weight(3) == pytest.approx(0.6456563062257954, abs=1e-12)
    w = selection_weight(np.arange(4))
    assert np.all(np.diff(w) < 0)

def test_obs_resample_reduces_flagged_rows(base):
    male = base.X[:, base.index("sex")]
    lower = [male[resample_obs_weighted(base, base.n, seed=s)].mean() < male.mean() for s in range(100)]
    assert np.mean(lower) >= 0.95

def test_generate_confounders_rct_mean_zero():
    Z = generate_confounders(np.zeros((100_000, 5)), np.ones(100_000), True, 1, seed=0)
    assert abs(Z.mean()) < 0.02 and Z.std() == pytest.approx(1.0, abs=0.02)

def test_generate_confounders_obs_untreated_match_rct():
    rng = np.random.default_rng(1)
    Xs = np.column_stack([np.ones(50), rng.standard_normal((50, 4))])
    A = np.tile([0, 1], 25)
    obs = generate_confounders(Xs, A, False, 3, seed=9)
    rct = generate_confounders(Xs, A, True, 3, seed=9)
    assert np.array_equal(obs[A == 0], rct[A == 0])
    assert np.allclose(obs[A == 1] - rct[A == 1], (Xs[A == 1] @ DELTA)[:, None])
    assert np.array_equal(rct, generate_confounders(Xs, A, True, 3, seed=9))
    with pytest.raises(ValueError, match="columns"):
        generate_confounders(Xs[:, :4], A, True, 3)

def test_simulate_outcomes_zero_inputs():
    n = 200_000
    Xt = np.column_stack([np.tile([0, 1], n // 2), np.zeros((n, 3))])
    Y0, Y1, Y = simulate_outcomes(Xt, np.zeros((n, 2)), np.zeros(2), np.zeros(4), 23.0, seed=0)
    assert abs(Y0.mean()) < 0.01 and abs(Y1.mean() - 23.0) < 0.01
    A = Xt[:, 0] == 1
    assert np.array_equal(Y[A], Y1[A]) and np.array_equal(Y[~A], Y0[~A])

def test_simulate_outcomes_no_confounding_effect():
    n = 100_000
    rng = np.random.default_rng(2)
    Z = rng.standard_normal((n, 3))
    Xt = np.column_stack([rng.integers(0, 2, n), rng.standard_normal((n, 2))])
    Y0, Y1, _ = simulate_outcomes(Xt, Z, np.zeros(3), np.array([0.1, 0.2, 0.3]), seed=1)
    D = np.column_stack([np.ones(n), Z])
    coef, *_ = np.linalg.lstsq(D, Y1 - Y0, rcond=None)
    resid = Y1 - Y0 - D @ coef
    se = np.sqrt(np.diag(np.linalg.inv(D.T @ D)) * resid.var())
    assert np.all(np.abs(coef[1:]) < 3 * se[1:])
    with pytest.raises(ValueError):
        simulate_outcomes(Xt, Z, np.zeros(3), np.zeros(2))

def test_sample_coefficients_levels():
    g, d, b = sample_coefficients(7, 28, "high", seed=0)
    assert g.shape == d.shape == (7,) and b.shape == (29,)
    assert set(g) <= {1.0, 1.75, 2.0, 2.25, 2.75}
    assert set(b) <= {0.0, 0.1, 0.2, 0.3, 0.4}
    with pytest.raises(ValueError):
        sample_coefficients(7, 28, "medium")

def test_concealment():
    assert concealment_order([1.0, 2.75, 0.1]).tolist() == [1, 0, 2]
    assert concealment_order([2.0, 1.0, 2.0]).tolist() == [0, 2, 1]
    cfg = SimConfig(n0=60, m=3, seed=5)
    bench = generate_benchmark(cfg)
    bench = bench.__class__(**{**bench.__dict__, "gamma": np.array([1.0, 2.75, 0.1])})
    assert conceal_confounders(bench, 1).concealed == (1,)
    d0 = conceal_confounders(bench, 0).dataset
    assert d0.feature_names[-3:] == ("z0", "z1", "z2")
    full = conceal_confounders(bench, 3).dataset
    assert full.covariates.shape[1] == 28
    with pytest.raises(ValueError):
        conceal_confounders(bench, 4)

def test_benchmark_determinism(tmp_path):
    cfg = SimConfig(n0=120, size_ratio=0.5, c_z=2, strength="high", seed=7)
    write_benchmark(generate_benchmark(cfg), tmp_path / "a")
    write_benchmark(generate_benchmark(cfg), tmp_path / "b")
    for name in ("observed.csv", "oracle.json", "config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    oracle = json.loads((tmp_path / "a" / "oracle.json").read_text())
    assert len(oracle["concealed"]) == 2
    assert generate_benchmark(cfg).n == 180

def test_oracle_cate_consistency():
    bench = generate_benchmark(SimConfig(n0=50_000, seed=1))
    mu0, mu1 = bench.true_outcome_surfaces()
    tau = bench.true_cate()
    assert np.allclose(mu1 - mu0, tau, atol=1e-10)
    assert abs(np.mean(bench.Y1 - bench.Y0) - tau.mean()) < 0.02

def test_oracle_nuisances_calibrated():
    bench = generate_benchmark(SimConfig(n0=20_000, c_z=2, seed=2))
    obs = bench.study == 1
    e = bench.true_propensity()[obs]
    A = bench.treatment[obs]
    assert abs(e.mean() - A.mean()) < 0.015
    # calibration within deciles of the true propensity
    edges = np.quantile(e, np.linspace(0, 1, 11))
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = (e >= lo) & (e <= hi)
        assert abs(A[m].mean() - e[m].mean()) < 0.05
    pi = bench.true_selection()
    assert abs(pi.mean() - 0.5) < 0.01

def test_inject_selection_bias_rules():
    rng = np.random.default_rng(0)
    n = 400
    data = CombinedDataset(rng.standard_normal((n, 2)), rng.integers(0, 2, n), rng.integers(0, 2, n).astype(float),
                           np.tile([0, 1], n // 2))
    assert inject_selection_bias(data, 0.0, seed=1) is data
    out = inject_selection_bias(data, 1.0, seed=1)
    assert not np.any((out.study == 1) & (out.treatment == 0) & (out.outcome == 0))
    mid, keep = inject_selection_bias(data, 0.4, seed=1, return_kept=True)
    eligible = (data.study == 1) & (data.treatment == 0) & (data.outcome == 0)
    assert np.all(keep[~eligible])
    assert np.array_equal(mid.covariates, data.covariates[keep]) and np.array_equal(mid.outcome, data.outcome[keep])
    # nested drops for a fixed seed
    _, keep_hi = inject_selection_bias(data, 0.7, seed=1, return_kept=True)
    assert np.all(keep_hi <= keep)
    with pytest.raises(ValueError):
        inject_selection_bias(data, 1.5)
    cont = CombinedDataset(data.covariates, data.treatment, data.outcome + 0.5, data.study)
    with pytest.raises(DataValidationError, match="binary"):
        inject_selection_bias(cont, 0.1)

def test_sim_config_validation():
    assert SimConfig(n0=100, size_ratio=0.1).n1 == 10
    with pytest.raises(ValueError):
        SimConfig(m=3, c_z=4)
    with pytest.raises(ValueError):
        SimConfig(size_ratio=0)
    assert SimConfig.from_dict(SimConfig(seed=3).to_dict()) == SimConfig(seed=3)
