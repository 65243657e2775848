import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmr_falsify.data import (
    CombinedDataset,
    DataValidationError,
    assign_folds,
    load_csv,
    write_csv,
)


def _write(path, text):
    path.write_text(text)
    return path


def test_load_four_rows(tmp_path):
    f = _write(tmp_path / "d.csv", "Y,A,S,x\n1.5,0,0,0.1\n2,1,0,0.2\n3,0,1,0.3\n4,1,1,0.4\n")
    data = load_csv(f)
    assert (data.n, data.n0, data.n1) == (4, 2, 2)
    assert data.feature_names == ("x",)
    np.testing.assert_array_equal(data.outcome, [1.5, 2, 3, 4])


def test_custom_schema_and_covariate_subset(tmp_path):
    f = _write(tmp_path / "d.csv", "out,trt,rct,a,b\n1,0,0,5,6\n2,1,0,5,6\n3,0,1,5,6\n4,1,1,5,6\n")
    data = load_csv(f, {"outcome": "out", "treatment": "trt", "study": "rct", "covariates": ["b"]})
    assert data.feature_names == ("b",)
    np.testing.assert_array_equal(data.study, [0, 0, 1, 1])


def test_non_binary_treatment_reports_row(tmp_path):
    f = _write(tmp_path / "d.csv", "Y,A,S,x\n1,0,0,0\n1,2,0,0\n1,0,1,0\n1,1,1,0\n")
    with pytest.raises(DataValidationError, match="non-binary treatment at row 1"):
        load_csv(f)


def test_all_rct_rows_rejected(tmp_path):
    f = _write(tmp_path / "d.csv", "Y,A,S,x\n1,0,0,0\n1,1,0,0\n")
    with pytest.raises(DataValidationError, match="observational stratum empty"):
        load_csv(f)


def test_missing_column_and_bad_cell(tmp_path):
    f = _write(tmp_path / "d.csv", "Y,A,x\n1,0,0\n1,1,0\n")
    with pytest.raises(DataValidationError, match="missing study column"):
        load_csv(f)
    f = _write(tmp_path / "e.csv", "Y,A,S,x\n1,0,0,0\n1,1,0,abc\n1,0,1,0\n1,1,1,0\n")
    with pytest.raises(DataValidationError, match="row 1, column 'x'"):
        load_csv(f)
    f = _write(tmp_path / "g.csv", "Y,A,S,x\n1,0,0,0\n1,1,0,\n1,0,1,0\n1,1,1,0\n")
    with pytest.raises(DataValidationError, match="non-numeric"):
        load_csv(f)


def test_too_few_rows(tmp_path):
    f = _write(tmp_path / "d.csv", "Y,A,S,x\n1,0,0,0\n")
    with pytest.raises(DataValidationError, match="at least 2 rows"):
        load_csv(f)


def test_missing_arm_within_stratum():
    with pytest.raises(DataValidationError, match="RCT stratum has no rows with A=0"):
        CombinedDataset(np.zeros((4, 1)), [1, 1, 0, 1], np.zeros(4), [0, 0, 1, 1])


def test_non_finite_covariate():
    X = np.zeros((4, 2))
    X[2, 1] = np.nan
    with pytest.raises(DataValidationError, match="row 2, column 1"):
        CombinedDataset(X, [0, 1, 0, 1], np.zeros(4), [0, 0, 1, 1])


def test_dataset_is_immutable(toy):
    with pytest.raises(ValueError):
        toy.outcome[0] = 99.0


def test_take_and_drop_columns(toy):
    sub = toy.take(np.arange(8))
    assert sub.n == 8
    dropped = toy.drop_columns(["x1"])
    assert dropped.feature_names == ("x0", "x2")
    np.testing.assert_array_equal(dropped.column("x2"), toy.column("x2"))
    both = CombinedDataset.concat([sub, sub])
    assert both.n == 16


@pytest.mark.parametrize("n,sizes", [(6, [2, 2, 2]), (7, [3, 2, 2])])
def test_fold_balance(n, sizes):
    folds = assign_folds(n, 3, seed=11)
    assert sorted(folds.sizes().tolist(), reverse=True) == sizes


def test_fold_determinism_and_errors():
    a, b = assign_folds(50, 3, 4), assign_folds(50, 3, 4)
    np.testing.assert_array_equal(a.fold_of_row, b.fold_of_row)
    assert not np.array_equal(a.fold_of_row, assign_folds(50, 3, 5).fold_of_row)
    with pytest.raises(ValueError):
        assign_folds(2, 3)
    with pytest.raises(ValueError):
        assign_folds(10, 1)


@given(st.integers(3, 200), st.integers(2, 6), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_folds_partition_rows(n, K, seed):
    K = min(K, n)
    folds = assign_folds(n, K, seed)
    parts = [folds.rows_in(k) for k in range(K)]
    assert all(p.size > 0 for p in parts)
    np.testing.assert_array_equal(np.sort(np.concatenate(parts)), np.arange(n))
    assert folds.sizes().max() - folds.sizes().min() <= 1


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=8, max_size=8))
@settings(max_examples=50, deadline=None)
def test_csv_round_trip_bit_exact(tmp_path_factory, vals):
    vals = np.array(vals)
    X = vals.reshape(4, 2)
    data = CombinedDataset(X, [0, 1, 0, 1], vals[:4], [0, 0, 1, 1], ("a", "b"))
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    write_csv(data, path)
    back = load_csv(path)
    assert back.covariates.tobytes() == data.covariates.tobytes()
    assert back.outcome.tobytes() == data.outcome.tobytes()
    assert back.feature_names == ("a", "b")
