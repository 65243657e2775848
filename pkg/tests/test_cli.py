import csv
import json
import subprocess
import sys

import pytest

from mmr_falsify.cli import main
from mmr_falsify.data import write_csv
from mmr_falsify.designs import BaselineShiftDesign

LOGIT = {"kind": "logistic-regression"}
NUIS = {"outcome": {"kind": "linear-regression"}, "treatment": LOGIT, "selection": LOGIT}


def _last_json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


@pytest.fixture
def data_csv(tmp_path):
    path = tmp_path / "data.csv"
    write_csv(BaselineShiftDesign(n=240).sample(0), path)
    return path


@pytest.fixture
def config_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"nuisance": NUIS, "design": {"kind": "baseline-shift", "n": 200}}))
    return path


def test_falsify(data_csv, config_json, tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["falsify", "--config", str(config_json), "--data", str(data_csv), "--out", str(out),
               "--methods", "mmr-contrast,ate,gate", "--subgroups", "x0:0", "--B", "30"])
    assert rc == 0
    res = _last_json(capsys)
    pv = res["conditions"][0]["p_values"]
    assert set(pv) == {"mmr-contrast", "ate", "gate"}
    assert (out / "report.json").exists() and (out / "rates.csv").exists()


def test_simulate_with_oracle(config_json, tmp_path, capsys):
    rc = main(["simulate", "--config", str(config_json), "--oracle-nuisances", "--replicates", "2",
               "--methods", "mmr-contrast,mmr-absolute", "--B", "20", "--seed", "3"])
    assert rc == 0
    res = _last_json(capsys)
    assert set(res["conditions"][0]["rates"]) == {"mmr-contrast", "mmr-absolute"}


def test_power_curves(tmp_path, capsys):
    rc = main(["power-curves", "--out", str(tmp_path), "--alphas", "0.05", "--delta-max", "1", "--delta-step", "0.5"])
    assert rc == 0
    assert _last_json(capsys)["rows"] == 3
    with open(tmp_path / "power_curves.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[0]["power_ate"]) == pytest.approx(0.05)


def test_witness(data_csv, config_json, tmp_path, capsys):
    rc = main(["witness", "--config", str(config_json), "--data", str(data_csv), "--projection", "x0,x1",
               "--resolution", "6", "--out", str(tmp_path / "w")])
    assert rc == 0
    meta = _last_json(capsys)
    assert meta["status"] == "ok" and meta["grid_points"] == 36
    assert (tmp_path / "w" / "witness.csv").exists()


def test_errors_are_json(data_csv, tmp_path, capsys):
    assert main(["falsify", "--data", str(tmp_path / "missing.csv"), "--methods", "ate"]) == 2
    err = _last_json(capsys)
    assert err["type"] in ("FileNotFoundError", "DataValidationError") and err["error"]
    assert main(["simulate", "--methods", "gate"]) == 2
    assert "subgroup" in _last_json(capsys)["error"]
    assert main(["witness", "--data", str(data_csv), "--projection", "x0", "--out", str(tmp_path)]) == 2
    assert _last_json(capsys)["type"] == "ConfigError"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mmr_falsify", "power-curves", "--out", str(tmp_path),
                           "--delta-max", "0.1", "--delta-step", "0.1"], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["rows"] == 8
