import csv
import json
import subprocess
import sys

import pytest

from s00lab.cli import EXPERIMENTS, OUTPUT_ENV, RunConfig, load_config, main
from s00lab.errors import ParameterError


def _read(run_dir):
    rows = list(csv.DictReader(open(run_dir / "results.csv")))
    return rows, json.loads((run_dir / "manifest.json").read_text())


def test_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == len(EXPERIMENTS) == 10


def test_unknown_key_and_invalid_values(tmp_path, capsys):
    with pytest.raises(ParameterError, match="unknown config key"):
        RunConfig.from_mapping({"experiment": "norm", "bogus": 1})
    assert main(["validate", "--set", "experiment=norm", "--set", "p=0"]) == 2
    assert "p ∈ (0,∞] violated: p=0" in capsys.readouterr().err
    assert main(["validate", "--set", "experiment=case1", "--set", "p=1", "--set", "p_list=[2]"]) == 2
    assert "len(p_list) = N violated" in capsys.readouterr().err


def test_overrides_win_over_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"experiment": "norm", "p": 2, "seed": 1}))
    cfg = load_config(str(p), ["seed=9", 'p="3/2"'])
    assert cfg.seed == 9 and cfg.p == "3/2"


def test_hash_ignores_output_dir():
    a = RunConfig("norm", p=2, output_dir="x")
    b = RunConfig("norm", p=2, output_dir="y")
    assert a.hash() == b.hash() != RunConfig("norm", p=2, seed=1).hash()


def test_critical_exponent_run(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    args = ["run", "--set", "experiment=critical-exponent", "--set", "p=4", "--set", 'p_list=["3/2","3/2"]']
    assert main(args) == 0
    d = next(tmp_path.iterdir())
    rows, man = _read(d)
    assert rows[0]["value"] == "-13/12" and rows[0]["config_hash"] == man["config_hash"]
    assert man["status"] == "complete" and "numpy" in man["versions"]
    assert d.name == f"critical-exponent-{man['config_hash']}"


def test_norm_run_deterministic(tmp_path):
    outs = []
    for sub in ("a", "b"):
        assert main(["run", "--out", str(tmp_path / sub), "--set", "experiment=norm", "--set", "p=2"]) == 0
        d = next((tmp_path / sub).iterdir())
        outs.append((d / "results.csv").read_text())
    assert outs[0] == outs[1]


def test_module_error_exit_code(tmp_path, capsys):
    # the dyadic family rejects p <= 2, which the config layer cannot know
    args = ["run", "--out", str(tmp_path), "--set", "experiment=case3", "--set", "p=1",
            "--set", "p_list=[\"3/2\",3]", "--set", "m=0"]
    assert main(args) == 1
    assert "ParameterError" in capsys.readouterr().err
    _, man = _read_manifest_only(next(tmp_path.iterdir()))
    assert man["status"] == "incomplete" and man["error"]


def _read_manifest_only(d):
    return None, json.loads((d / "manifest.json").read_text())


def test_decompose_check_run(tmp_path):
    args = ["run", "--out", str(tmp_path), "--set", "experiment=decompose-check", "--set", "band=2",
            "--set", "K_list=[4,8]"]
    assert main(args) == 0
    rows, _ = _read(next(tmp_path.iterdir()))
    assert [r["K"] for r in rows] == ["4", "8"]
    assert float(rows[1]["sup_error"]) < float(rows[0]["sup_error"])


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "s00lab", "list"], capture_output=True, text=True)
    assert r.returncode == 0 and "case3" in r.stdout


def test_critical_exponent_l2_row(tmp_path):
    args = ["run", "--out", str(tmp_path), "--set", "experiment=critical-exponent", "--set", "p=2",
            "--set", "p_list=[2,2]"]
    assert main(args) == 0
    rows, _ = _read(next(tmp_path.iterdir()))
    assert len(rows) == 1 and float(rows[0]["value_float"]) == -0.5


def test_case3_run_has_slope(tmp_path):
    args = ["run", "--out", str(tmp_path), "--set", "experiment=case3", "--set", "p=4",
            "--set", 'p_list=["3/2","3/2"]', "--set", 'm="-13/12"', "--set", "points=4096",
            "--set", "k_list=[2,3,4,5]"]
    assert main(args) == 0
    rows, man = _read(next(tmp_path.iterdir()))
    assert len(rows) >= 4 and abs(float(rows[0]["fitted_slope"])) < 0.05
    assert man["status"] == "complete" and man["wall_time_s"] > 0
