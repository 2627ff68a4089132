import csv
import io
import json
import os
import subprocess
import sys

import pytest

from bolab.cli import main

CONFIG = """
[experiment]
name = "cli"
n_grid = [20, 40]
reps = 4
master_seed = 3

[spectrum]
family = "poly_shift"
gamma = 1.0
p_factor = 5.0

[temporal]
kind = "arma"
a = [0.4]

[beta]
kind = "rademacher_prior"
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text(CONFIG)
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_spectrum_csv(cfg, capsys):
    code, out, _ = run(capsys, "spectrum", "--config", cfg, "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and [r["n"] for r in rows] == ["20", "40"]
    assert rows[0]["p"] == "100" and rows[0]["k_star"] != ""


def test_sample_then_fit(cfg, tmp_path, capsys):
    d = str(tmp_path / "inst")
    code, _, _ = run(capsys, "sample", "--config", cfg, "--out", d)
    assert code == 0
    side = json.loads(open(os.path.join(d, "instance.json")).read())
    assert side["n"] == 20 and side["p"] == 100 and side["seed"] == 3 and side["generator_id"]
    code, out, _ = run(capsys, "fit", d)
    rep = json.loads(out)
    assert code == 0 and rep["certificate"]["passed"]
    assert os.path.exists(os.path.join(d, "beta_hat.csv"))


def test_risk_json(cfg, tmp_path, capsys):
    out = tmp_path / "risk.json"
    code, _, _ = run(capsys, "risk", "--config", cfg, "--reps", "5", "--out", str(out))
    rep = json.loads(out.read_text())
    assert code == 0 and rep["reps"] == 5 and rep["mc_mean"] >= 0


def test_risk_is_reproducible(cfg, capsys):
    a = run(capsys, "risk", "--config", cfg, "--format", "csv")[1]
    b = run(capsys, "risk", "--config", cfg, "--format", "csv")[1]
    assert a == b


def test_bounds_csv(cfg, capsys):
    code, out, _ = run(capsys, "bounds", "--config", cfg, "--format", "csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0
    assert rows[0] == ["n", "bias_bound", "variance_bound", "regime", "b", "c", "delta"]
    assert len(rows) == 3


def test_verify_single_check(cfg, tmp_path, capsys):
    out = tmp_path / "v.jsonl"
    code, _, _ = run(capsys, "verify", "decomposition", "--config", cfg, "--reps", "500",
                     "--out", str(out))
    rep = json.loads(out.read_text().splitlines()[0])
    assert code == 0 and rep["verdict"] == "pass" and rep["check_name"] == "decomposition"


def test_verify_all(cfg, capsys):
    code, out, _ = run(capsys, "verify", "all", "--config", cfg, "--reps", "50")
    reps = [json.loads(line) for line in out.splitlines()]
    assert [r["check_name"] for r in reps] == ["decomposition", "bias_invariance",
                                              "implicit_decorrelation", "moment_inequality",
                                              "ak_concentration", "arfima_scaling",
                                              "hetero_arma_properties"]
    by = {r["check_name"]: r["verdict"] for r in reps}
    assert by["arfima_scaling"] == "skip"
    assert code == (0 if all(v in ("pass", "skip") for v in by.values()) else 1)


def test_verify_failure_exit_code(cfg, capsys):
    # r_95 = 5 < 2n, so the check is skipped, and a skip is not a pass
    code, out, _ = run(capsys, "verify", "ak_concentration", "--config", cfg, "--k", "95", "--reps", "5")
    assert json.loads(out)["verdict"] == "skip"
    assert code == 1


def test_verify_unknown_check(cfg, capsys):
    code, _, err = run(capsys, "verify", "nonsense", "--config", cfg)
    assert code == 2 and "unknown check" in err


def test_sweep_and_report(cfg, tmp_path, capsys):
    d = str(tmp_path / "sweep")
    code, out, _ = run(capsys, "sweep", "--config", cfg, "--out", d, "--limit", "3")
    assert code == 0 and json.loads(out)["records"] == 3
    code, out, _ = run(capsys, "sweep", "--config", cfg, "--out", d)
    assert json.loads(out)["records"] == 8
    code, out, _ = run(capsys, "report", "--records", os.path.join(d, "records.jsonl"),
                       "--format", "svg")
    rep = json.loads(out)
    assert code == 0 and rep["plot"].endswith(".svg") and os.path.exists(rep["summary"])


def test_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[experiment]\nwat = 1\n")
    code, _, err = run(capsys, "spectrum", "--config", str(bad))
    assert code == 2 and "unknown keys" in err


def test_entry_point():
    res = subprocess.run([sys.executable, "-m", "bolab.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("bolab ")


def test_seed_override(cfg, capsys):
    a = run(capsys, "risk", "--config", cfg, "--format", "csv")[1]
    b = run(capsys, "risk", "--config", cfg, "--format", "csv", "--seed", "4")[1]
    assert a != b
