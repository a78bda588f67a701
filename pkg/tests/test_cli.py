import json
import os

import numpy as np
import pytest

from ad1n.cli import main

MODEL_CFG = """
n = 1
a = 2.0
b = 1.0
m = 1.0
kappa = 0.5
theta = 2.0
rho = 1,0; 0.2,0.9
y0 = 2.0
x0 = 0.25
horizon = 20
delta = 0.02
seed = 7
"""

EXP_CFG = MODEL_CFG + """
regime = subcritical
horizons = 20
replications = 10
flavor = exact
"""


@pytest.fixture
def cfg_file(tmp_path):
    f = tmp_path / "model.cfg"
    f.write_text(MODEL_CFG)
    return str(f)


@pytest.fixture
def exp_file(tmp_path):
    f = tmp_path / "exp.cfg"
    f.write_text(EXP_CFG)
    return str(f)


def test_classify_command(cfg_file, capsys):
    assert main(["classify", "--config", cfg_file]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["regime"] == "subcritical"
    assert out["eig_theta"] == [2.0]


def test_simulate_then_estimate(cfg_file, tmp_path, capsys):
    out_dir = str(tmp_path / "sim")
    assert main(["simulate", "--config", cfg_file, "--out", out_dir]) == 0
    csv_file = capsys.readouterr().out.strip()
    assert os.path.exists(csv_file)
    assert os.path.exists(csv_file + ".json")
    with open(csv_file) as fh:
        header = fh.readline().strip()
    assert header == "t,Y,X1"

    assert main(["estimate", "--path", csv_file, "--flavor", "discrete"]) == 0
    est = json.loads(capsys.readouterr().out)
    assert len(est["tau_hat"]) == 5
    assert est["step"] == 0.02

    assert main(["estimate", "--path", csv_file, "--flavor", "exact"]) == 0
    est2 = json.loads(capsys.readouterr().out)
    assert est2["flavor"] == "exact-conditional"


def test_simulate_deterministic_given_seed(cfg_file, tmp_path, capsys):
    d1, d2 = str(tmp_path / "a"), str(tmp_path / "b")
    main(["simulate", "--config", cfg_file, "--out", d1, "--seed", "5"])
    main(["simulate", "--config", cfg_file, "--out", d2, "--seed", "5"])
    capsys.readouterr()
    with open(os.path.join(d1, "path.csv")) as fh:
        c1 = fh.read()
    with open(os.path.join(d2, "path.csv")) as fh:
        c2 = fh.read()
    assert c1 == c2


def test_moments_command(cfg_file, capsys):
    assert main(["moments", "--config", cfg_file]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["stationary"]["E[Y]"] == pytest.approx(2.0, rel=1e-12)
    sandwich = np.array(out["covariance"]["sandwich"])
    assert sandwich.shape == (5, 5)
    assert np.allclose(sandwich, sandwich.T)


def test_experiment_command(exp_file, tmp_path, capsys):
    out_dir = str(tmp_path / "exp_out")
    code = main(["experiment", "--config", exp_file, "--out", out_dir,
                 "--threads", "1"])
    output = capsys.readouterr().out
    assert "overall" in output
    assert os.path.exists(os.path.join(out_dir, "experiment.csv"))
    assert os.path.exists(os.path.join(out_dir, "experiment.json"))
    assert code in (0, 1)  # statistical checks at desk scale may fail


def test_gap_command(tmp_path, capsys):
    f = tmp_path / "gap.cfg"
    f.write_text(EXP_CFG.replace("delta = 0.02", "gamma = 1.1")
                 .replace("horizons = 20", "horizons = 12,24"))
    out_dir = str(tmp_path / "gap_out")
    assert main(["gap", "--config", str(f), "--out", out_dir]) == 0
    out = capsys.readouterr().out
    assert "median_gap" in out
    assert os.path.exists(os.path.join(out_dir, "gap.json"))


def test_error_exit_code(tmp_path, capsys):
    f = tmp_path / "bad.cfg"
    f.write_text(EXP_CFG.replace("regime = subcritical", "regime = critical"))
    assert main(["experiment", "--config", str(f), "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err
