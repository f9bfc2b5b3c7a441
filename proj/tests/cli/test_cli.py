import csv
import json
import os
import subprocess
from pathlib import Path

import pytest

CLI = os.environ.get("CFORGE_CLI", "cforge")
QUICK = ["--chains", "2", "--iters", "400", "--warmup", "200"]


def run(*args, cwd=None):
    return subprocess.run([CLI, *map(str, args)], capture_output=True, text=True, cwd=cwd)


def rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_simulate_writes_two_csvs(tmp_path):
    r = run("simulate", "--scenario", 1, "--seed", 7, "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    data = tmp_path / "scenario1_seed7_data.csv"
    truth = tmp_path / "scenario1_seed7_truth.csv"
    assert len(rows(data)) == 300
    assert len(rows(truth)) == 300


def test_simulate_lognormal_confounder(tmp_path):
    r = run("simulate", "--scenario", 4, "--confounder", "lognormal", "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    u = [float(x["u1"]) for x in rows(tmp_path / "scenario4_seed1_truth.csv")]
    assert min(u) > 0


def test_unknown_scenario_is_usage_error(tmp_path):
    assert run("simulate", "--scenario", 9, "--out", tmp_path).returncode == 2
    assert run("simulate", "--bogus").returncode == 2
    assert run().returncode == 2


def test_bad_config_is_usage_error(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": {"id": 1}, "model": {"priors": {"e_ate": {"sd": -1}}}}))
    r = run("fit", "--config", cfg, "--out", tmp_path)
    assert r.returncode == 2
    assert "model.priors.e_ate.sd" in r.stderr


def test_fit_outputs(tmp_path):
    r = run("fit", "--scenario", 1, "--out", tmp_path, "--draws-format", "csv", *QUICK)
    assert r.returncode == 0, r.stderr
    for name in ["draws.csv", "diagnostics.json", "diagnostics.csv", "ate_summary.csv", "identifiability.json"]:
        assert (tmp_path / name).exists(), name
    ate = rows(tmp_path / "ate_summary.csv")
    assert ate[0]["parameter"] == "e_ate"
    diag = json.loads((tmp_path / "diagnostics.json").read_text())
    assert "rhat_ok" in diag


def test_restrict_alpha9_nonpos(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "scenario": {"id": 4, "n": 120},
        "model": {"unmeasured": "one_latent", "reparam": "random_intercept"},
    }))
    r = run("fit", "--config", cfg, "--restrict", "alpha9=nonpos", "--out", tmp_path,
            "--draws-format", "csv", *QUICK)
    assert r.returncode == 0, r.stderr
    draws = rows(tmp_path / "draws.csv")
    vals = [float(d["alpha_u"]) for d in draws]
    assert len(vals) == 400
    assert max(vals) <= 0.0


def test_association_drops_latent_block(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "scenario": {"id": 4, "n": 120},
        "model": {"unmeasured": "one_latent", "reparam": "random_intercept"},
    }))
    r = run("fit", "--config", cfg, "--comparison", "association", "--out", tmp_path,
            "--draws-format", "csv", *QUICK)
    assert r.returncode == 0, r.stderr
    header = (tmp_path / "draws.csv").read_text().splitlines()[0]
    assert "u_prime" not in header


def test_strict_flag_fails_on_bad_diagnostics(tmp_path):
    r = run("fit", "--scenario", 1, "--out", tmp_path, "--strict", "--chains", "2", "--iters", "12", "--warmup", "6")
    assert r.returncode != 0


def test_reproduce_unknown_lists_catalog():
    r = run("reproduce", "table99")
    assert r.returncode == 2
    assert "sim1" in r.stderr and "sim7" in r.stderr


def test_sensitivity_base_row_only(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": {"id": 1}, "model": {"exposure_model": False}}))
    r = run("sensitivity", "--config", cfg, "--out", tmp_path, *QUICK)
    assert r.returncode == 0, r.stderr
    out = rows(tmp_path / "sensitivity.csv")
    assert [x["label"] for x in out] == ["base"]


def test_sensitivity_failed_fit_prints_dash(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "scenario": {"id": 1},
        "model": {"exposure_model": False},
        "sensitivity": [{"label": "tiny", "priors": {"e_ate": {"mean": 0, "sd": 1}}}],
        "sampler": {"chains": 2, "iterations": 12, "warmup": 6},
    }))
    r = run("sensitivity", "--config", cfg, "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    out = rows(tmp_path / "sensitivity.csv")
    assert out[1]["mean"] == "-"


def test_sd_subcommand(tmp_path):
    r = run("sd", "--scenario", 4, "--out", tmp_path, "--bootstrap", 20)
    assert r.returncode == 0, r.stderr
    out = rows(tmp_path / "sd_bootstrap.csv")
    assert [x["variable"] for x in out] == ["w", "y"]
    for x in out:
        assert float(x["lo"]) <= float(x["point"]) <= float(x["hi"])


def test_fit_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("fit", "--scenario", 2, "--seed", 5, "--out", d, *QUICK).returncode == 0
    assert (a / "ate_summary.csv").read_bytes() == (b / "ate_summary.csv").read_bytes()
    assert (a / "draws.bin").read_bytes() == (b / "draws.bin").read_bytes()


def test_u_prime_sweep_direction(tmp_path):
    cfg = json.loads((Path(__file__).resolve().parents[2] / "configs" / "sim4_sensitivity.json").read_text())
    cfg["sampler"] = {"chains": 2, "iterations": 800, "warmup": 400, "seed": 2}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    r = run("sensitivity", "--config", path, "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    means = {x["label"]: float(x["mean"]) for x in rows(tmp_path / "sensitivity.csv")}
    # A less informative U' prior moves the estimate up.
    assert means["u_prime sd 1"] < means["u_prime sd 3"] < means["u_prime sd 5"]
