import json
import math

import pytest

from liebsim import kernels as km
from liebsim import lattice as lat
from liebsim.cli import run


@pytest.fixture
def files(tmp_path):
    exp = tmp_path / "exp.json"
    exp.write_text(json.dumps(km.exponential_kernel(1.0).to_dict()))
    model = lat.chain_model(3, pair=lat.heisenberg_pair(), rx=lat.PAULI["X"], kernel=km.exponential_kernel(1.0))
    mpath = tmp_path / "model.json"
    mpath.write_text(json.dumps(lat.model_to_dict(model)))
    obs = tmp_path / "obs.json"
    obs.write_text(json.dumps({"matrix": lat.matrix_to_json(lat.PAULI["Z"])}))
    return tmp_path, exp, mpath, obs


def test_kernel_tv(files, capsys):
    _, exp, _, _ = files
    assert run(["kernel", "tv", "--in", str(exp)]) == 0
    assert capsys.readouterr().out.strip() == "TV = 1.000000"


def test_bounds_velocity(capsys):
    assert run(["bounds", "velocity", "--a0", "1", "--z", "3", "--tv", "1"]) == 0
    out = capsys.readouterr().out
    assert abs(float(out.split("=")[1]) - 171 * math.e) < 1e-8


def test_unknown_flag_is_usage_error(capsys):
    assert run(["bounds", "velocity", "--bogus", "1"]) == 2
    assert "usage" in capsys.readouterr().err


def test_domain_error_exit_one(files):
    _, exp, _, _ = files
    assert run(["kernel", "mollify", "--in", str(exp), "--delta", "-1"]) == 1


def test_config_and_override(files, capsys):
    tmp, *_ = files
    cfg = tmp / "c.json"
    cfg.write_text(json.dumps({"schema": "liebsim.config/1", "a0": 1, "z": 3, "tv": 0}))
    assert run(["bounds", "velocity", "--config", str(cfg)]) == 0
    assert abs(float(capsys.readouterr().out.split("=")[1]) - 3 * math.e) < 1e-9
    assert run(["bounds", "velocity", "--config", str(cfg), "--tv", "1"]) == 0
    assert abs(float(capsys.readouterr().out.split("=")[1]) - 171 * math.e) < 1e-8


def test_config_unknown_key(files, capsys):
    tmp, *_ = files
    cfg = tmp / "c.json"
    cfg.write_text(json.dumps({"schema": "liebsim.config/1", "nonsense": 1}))
    assert run(["bounds", "velocity", "--config", str(cfg)]) == 2
    assert "/nonsense" in capsys.readouterr().err


def test_chain_and_simulate(files, capsys):
    tmp, exp, model, obs = files
    chain = tmp / "chain.json"
    assert run(["chain", "--kernel", str(exp), "--delta", "0.1", "--omega-c", "4", "--modes", "1",
                "--out", str(chain)]) == 0
    assert json.loads(chain.read_text())["schema"] == "liebsim.chain/1"
    assert run(["simulate", "--model", str(model), "--chain", str(chain), "--observable", str(obs),
                "--x", "0", "--t", "0:0.1:0.2", "--leakage", "ignore", "--dry-run"]) == 0
    assert "planned dimension: 216" in capsys.readouterr().out
    out = tmp / "sim.csv"
    assert run(["simulate", "--model", str(model), "--chain", str(chain), "--observable", str(obs),
                "--x", "0", "--t", "0:0.1:0.2", "--leakage", "ignore", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,expectation" and len(lines) == 4
    assert float(lines[1].split(",")[1]) == 1.0


def test_lightcone_cli(files):
    tmp, exp, model, obs = files
    chain = tmp / "chain.json"
    run(["chain", "--kernel", str(exp), "--delta", "0.1", "--omega-c", "4", "--modes", "1", "--out", str(chain)])
    out = tmp / "lc.json"
    assert run(["lightcone", "--model", str(model), "--chain", str(chain), "--observable", str(obs), "--x", "0",
                "--t", "0,0.1", "--l", "0..2", "--leakage", "ignore", "--jobs", "1", "--seed", "5",
                "--out", str(out)]) == 0
    rows = json.loads(out.read_text())["rows"]
    assert len(rows) == 6
    assert all(r["delta"] <= r["bound"] + 1e-12 for r in rows)


def test_model_stats_and_restrict(files, capsys):
    tmp, _, model, _ = files
    assert run(["model", "stats", "--in", str(model)]) == 0
    assert capsys.readouterr().out.startswith("a0 = 1, Z = 4")
    out = tmp / "r.json"
    assert run(["model", "restrict", "--in", str(model), "--x", "0", "--l", "0", "--out", str(out)]) == 0
    names = [t["name"] for t in json.loads(out.read_text())["terms"]]
    assert names == ["p0", "s0"]


def test_bounds_family(files, capsys):
    _, exp, _, _ = files
    assert run(["bounds", "chain", "--t", "1", "--n-terms", "1", "--o-norm", "1", "--tv", "1", "--modes", "60",
                "--delta", "0.1", "--omega-c", "10"]) == 0
    assert run(["bounds", "reg", "--t", "1", "--n-terms", "2", "--tv", "1", "--delta", "0.01",
                "--kernel", str(exp)]) == 0
    assert run(["modes", "--eps", "0.01", "--t", "1", "--d", "1", "--kernel", str(exp)]) == 0
    assert run(["bounds", "cutoff", "--t", "1"]) == 2


def test_supersonic_dry_run(capsys):
    assert run(["supersonic", "--m", "2", "--dry-run"]) == 0
    assert "planned dimension" in capsys.readouterr().out


def test_supersonic_m1(tmp_path, capsys):
    out = tmp_path / "profile.csv"
    assert run(["supersonic", "--m", "1", "--out", str(out)]) == 0
    assert "delta = 1" in capsys.readouterr().out
    rep = json.loads((tmp_path / "profile.violation.json").read_text())
    assert abs(rep["delta"] - 1) < 1e-3


def test_lightcone_deterministic_across_jobs(files):
    tmp, exp, model, obs = files
    chain = tmp / "chain.json"
    run(["chain", "--kernel", str(exp), "--delta", "0.1", "--omega-c", "4", "--modes", "1", "--out", str(chain)])
    outs = []
    for jobs, name in ((1, "a.json"), (2, "b.json"), (1, "c.json")):
        out = tmp / name
        assert run(["lightcone", "--model", str(model), "--chain", str(chain), "--observable", str(obs),
                    "--x", "0", "--t", "0.1", "--l", "0,1", "--leakage", "ignore", "--seed", "9",
                    "--jobs", str(jobs), "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2]
