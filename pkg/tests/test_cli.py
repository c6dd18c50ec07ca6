import json
import os
import sys

import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import main
from scripts import make_pseudosurface
from utils import config_manager


def write_scenario(tmp_path, name="scenario.json", **data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def lines(**extra):
    data = {"n": 3, "m": 1, "model": {"kind": "random_smooth", "band": [0], "levels": [0.0, 1.5, 3.0]},
            "verify": {"samples": 20, "gluing_samples": 2}}
    data.update(extra)
    return data


def run(*args):
    return main.main(list(args) + ["--threads", "2"])


def test_verify_passes(tmp_path):
    config = write_scenario(tmp_path, **lines())
    out = tmp_path / "out"
    assert run("verify", "--config", config, "--out", str(out), "--no-timestamp") == 0
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] and report["exit_code"] == 0
    assert "timestamp" not in report


def test_stored_config_is_the_default_scenario(tmp_path, monkeypatch):
    monkeypatch.setattr(config_manager, "CONFIG_PATH", write_scenario(tmp_path, "config.json", **lines()))
    monkeypatch.setattr(config_manager, "DEFAULT_CONFIG_PATH", str(tmp_path / "config.default.json"))
    out = tmp_path / "out"
    assert run("verify", "--out", str(out)) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["passed"]
    assert (tmp_path / "config.default.json").exists()


def test_injected_defect_fails_the_run(tmp_path):
    data = lines(verify={"samples": 20, "gluing_samples": 0, "h_defect": 0.1})
    config = write_scenario(tmp_path, **data)
    assert run("verify", "--config", config, "--out", str(tmp_path / "out")) == 1


def test_bad_configurations_exit_with_two(tmp_path):
    config = write_scenario(tmp_path, n=2, m=3)
    assert run("verify", "--config", config, "--out", str(tmp_path / "out")) == 2
    yaml_config = tmp_path / "short.yaml"
    yaml_config.write_text("m: 2\ngrids:\n  cartan_cells: [0.1, 0.05]\n")
    assert run("cartan", "--config", str(yaml_config), "--out", str(tmp_path / "out")) == 2
    assert main.main(["verify", "--threads", "0"]) == 2


def test_gap_closure_exits_with_three(tmp_path):
    # the two levels of the avoided crossing touch when the coupling vanishes
    data = {"n": 2, "m": 1, "model": {"kind": "avoided_crossing", "band": [0], "coupling": 0.0},
            "grids": {"time_steps": 100, "refinement_steps": []}}
    config = write_scenario(tmp_path, **data)
    assert run("simulate", "--config", config, "--out", str(tmp_path / "out")) == 3


def test_reports_are_reproducible(tmp_path):
    config = write_scenario(tmp_path, **lines())
    for name in ("first", "second"):
        assert run("verify", "--config", config, "--out", str(tmp_path / name), "--no-timestamp") == 0
    assert (tmp_path / "first" / "report.json").read_bytes() == (tmp_path / "second" / "report.json").read_bytes()


def test_seed_and_tolerance_overrides(tmp_path):
    config = write_scenario(tmp_path, **lines())
    out = tmp_path / "out"
    assert run("verify", "--config", config, "--out", str(out), "--seed", "5",
               "--tol", "1e-7", "--fs-linear") == 0
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["seed"] == 5
    assert report["config"]["tolerances"]["identity"] == 1e-7
    assert report["config"]["numerics"]["fs_squared"] is False
    assert report["checks"]["bundle.g_ii"]["tolerance"] == 1e-7


def test_holonomy_with_a_generated_pseudosurface(tmp_path):
    assert make_pseudosurface.main([str(tmp_path / "surface.json"), "--grid", "32", "--seed", "2"]) == 0
    config = write_scenario(tmp_path, n=3, m=1, model={"band": [0]}, grids={"holonomy_steps": 512},
                            holonomy={"pseudosurface": "surface.json", "abelian_check": False})
    out = tmp_path / "out"
    assert run("holonomy", "--config", config, "--out", str(out)) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["results"]["classification"]["impervious"]
    assert "timestamp" in report


def test_simulate_writes_the_trace(tmp_path):
    data = {"n": 2, "m": 1, "model": {"kind": "rabi", "band": [0]},
            "grids": {"time_steps": 128, "refinement_steps": [32, 64, 128], "holonomy_samples": 32,
                      "holonomy_steps": 128}}
    config = write_scenario(tmp_path, **data)
    out = tmp_path / "out"
    assert run("simulate", "--config", config, "--out", str(out)) == 0
    header = (out / "trace.csv").read_text().splitlines()[0]
    assert header == "t,unitarity,fs_distance,idempotency,reconstruction_error"


def test_unknown_command_is_rejected():
    with pytest.raises(SystemExit):
        main.main(["plot"])
