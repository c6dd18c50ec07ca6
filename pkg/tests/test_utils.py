import json
import os
import sys
from datetime import datetime, timedelta

import numpy as np
import pytest
import pytz

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from utils import common, config_manager, report_tools
from utils.config_manager import ScenarioConfig
from utils.errors import ConfigError


def test_utc_timestamp():
    naive = datetime(2024, 1, 2, 3, 4, 5)
    assert common.utc_timestamp(naive) == "2024-01-02T03:04:05Z"
    eastern = pytz.timezone("US/Eastern").localize(datetime(2024, 1, 2, 3, 4, 5))
    assert common.utc_timestamp(eastern) == "2024-01-02T08:04:05Z"
    assert common.utc_timestamp().endswith("Z")


def test_parallel_map_keeps_order():
    def square(x):
        return x * x

    assert common.parallel_map(square, range(20), threads=4) == [x * x for x in range(20)]
    assert common.parallel_map(square, [3], threads=4) == [9]


def test_sample_rng_is_independent_of_call_order():
    first = common.sample_rng(7, 3).normal(size=4)
    common.sample_rng(7, 2).normal(size=4)
    assert np.array_equal(common.sample_rng(7, 3).normal(size=4), first)


def test_frobenius_gap_is_relative():
    b = 10.0 * np.eye(2)
    assert common.frobenius_gap(b + np.eye(2), b) == pytest.approx(np.sqrt(2) / np.sqrt(200))
    assert common.frobenius_gap(np.eye(2) * 0.1, np.zeros((2, 2))) == pytest.approx(0.1 * np.sqrt(2))
    assert common.max_or_zero([]) == 0.0


def test_config_manager_load_save(tmp_path, monkeypatch):
    tmp_file = tmp_path / "config.json"
    default_file = tmp_path / "config.default.json"
    monkeypatch.setattr(config_manager, "DEFAULT_CONFIG_PATH", str(default_file))
    monkeypatch.setattr(config_manager, "CONFIG_PATH", str(tmp_file))
    assert config_manager.load_config() == config_manager.DEFAULT_CONFIG
    assert default_file.exists()

    sample = {"n": 3, "m": 1}
    config_manager.save_config(sample)
    assert json.loads(tmp_file.read_text()) == sample
    assert config_manager.load_config() == sample

    tmp_file.write_text("{broken")
    assert config_manager.load_config() == config_manager.DEFAULT_CONFIG


def test_config_manager_reset(tmp_path, monkeypatch):
    cfg_file = tmp_path / "config.json"
    default_file = tmp_path / "config.default.json"
    monkeypatch.setattr(config_manager, "CONFIG_PATH", str(cfg_file))
    monkeypatch.setattr(config_manager, "DEFAULT_CONFIG_PATH", str(default_file))

    monkeypatch.setattr(config_manager, "DEFAULT_CONFIG", {"orig": 1})
    config_manager.archive_default_config()
    config_manager.save_config({"changed": 2})
    assert json.loads(cfg_file.read_text()) == {"changed": 2}

    assert config_manager.reset_config() == {"orig": 1}
    assert json.loads(cfg_file.read_text()) == {"orig": 1}


def test_merge_rejects_unknown_keys():
    merged = config_manager.merge_config(config_manager.DEFAULT_CONFIG, {"grids": {"time_steps": 10}})
    assert merged["grids"]["time_steps"] == 10
    assert merged["grids"]["holonomy_steps"] == config_manager.DEFAULT_CONFIG["grids"]["holonomy_steps"]
    assert config_manager.DEFAULT_CONFIG["grids"]["time_steps"] == 20000
    with pytest.raises(ConfigError, match="grids.steps"):
        config_manager.merge_config(config_manager.DEFAULT_CONFIG, {"grids": {"steps": 10}})
    with pytest.raises(ConfigError):
        config_manager.merge_config(config_manager.DEFAULT_CONFIG, {"model": 3})


def test_default_scenario_is_valid():
    scenario = ScenarioConfig.from_dict()
    assert (scenario.n, scenario.m) == (6, 2)
    assert scenario.to_dict() == config_manager.DEFAULT_CONFIG
    assert scenario.output_path("report", "elsewhere") == os.path.join("elsewhere", "report.json")


@pytest.mark.parametrize("override", [
    {"n": 2, "m": 3},
    {"m": 2, "crossed_module": "CENTRAL"},
    {"crossed_module": "ABELIAN"},
    {"tolerances": {"identity": 0.0}},
    {"model": {"kind": "harmonic"}},
    {"model": {"band": [0, 0]}},
    {"model": {"state": 2}},
    {"grids": {"time_steps": 0}},
    {"verify": {"samples": -1}},
    {"cartan": {"field": "random"}},
    {"numerics": {"fs_squared": "yes"}},
    {"seed": True},
])
def test_invalid_scenarios_are_rejected(override):
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(override)


def test_yaml_scenario_with_overrides(tmp_path):
    path = tmp_path / "lines.yaml"
    path.write_text("n: 3\nm: 1\ncrossed_module: CENTRAL\nmodel:\n  kind: rabi\n  band: [0]\n")
    scenario = ScenarioConfig.from_file(str(path), overrides={"grids": {"time_steps": 64}})
    assert scenario.crossed_module == "CENTRAL"
    assert scenario.model["band"] == [0]
    assert scenario.grids["time_steps"] == 64

    with pytest.raises(ConfigError):
        ScenarioConfig.from_file(str(tmp_path / "missing.yaml"))
    listing = tmp_path / "list.json"
    listing.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        config_manager.load_scenario(str(listing))


def test_scenario_without_a_path_reads_the_stored_config(tmp_path, monkeypatch):
    stored = tmp_path / "config.json"
    stored.write_text(json.dumps({"n": 2, "m": 1, "model": {"kind": "rabi", "band": [0]}}))
    monkeypatch.setattr(config_manager, "CONFIG_PATH", str(stored))
    monkeypatch.setattr(config_manager, "DEFAULT_CONFIG_PATH", str(tmp_path / "config.default.json"))
    scenario = ScenarioConfig.from_file(overrides={"seed": 5})
    assert (scenario.n, scenario.m, scenario.seed) == (2, 1, 5)
    assert scenario.model["kind"] == "rabi"

    stored.unlink()
    assert ScenarioConfig.from_file().n == config_manager.DEFAULT_CONFIG["n"]


def test_json_report_is_deterministic():
    report = {"b": np.float64(np.inf), "a": np.array([[1 + 2j]]), "c": (np.int64(3), np.bool_(True)), "z": 1j}
    text = report_tools.render_json_report(report)
    assert text == report_tools.render_json_report(dict(reversed(list(report.items()))))
    data = json.loads(text)
    assert list(data) == ["a", "b", "c", "z"]
    assert data["b"] == "inf"
    assert data["a"] == [[[1.0, 2.0]]]
    assert data["c"] == [3, True]
    assert data["z"] == [0.0, 1.0]


def test_matrix_encoding():
    matrix = np.array([[1 + 1j, 2], [0, -1j]])
    assert np.array_equal(report_tools.decode_matrix(report_tools.encode_matrix(matrix)), matrix)
    assert report_tools.encode_matrix(2.0) == [[[2.0, 0.0]]]
    with pytest.raises(ValueError):
        report_tools.decode_matrix([[1.0, 2.0]])


def test_csv_report_has_a_header(tmp_path):
    rows = report_tools.refinement_rows([0.1, 0.05], [1e-3, 2.5e-4], 2.0)
    data = report_tools.generate_csv_report(rows, report_tools.REFINEMENT_COLUMNS)
    lines = data.decode("utf-8").splitlines()
    assert lines[0] == "level,epsilon,max_residual,fitted_order"
    assert lines[1].startswith("0,1.000000000000e-01,")
    path = report_tools.write_csv_report(rows, report_tools.REFINEMENT_COLUMNS, str(tmp_path / "sub" / "c.csv"))
    assert open(path, "rb").read() == data


def test_fit_slope():
    eps = [0.1, 0.05, 0.025]
    assert report_tools.fit_slope(eps, [3 * e ** 2 for e in eps]) == pytest.approx(2.0)
    assert np.isfinite(report_tools.fit_slope(eps, [0.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        report_tools.fit_slope([0.1], [1.0])


def test_elapsed_since_switches_to_minutes():
    assert common.elapsed_since(datetime.now()).endswith("seconds")
    assert common.elapsed_since(datetime.now() - timedelta(minutes=3)) == "3.0 minutes"
