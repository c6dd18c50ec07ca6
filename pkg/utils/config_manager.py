import copy
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from utils.common import load_yaml
from utils.errors import ConfigError

# Configure logging
logger = logging.getLogger(__name__)

CONFIG_PATH = os.path.join(os.path.dirname(os.path.dirname(__file__)), "config.json")
DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(os.path.dirname(__file__)), "config.default.json")

MODEL_KINDS = ("flagship", "commuting", "rabi", "avoided_crossing", "random_smooth")
CARTAN_FIELDS = ("seeded", "zero")
CROSSED_MODULES = ("GL_ADJ", "CENTRAL")

DEFAULT_CONFIG = {
    "n": 6,
    "m": 2,
    "crossed_module": "GL_ADJ",
    "seed": 0,
    "model": {
        "kind": "flagship",
        "T": 1.0,
        "band": [0, 1],
        "state": 0,
        "levels": [0.0, 0.3, 2.0, 3.0, 4.0, 5.0],
        "amplitude": 0.3,
        "frequencies": [1.3],
        "modulation": 0.2,
        "detuning": 1.0,
        "rabi_frequency": 0.5,
        "sweep": 2.0,
        "coupling": 0.5,
    },
    "grids": {
        "time_steps": 20000,
        "refinement_steps": [5000, 10000, 20000],
        "holonomy_steps": 1024,
        "holonomy_samples": 256,
        "cartan_cells": [0.1, 0.05, 0.025, 0.0125],
        "abelian_cells": [0.25, 0.125, 0.0625],
    },
    "tolerances": {
        "reconstruction": 1e-5,
        "wave_operator": 1e-9,
        "crossed_module": 1e-10,
        "identity": 1e-9,
        "two_transition": 1e-12,
        "gluing": 1e-6,
        "split": 1e-8,
        "boundary": 1e-8,
        "holonomy_identification": 1e-5,
        "order_band": 0.3,
        "abelian_order": 1.7,
    },
    "numerics": {
        "fd_step": 1e-5,
        "linkability_margin": 1e-6,
        "dedup_tolerance": 1e-9,
        "condition_bound": 1e12,
        "fs_squared": True,
        "gap_min": 1e-3,
        "degeneracy_tol": 1e-8,
        "determinant_floor": 1e-12,
    },
    "verify": {
        "samples": 200,
        "gluing_samples": 20,
        "h_defect": None,
    },
    "holonomy": {
        "pseudosurface": None,
        "chart": None,
        "abelian_check": True,
    },
    "cartan": {
        "field": "seeded",
        "expected_order": 3.0,
    },
    "output": {
        "dir": "out",
        "report": "report.json",
        "trace": "trace.csv",
        "convergence": "convergence.csv",
    },
}

POSITIVE_SECTIONS = ("tolerances",)
POSITIVE_NUMERICS = ("fd_step", "linkability_margin", "dedup_tolerance", "condition_bound",
                     "gap_min", "degeneracy_tol", "determinant_floor")


def archive_default_config():
    """Archive the original default configuration for reset purposes."""
    if not os.path.exists(DEFAULT_CONFIG_PATH):
        with open(DEFAULT_CONFIG_PATH, "w", encoding="utf-8") as f:
            json.dump(DEFAULT_CONFIG, f, indent=2)


def load_config():
    """Load configuration from disk or return defaults."""
    archive_default_config()
    if os.path.exists(CONFIG_PATH):
        try:
            with open(CONFIG_PATH, "r", encoding="utf-8") as f:
                return json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            logger.warning(f"Could not read {CONFIG_PATH}, using defaults: {str(e)}")
    return copy.deepcopy(DEFAULT_CONFIG)


def save_config(config: dict):
    """Save configuration to disk."""
    with open(CONFIG_PATH, "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2)


def reset_config() -> dict:
    """Restore configuration from archived defaults and return it."""
    if os.path.exists(DEFAULT_CONFIG_PATH):
        with open(DEFAULT_CONFIG_PATH, "r", encoding="utf-8") as f:
            defaults = json.load(f)
    else:
        defaults = copy.deepcopy(DEFAULT_CONFIG)
    save_config(defaults)
    return defaults


def load_scenario(path: str) -> Dict:
    """Read a scenario file: YAML for .yaml/.yml, JSON otherwise."""
    if not os.path.exists(path):
        raise ConfigError(f"scenario file {path} does not exist")
    try:
        if path.endswith((".yaml", ".yml")):
            data = load_yaml(path)
        else:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
    except (OSError, ValueError) as e:
        raise ConfigError(f"could not parse scenario {path}: {str(e)}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"scenario {path} must hold a mapping at the top level")
    return data


def merge_config(base: Dict, override: Dict, path: str = "") -> Dict:
    """Deep merge of `override` into a copy of `base`; keys absent from `base` are rejected."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown configuration key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be a mapping")
            merged[key] = merge_config(base[key], value, where)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _positive(value: Any, where: str):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise ConfigError(f"'{where}' must be a positive number, got {value!r}")


def _positive_int(value: Any, where: str):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"'{where}' must be a positive integer, got {value!r}")


def validate_config(config: Dict) -> Dict:
    """Check a merged configuration; returns it unchanged or raises ConfigError."""
    for key in ("n", "m"):
        _positive_int(config.get(key), key)
    if config["m"] > config["n"]:
        raise ConfigError(f"band rank m={config['m']} exceeds dimension n={config['n']}")
    seed = config.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"'seed' must be an integer, got {seed!r}")
    if config.get("crossed_module") not in CROSSED_MODULES:
        raise ConfigError(f"'crossed_module' must be one of {CROSSED_MODULES}")
    if config["crossed_module"] == "CENTRAL" and config["m"] != 1:
        raise ConfigError("the CENTRAL crossed module is available for m=1 only")

    for name, value in config["tolerances"].items():
        _positive(value, f"tolerances.{name}")
    for name in POSITIVE_NUMERICS:
        _positive(config["numerics"][name], f"numerics.{name}")
    if not isinstance(config["numerics"]["fs_squared"], bool):
        raise ConfigError("'numerics.fs_squared' must be a boolean")

    model = config["model"]
    if model["kind"] not in MODEL_KINDS:
        raise ConfigError(f"'model.kind' must be one of {MODEL_KINDS}, got {model['kind']!r}")
    _positive(model["T"], "model.T")
    band = model["band"]
    if not isinstance(band, list) or len(band) != config["m"]:
        raise ConfigError(f"'model.band' must list m={config['m']} level indices")
    if len(set(band)) != len(band) or any(not isinstance(b, int) or not 0 <= b < config["n"] for b in band):
        raise ConfigError(f"'model.band' indices must be distinct and inside 0..{config['n'] - 1}")
    if not isinstance(model["state"], int) or not 0 <= model["state"] < config["m"]:
        raise ConfigError(f"'model.state' must index the band, 0..{config['m'] - 1}")

    grids = config["grids"]
    for name in ("time_steps", "holonomy_steps", "holonomy_samples"):
        _positive_int(grids[name], f"grids.{name}")
    for name in ("refinement_steps", "cartan_cells", "abelian_cells"):
        if not isinstance(grids[name], list):
            raise ConfigError(f"'grids.{name}' must be a list")
        for k, value in enumerate(grids[name]):
            _positive(value, f"grids.{name}[{k}]")

    verify = config["verify"]
    if isinstance(verify["samples"], bool) or not isinstance(verify["samples"], int) or verify["samples"] < 0:
        raise ConfigError("'verify.samples' must be a non-negative integer")
    if isinstance(verify["gluing_samples"], bool) or not isinstance(verify["gluing_samples"], int) \
            or verify["gluing_samples"] < 0:
        raise ConfigError("'verify.gluing_samples' must be a non-negative integer")

    if config["cartan"]["field"] not in CARTAN_FIELDS:
        raise ConfigError(f"'cartan.field' must be one of {CARTAN_FIELDS}")
    return config


@dataclass
class ScenarioConfig:
    """Validated scenario, one per CLI invocation."""

    n: int
    m: int
    crossed_module: str = "GL_ADJ"
    seed: int = 0
    model: Dict = field(default_factory=dict)
    grids: Dict = field(default_factory=dict)
    tolerances: Dict = field(default_factory=dict)
    numerics: Dict = field(default_factory=dict)
    verify: Dict = field(default_factory=dict)
    holonomy: Dict = field(default_factory=dict)
    cartan: Dict = field(default_factory=dict)
    output: Dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Optional[Dict] = None) -> "ScenarioConfig":
        merged = validate_config(merge_config(DEFAULT_CONFIG, data or {}))
        return cls(**merged)

    @classmethod
    def from_file(cls, path: Optional[str] = None, overrides: Optional[Dict] = None) -> "ScenarioConfig":
        data = load_scenario(path) if path else load_config()
        if overrides:
            data = merge_config(merge_config(DEFAULT_CONFIG, data), overrides)
        return cls.from_dict(data)

    def to_dict(self) -> Dict:
        return {
            "n": self.n,
            "m": self.m,
            "crossed_module": self.crossed_module,
            "seed": self.seed,
            "model": copy.deepcopy(self.model),
            "grids": copy.deepcopy(self.grids),
            "tolerances": copy.deepcopy(self.tolerances),
            "numerics": copy.deepcopy(self.numerics),
            "verify": copy.deepcopy(self.verify),
            "holonomy": copy.deepcopy(self.holonomy),
            "cartan": copy.deepcopy(self.cartan),
            "output": copy.deepcopy(self.output),
        }

    def output_path(self, name: str, out_dir: Optional[str] = None) -> str:
        return os.path.join(out_dir or self.output["dir"], self.output[name])

    def tolerance_names(self) -> List[str]:
        return sorted(self.tolerances)
