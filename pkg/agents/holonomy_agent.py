import json
import logging
import os
from typing import Dict, Optional

from agents.base_agent import BaseAgent
from utils.config_manager import ScenarioConfig
from utils.connection import StiefelConnection
from utils.errors import ConfigError
from utils.grassmann import Chart, all_charts
from utils.holonomy import abelian_refinement, lift_pseudosurface
from utils.two_space import PseudoSurface, ps_classify

# Configure logging
logger = logging.getLogger(__name__)


def load_pseudosurface(path: str) -> PseudoSurface:
    """Read a pseudosurface JSON file (grid size N, n, m, per-sample frames as [re, im] arrays)."""
    if not path or not os.path.exists(path):
        raise ConfigError(f"pseudosurface file {path!r} does not exist")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return PseudoSurface.from_dict(json.load(f))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid pseudosurface file {path}: {str(e)}") from e


class HolonomyAgent(BaseAgent):
    """
    Agent responsible for lifting a pseudosurface read from disk and for the
    abelian surface cross-check when the crossed module allows it
    """

    def __init__(self, config=None):
        """Initialize the holonomy agent with configuration"""
        super().__init__(config)
        self.base_dir = self.config.get('base_dir')
        self.log_event("Holonomy agent initialized")

    def _resolve(self, path: Optional[str]) -> Optional[str]:
        if path and self.base_dir and not os.path.isabs(path) and not os.path.exists(path):
            return os.path.join(self.base_dir, path)
        return path

    def _charts(self, scenario: ScenarioConfig):
        chart = scenario.holonomy.get("chart")
        if chart is None:
            return all_charts(scenario.n, scenario.m)
        try:
            return [Chart(tuple(chart), scenario.n)]
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid 'holonomy.chart' {chart!r}: {str(e)}") from e

    def process(self, input_data: ScenarioConfig) -> Dict:
        scenario = input_data
        grids, tol, numerics = scenario.grids, scenario.tolerances, scenario.numerics
        path = self._resolve(scenario.holonomy.get("pseudosurface"))
        if path is None:
            raise ConfigError("the holonomy command needs 'holonomy.pseudosurface'")
        gamma = load_pseudosurface(path)
        if (gamma.n, gamma.m) != (scenario.n, scenario.m):
            raise ConfigError(f"pseudosurface has n={gamma.n}, m={gamma.m}; scenario declares "
                              f"n={scenario.n}, m={scenario.m}")
        gamma.validate(numerics["linkability_margin"])
        classes = ps_classify(gamma, numerics["dedup_tolerance"])
        self.log_event(f"Lifting pseudosurface with N={gamma.N}: {classes}")

        cm = self.crossed_module(scenario)
        connection = StiefelConnection(scenario.n, scenario.m, cm, fd_step=numerics["fd_step"],
                                       margin=numerics["linkability_margin"],
                                       condition_bound=numerics["condition_bound"])
        charts = self._charts(scenario)
        steps = int(grids["holonomy_steps"])
        lifted = lift_pseudosurface(connection, gamma, charts, steps=steps, threads=self.threads)

        diagnostics = lifted.diagnostics
        checks = {}
        if "split_residual" in diagnostics:
            checks["split"] = self.check(diagnostics["split_residual"], tol["split"])
            checks["source_boundary"] = self.check(diagnostics["source_residual"], tol["boundary"])
        results = {
            "classification": classes,
            "holonomy": lifted.to_dict(),
        }

        if scenario.holonomy.get("abelian_check") and cm.is_abelian and classes["impervious"] \
                and classes["elementary"] and len(lifted.chart_trace) == 1:
            chart = next(c for c in charts if c.label == lifted.chart_trace[0])
            reduction = abelian_refinement(connection, gamma, chart, grids["abelian_cells"], steps=steps,
                                           threads=self.threads)
            results["abelian"] = {"cells": list(grids["abelian_cells"]), "epsilons": reduction["epsilons"],
                                  "residuals": reduction["residuals"], "order": reduction["order"]}
            if max(reduction["residuals"]) > 0.0:
                checks["abelian_order"] = self.check(reduction["order"], tol["abelian_order"], comparison="min")

        passed = all(entry["passed"] for entry in checks.values())
        self.log_event(f"Holonomy over charts {' -> '.join(lifted.chart_trace)}, passed={passed}")
        return {
            "success": True,
            "passed": passed,
            "results": results,
            "checks": checks,
            "tables": {},
        }
