import logging
from typing import Dict

import numpy as np

from agents.base_agent import BaseAgent
from utils.bundle import IDENTITY_NAMES, TransitionData, verify_bundle_identities
from utils.config_manager import ScenarioConfig
from utils.connection import ENFORCED_GLUING, MEASURED_GLUING, StiefelConnection
from utils.crossed_module import verify_crossed_module
from utils.errors import ConfigError
from utils.grassmann import all_charts

# Configure logging
logger = logging.getLogger(__name__)

CROSSED_MODULE_IDENTITIES = ["equivariance", "peiffer", "lie_equivariance", "lie_peiffer", "exchange_law"]


class VerificationAgent(BaseAgent):
    """
    Agent responsible for the identity suites: crossed-module laws,
    transition-function identities of the Stiefel 2-bundle and the
    gluing relations of its 2-connection
    """

    def __init__(self, config=None):
        """Initialize the verification agent with configuration"""
        super().__init__(config)
        self.log_event("Verification agent initialized")

    def transition_data(self, scenario: ScenarioConfig) -> TransitionData:
        data = TransitionData.stiefel(scenario.n, scenario.m, self.crossed_module(scenario))
        defect = scenario.verify.get("h_defect")
        if defect is None:
            return data
        try:
            scale = float(defect)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"'verify.h_defect' must be a number, got {defect!r}") from e
        self.log_event(f"Injecting an h-transition defect of size {scale}", "warning")
        return data.with_h_defect(np.eye(data.module.h_dim, dtype=complex) * np.exp(scale))

    def process(self, input_data: ScenarioConfig) -> Dict:
        scenario = input_data
        tol, numerics = scenario.tolerances, scenario.numerics
        samples = int(scenario.verify["samples"])
        gluing_samples = min(samples, int(scenario.verify["gluing_samples"]))
        self.log_event(f"Verifying identities for n={scenario.n}, m={scenario.m} over {samples} samples")

        cm = self.crossed_module(scenario)
        crossed = verify_crossed_module(cm, samples, scenario.seed, self.threads)
        data = self.transition_data(scenario)
        bundle = verify_bundle_identities(data, samples, scenario.seed, self.threads)

        checks = {}
        for name in CROSSED_MODULE_IDENTITIES:
            checks[f"crossed_module.{name}"] = self.check(crossed[name], tol["crossed_module"])
        for name in IDENTITY_NAMES:
            checks[f"bundle.{name}"] = self.check(bundle[name], tol["identity"])
        checks["bundle.two_transition"] = self.check(bundle["two_transition"], tol["two_transition"])

        results = {"crossed_module": crossed, "bundle": bundle}
        charts = all_charts(scenario.n, scenario.m)
        if gluing_samples > 0 and len(charts) > 1:
            connection = StiefelConnection(scenario.n, scenario.m, cm, fd_step=numerics["fd_step"],
                                           margin=numerics["linkability_margin"],
                                           condition_bound=numerics["condition_bound"])
            i, j = charts[0], charts[1]
            gluing = connection.gluing_residuals(i, j, gluing_samples, scenario.seed, self.threads)
            for name in ENFORCED_GLUING:
                checks[f"connection.{name}"] = self.check(gluing[name], tol["gluing"])
            results["connection"] = {
                "charts": [i.label, j.label],
                "enforced": {name: gluing[name] for name in ENFORCED_GLUING},
                "measured": {name: gluing[name] for name in MEASURED_GLUING},
                "constraint_experiment": connection.constraint_experiment(i, gluing_samples, scenario.seed),
                "samples": gluing_samples,
            }

        failed = sorted(name for name, entry in checks.items() if not entry["passed"])
        for name in failed:
            self.log_event(f"Identity {name} failed: residual {checks[name]['value']:.3e}", "warning")
        results["failed"] = failed
        return {
            "success": True,
            "passed": not failed,
            "results": results,
            "checks": checks,
            "tables": {},
        }
