import logging
import traceback
from datetime import datetime
from typing import Dict, Optional

from agents.cartan_agent import CartanAgent
from agents.holonomy_agent import HolonomyAgent
from agents.report_agent import ReportAgent
from agents.simulation_agent import SimulationAgent
from agents.verification_agent import VerificationAgent
from utils.common import elapsed_since
from utils.config_manager import ScenarioConfig
from utils.errors import ConfigError, NumericalFailure

# Configure logging
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

COMMANDS = ("simulate", "verify", "holonomy", "cartan")


class Orchestrator:
    """
    Coordinates one command of the toolkit: runs the responsible agent,
    maps its outcome to an exit code and hands the result to the report agent
    """

    def __init__(self, config=None):
        """Initialize the orchestrator with configuration settings"""
        self.config = config or {}
        self.start_time = datetime.now()
        threads = self.config.get('threads', 1)

        # Initialize agent instances
        self.agents = {
            "simulate": SimulationAgent({'threads': threads, **self.config.get('simulation_config', {})}),
            "verify": VerificationAgent({'threads': threads, **self.config.get('verification_config', {})}),
            "holonomy": HolonomyAgent({'threads': threads, **self.config.get('holonomy_config', {})}),
            "cartan": CartanAgent({'threads': threads, **self.config.get('cartan_config', {})}),
        }
        self.reporter = ReportAgent(self.config.get('report_config', {}))

        # Processing state
        self.status_messages = []
        self.is_processing = False

        logger.info("Orchestrator initialized with all agents ready")

    def update_status(self, message):
        """Update processing status with timestamp"""
        timestamp = datetime.now().strftime("%H:%M:%S")
        status_msg = f"[{timestamp}] {message}"
        self.status_messages.insert(0, status_msg)
        logger.info(f"Status: {message}")

    def run_command(self, command: str, scenario: ScenarioConfig, out_dir: Optional[str] = None) -> Dict:
        """
        Run one command against a validated scenario

        Args:
            command: one of simulate, verify, holonomy, cartan
            scenario: validated scenario configuration
            out_dir: output directory, defaults to the scenario's output.dir

        Returns:
            Dict with success flag, exit code, report, written files and status messages
        """
        self.is_processing = True
        self.start_time = datetime.now()
        self.status_messages = []
        if command not in self.agents:
            raise ValueError(f"unknown command {command!r}, expected one of {COMMANDS}")
        self.update_status(f"Starting '{command}' with n={scenario.n}, m={scenario.m}, seed={scenario.seed}")

        try:
            outcome = self.agents[command].process(scenario)
            exit_code = EXIT_OK if outcome["passed"] else EXIT_FAILED
            failed = [name for name, entry in outcome.get("checks", {}).items() if not entry["passed"]]
            if failed:
                self.update_status(f"Failed checks: {', '.join(sorted(failed))}")
        except ConfigError as e:
            outcome, exit_code = self._failure(e), EXIT_CONFIG
        except NumericalFailure as e:
            outcome, exit_code = self._failure(e), EXIT_NUMERICAL
        except ValueError as e:
            outcome, exit_code = self._failure(e), EXIT_CONFIG

        report = self.reporter.build_report(command, scenario, outcome, exit_code)
        written = self.reporter.process(
            {"report": report, "tables": outcome.get("tables", {})},
            out_dir or scenario.output["dir"],
            {"report": scenario.output["report"], "trace": scenario.output["trace"],
             "convergence": scenario.output["convergence"]},
        )
        if not written["success"] and exit_code == EXIT_OK:
            exit_code = EXIT_CONFIG

        self.is_processing = False
        execution_time = elapsed_since(self.start_time)
        self.update_status(f"Command '{command}' finished with exit code {exit_code} in {execution_time}")
        return {
            "success": exit_code == EXIT_OK,
            "exit_code": exit_code,
            "report": report,
            "files": written.get("files", {}),
            "status": self.status_messages,
            "execution_time": execution_time,
        }

    def _failure(self, error: Exception) -> Dict:
        logger.error(f"Error in command: {str(error)}")
        logger.debug(traceback.format_exc())
        self.update_status(f"Error: {str(error)}")
        return {"success": False, "passed": False, "error": str(error), "error_type": type(error).__name__}
