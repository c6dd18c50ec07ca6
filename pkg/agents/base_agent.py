import logging
from datetime import datetime

from utils.common import elapsed_since
from utils.config_manager import ScenarioConfig
from utils.crossed_module import CrossedModule

# Configure logging
logger = logging.getLogger(__name__)

LOG_LEVELS = ("debug", "info", "warning", "error", "critical")


class BaseAgent:
    """
    Base class for all agents of the higher-gauge toolkit
    Provides the logging, thread count and pass/fail conventions every command shares
    """

    def __init__(self, config=None):
        """Initialize the base agent with configuration settings"""
        self.config = config or {}
        self.start_time = datetime.now()
        self.threads = int(self.config.get('threads', 1) or 1)

    def log_event(self, message, level="info"):
        """Log under the agent's name; unknown levels fall back to info"""
        emit = getattr(logger, level if level in LOG_LEVELS else "info")
        emit(f"[{self.__class__.__name__}] {message}")

    def crossed_module(self, scenario: ScenarioConfig) -> CrossedModule:
        return CrossedModule(scenario.m, scenario.crossed_module)

    @staticmethod
    def check(value, tolerance, comparison="max"):
        """A pass/fail entry of a report."""
        value = float(value)
        passed = value <= tolerance if comparison == "max" else value >= tolerance
        return {"value": value, "tolerance": float(tolerance), "passed": bool(passed)}

    def process(self, input_data):
        """Run the agent's command on a validated scenario"""
        raise NotImplementedError("Agents must implement the process method")

    def report_status(self):
        return {
            "agent": self.__class__.__name__,
            "elapsed_time": elapsed_since(self.start_time),
            "status": "Active"
        }
