import logging
import os
from typing import Dict, Optional

from agents.base_agent import BaseAgent
from utils.common import utc_timestamp
from utils.report_tools import (
    REFINEMENT_COLUMNS,
    TRACE_COLUMNS,
    render_json_report,
    write_csv_report,
    write_json_report,
)

# Configure logging
logger = logging.getLogger(__name__)

TABLE_COLUMNS = {
    "trace": TRACE_COLUMNS,
    "convergence": REFINEMENT_COLUMNS,
}


class ReportAgent(BaseAgent):
    """
    Agent responsible for the machine-readable outputs of a command:
    the JSON run report and the CSV tables
    """

    def __init__(self, config=None):
        """Initialize the report agent with configuration"""
        super().__init__(config)
        self.timestamp = bool(self.config.get('timestamp', True))
        self.log_event("Report agent initialized")

    def build_report(self, command: str, scenario, outcome: Dict, exit_code: int) -> Dict:
        """Report body; identical inputs give identical bodies unless a timestamp is requested."""
        report = {
            "command": command,
            "exit_code": exit_code,
            "passed": bool(outcome.get("passed", False)),
            "config": scenario.to_dict() if scenario is not None else None,
            "results": outcome.get("results", {}),
            "checks": outcome.get("checks", {}),
        }
        if "error" in outcome:
            report["error"] = outcome["error"]
            report["error_type"] = outcome.get("error_type")
        if self.timestamp:
            report["timestamp"] = utc_timestamp()
        return report

    def render(self, report: Dict) -> str:
        return render_json_report(report)

    def process(self, input_data: Dict, out_dir: Optional[str] = None, names: Optional[Dict] = None) -> Dict:
        """Write the report and its tables; returns the written paths."""
        report = input_data["report"]
        tables = input_data.get("tables", {})
        out_dir = out_dir or "out"
        names = names or {}
        files = {}
        try:
            files["report"] = write_json_report(report, os.path.join(out_dir, names.get("report", "report.json")))
            for table, rows in tables.items():
                columns = TABLE_COLUMNS.get(table)
                if columns is None:
                    self.log_event(f"No column layout for table '{table}', skipped", "warning")
                    continue
                path = os.path.join(out_dir, names.get(table, f"{table}.csv"))
                files[table] = write_csv_report(rows, columns, path)
        except OSError as e:
            self.log_event(f"Error writing reports: {str(e)}", "error")
            return {"success": False, "error": str(e), "files": files}
        self.log_event(f"Wrote {len(files)} files to {out_dir}")
        return {"success": True, "files": files}
