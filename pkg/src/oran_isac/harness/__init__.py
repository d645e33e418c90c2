"""Scenario files, the occasion loop, comparison tables and reports."""

from .compare import compare_placements, compare_signal_types
from .config import ConfigError, Scenario, parse_scenario, scenario_from_dict
from .engine import RunReport, run_scenario
from .report import emit_reports

__all__ = ["ConfigError", "RunReport", "Scenario", "compare_placements",
           "compare_signal_types", "emit_reports", "parse_scenario", "run_scenario",
           "scenario_from_dict"]
