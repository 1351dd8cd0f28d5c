"""Scenario harness: configs, predefined experiments, reports, CLI."""

from .config import ConfigError, ScenarioConfig, from_dict
from .report import MetricsReport, emit_report
from .scenarios import REGISTRY, load, run_scenario

__all__ = ["ConfigError", "ScenarioConfig", "from_dict", "MetricsReport", "emit_report",
           "REGISTRY", "load", "run_scenario"]
