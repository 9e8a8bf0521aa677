"""Deterministic scenario harness: config, sensors, loop, metrics, dataset
export, telemetry server and the command-line entry point."""

from .scenario import Scenario, load_scenario, scenario_hash
from .loop import SimulationRunner, run_scenario
from .metrics import RunMetrics, compute_metrics
from .dataset import export_dataset, import_dataset

__all__ = [
    "Scenario", "load_scenario", "scenario_hash",
    "SimulationRunner", "run_scenario",
    "RunMetrics", "compute_metrics",
    "export_dataset", "import_dataset",
]
