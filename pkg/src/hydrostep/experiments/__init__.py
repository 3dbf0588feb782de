"""Scenarios, trajectory recording, benchmark studies and the CLI."""
from .runner import (TRAJECTORY_SCHEMA, ScenarioError, TrajectoryRecord, epsilon_series,
                     run_scenario, spinning_disk_epsilon)
from .scenario import (BodySpec, PairSpec, Scenario, ShapeSpec, box_on_slab_scenario,
                       build_world, coin_rest_depth, coin_scenario, free_fall_scenario,
                       load_scenario, scenario_from_dict, sliding_block_scenario)
from .studies import (StudyError, StudyResult, TessellationReport, convergence_study,
                      loglog_slope, tessellation_report, trajectory_error)

__all__ = [
    "TRAJECTORY_SCHEMA", "ScenarioError", "TrajectoryRecord", "epsilon_series", "run_scenario",
    "spinning_disk_epsilon", "BodySpec", "PairSpec", "Scenario", "ShapeSpec",
    "box_on_slab_scenario", "build_world", "coin_rest_depth", "coin_scenario",
    "free_fall_scenario", "load_scenario", "scenario_from_dict", "sliding_block_scenario",
    "StudyError", "StudyResult", "TessellationReport", "convergence_study", "loglog_slope",
    "tessellation_report", "trajectory_error",
]
