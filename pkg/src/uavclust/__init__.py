"""Energy-efficient user clustering and drone small cell deployment."""
from .channel import (Assignment, ChannelParams, DegenerateInputError, DroneState, Fleet,
                      UserField)
from .ducem import DucemConfig, NoFeasibleSolution, SolutionRecord, run_ducem
from .kmeans_baseline import KmeansConfig, run_kmeans_baseline
from .metrics import ScoreReport, check_constraints, score
from .mobility import MobilityConfig, generate_trace
from .scenario import Scenario, from_trace, static_uniform
from .harness import ExperimentSpec, ResultRow, emit_outputs, run_experiment, summarize

__all__ = [
    "Assignment", "ChannelParams", "DegenerateInputError", "DroneState", "Fleet", "UserField",
    "DucemConfig", "NoFeasibleSolution", "SolutionRecord", "run_ducem",
    "KmeansConfig", "run_kmeans_baseline", "ScoreReport", "check_constraints", "score",
    "MobilityConfig", "generate_trace", "Scenario", "from_trace", "static_uniform",
    "ExperimentSpec", "ResultRow", "emit_outputs", "run_experiment", "summarize",
]
__version__ = "0.1.0"
