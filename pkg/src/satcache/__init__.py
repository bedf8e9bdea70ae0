"""Joint edge caching and bandwidth allocation for flexible multibeam satellites.

A satellite splits its band between one wide beam, whose data every CDN
receives, and per-CDN spot links.  Two problems are solved over that split:

* :func:`minimize_feeding_time`: meet per-CDN hit targets as fast as possible
  (successive convex approximation, then binary recovery);
* :func:`maximize_hits`: most cache hits within a fixed feeding time (exact
  branch and bound or a relax/round/repair heuristic).

Three fixed-mode reference schemes live in :mod:`satcache.baselines`.
"""

from .baselines import (
    HitsObjective,
    InfeasibleTargets,
    TimeObjective,
    best_reference3,
    reference1_multibeam,
    reference2_widebeam,
    reference3_hybrid,
)
from .feedtime import (
    FeedTimeResult,
    InfeasibleAfterRounding,
    PenaltyDriven,
    Round,
    ScaConfig,
    minimize_feeding_time,
    recover_binaries,
)
from .hits import (
    BranchAndBound,
    HitsResult,
    MbipConfig,
    RelaxRoundRepair,
    maximize_hits,
)
from .ingest import GeoIndex, assign_to_beam, build_demand, parse_ratings
from .linkbudget import SHANNON, EfficiencyMap, efficiency_from_snr
from .model import (
    GB,
    MULTICARRIER,
    MULTISPOT,
    BeamLink,
    ContentCatalog,
    DemandMatrix,
    JointSolution,
    NetworkScenario,
    SatCacheError,
    ScenarioError,
    check_feasible,
    validate_scenario,
)
from .scenario_io import Problem, load_problem
from .synthetic import east_coast_scenario, reuse_scenario, toy_paths

__version__ = "0.1.0"

__all__ = [
    "GB",
    "MULTICARRIER",
    "MULTISPOT",
    "SHANNON",
    "BeamLink",
    "BranchAndBound",
    "ContentCatalog",
    "DemandMatrix",
    "EfficiencyMap",
    "FeedTimeResult",
    "GeoIndex",
    "HitsObjective",
    "HitsResult",
    "InfeasibleAfterRounding",
    "InfeasibleTargets",
    "JointSolution",
    "MbipConfig",
    "NetworkScenario",
    "PenaltyDriven",
    "Problem",
    "RelaxRoundRepair",
    "Round",
    "SatCacheError",
    "ScaConfig",
    "ScenarioError",
    "TimeObjective",
    "assign_to_beam",
    "best_reference3",
    "build_demand",
    "check_feasible",
    "east_coast_scenario",
    "efficiency_from_snr",
    "load_problem",
    "maximize_hits",
    "minimize_feeding_time",
    "parse_ratings",
    "recover_binaries",
    "reference1_multibeam",
    "reference2_widebeam",
    "reference3_hybrid",
    "reuse_scenario",
    "toy_paths",
    "validate_scenario",
]
