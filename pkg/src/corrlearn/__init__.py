"""Online reward learning from sequences of physical corrections.

A robot team executes a planned trajectory; a human nudges individual agents
with forces. Each nudge locally deforms the plan, and the accumulated
deformation chain is evidence about which candidate reward the human wants.
The package provides the deformation operator, the navigation reward
features, three inference models over a finite candidate set (sequence,
independent, final), the offline optimizer for the sequence model's
normalizer, a deterministic episode simulator with noisily rational
correctors, an HTTP/SSE session service for live correction, and a CLI for
precomputation, benchmarking, and replay verification.
"""

from .evidence import (
    Belief,
    EvidenceConfig,
    accumulated_evidence,
    correction_energy,
    log_likelihood_final,
    log_likelihood_independent,
    log_likelihood_sequence,
    posterior_update,
)
from .optimizer import (
    DStarLibrary,
    OptimizerConfig,
    build_library,
    inner_optimize,
    solve_dstar,
)
from .planner import plan
from .rewards import Scenario, features, load_scenario, reward, scenario_from_dict
from .trajectory import (
    Correction,
    DeformationKernel,
    Trajectory,
    deform,
    make_kernel,
    propagate_sequence,
)

__version__ = "0.1.0"

__all__ = [
    "Belief",
    "Correction",
    "DStarLibrary",
    "DeformationKernel",
    "EvidenceConfig",
    "OptimizerConfig",
    "Scenario",
    "Trajectory",
    "accumulated_evidence",
    "build_library",
    "correction_energy",
    "deform",
    "features",
    "inner_optimize",
    "load_scenario",
    "log_likelihood_final",
    "log_likelihood_independent",
    "log_likelihood_sequence",
    "make_kernel",
    "plan",
    "posterior_update",
    "propagate_sequence",
    "reward",
    "scenario_from_dict",
    "solve_dstar",
]
