"""Belief-propagation solvers for linear-mixing interference coordination."""

from .core import (
    FactorGraph,
    InterferenceSystem,
    SchedulingProfile,
    SchedulingSet,
    build_factor_graph,
    compute_interference,
    total_utility,
)
from .errors import (
    BpcoordError,
    ConfigurationError,
    EvaluationError,
    OracleInfeasibleError,
)
from .exact_bp import BPConfig, gibbs_distribution, run_exact_bp
from .first_order_bp import classify_edges, run_first_order_bp
from .gauss_bp import run_gaussian_bp

__all__ = [
    "BPConfig",
    "BpcoordError",
    "ConfigurationError",
    "EvaluationError",
    "FactorGraph",
    "InterferenceSystem",
    "OracleInfeasibleError",
    "SchedulingProfile",
    "SchedulingSet",
    "build_factor_graph",
    "classify_edges",
    "compute_interference",
    "gibbs_distribution",
    "run_exact_bp",
    "run_first_order_bp",
    "run_gaussian_bp",
    "total_utility",
]
