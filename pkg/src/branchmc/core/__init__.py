"""Core modules for branchmc."""

from branchmc.core.branching import ParticleTree, index_code, population_moments, simulate_tree
from branchmc.core.config import RunConfig, load_run_config, save_run_config
from branchmc.core.estimator import EstimateReport, estimate, sample_psi, tower_check
from branchmc.core.feasibility import (
    Classification,
    EllAnalysis,
    VarianceVerdict,
    build_ell,
    classify,
    integrate_rho,
    stability_margin,
    variance_bound,
    variance_radius_check,
)
from branchmc.core.model import DiscretePath, ProblemSpec, evaluate_path
from branchmc.core.paths import LineagePath, euler_step_path, extend_lineage
from branchmc.core.reference import FDGrid, FDProblem, constant_payoff_solution, fd_solve

__all__ = [
    "DiscretePath",
    "ProblemSpec",
    "evaluate_path",
    "Classification",
    "EllAnalysis",
    "VarianceVerdict",
    "build_ell",
    "classify",
    "integrate_rho",
    "stability_margin",
    "variance_bound",
    "variance_radius_check",
    "ParticleTree",
    "index_code",
    "population_moments",
    "simulate_tree",
    "LineagePath",
    "euler_step_path",
    "extend_lineage",
    "EstimateReport",
    "estimate",
    "sample_psi",
    "tower_check",
    "FDGrid",
    "FDProblem",
    "constant_payoff_solution",
    "fd_solve",
    "RunConfig",
    "load_run_config",
    "save_run_config",
]
