"""CMA-guided local Bayesian optimization for high-dimensional black-box problems."""
from .benchmarks import Problem, make_problem, to_working_domain
from .optimizers import (
    METHODS,
    OptimizerConfig,
    RunRecord,
    run_baseline_bo,
    run_baseline_cmaes,
    run_baseline_turbo,
    run_cma_baxus,
    run_cma_bo,
    run_cma_turbo,
    run_method,
)
from .runner import ExperimentConfig, parse_config, run_experiment

__all__ = [
    "METHODS", "ExperimentConfig", "OptimizerConfig", "Problem", "RunRecord", "make_problem", "parse_config",
    "run_baseline_bo", "run_baseline_cmaes", "run_baseline_turbo", "run_cma_baxus", "run_cma_bo",
    "run_cma_turbo", "run_experiment", "run_method", "to_working_domain",
]
