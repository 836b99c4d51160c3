"""Simulation and exact-oracle toolkit for RandomShuffle (without-replacement SGD)."""

from .optimizers import Kind, OptimizerConfig, RunRecord, run_optimizer, theorem_step_size
from .problems import FiniteSumProblem, ProblemConstants, problem_constants

__version__ = "0.1.0"

__all__ = [
    "FiniteSumProblem",
    "Kind",
    "OptimizerConfig",
    "ProblemConstants",
    "RunRecord",
    "problem_constants",
    "run_optimizer",
    "theorem_step_size",
]
