from .config import AlgorithmSpec, ExperimentSpec, ProblemSpec, SpecError, load_spec, spec_from_dict
from .runner import run_experiment

__all__ = ["AlgorithmSpec", "ExperimentSpec", "ProblemSpec", "SpecError", "load_spec", "spec_from_dict", "run_experiment"]
