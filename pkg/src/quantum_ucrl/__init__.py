"""Exploration with quantum access to episodic MDPs, simulated at the contract level."""
from .kernels import BACKEND
from .mdp import (
    ConfigurationError,
    InvalidModelError,
    LinearMixtureMDP,
    Policy,
    TabularMDP,
    ValueTable,
    exact_optimal_values,
    exact_policy_evaluation,
    occupancy_measure,
)
from .oracles import EpisodeLedger, NoiseModel
from .records import RunRecord
from .tabular import run_quantum_ucrl
from .vtr import run_quantum_ucrl_vtr
from .baselines import run_classical_ucrl, run_classical_ucrl_vtr
from .harness import ExperimentConfig, run, summarize, sweep

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigurationError",
    "EpisodeLedger",
    "ExperimentConfig",
    "InvalidModelError",
    "LinearMixtureMDP",
    "NoiseModel",
    "Policy",
    "RunRecord",
    "TabularMDP",
    "ValueTable",
    "exact_optimal_values",
    "exact_policy_evaluation",
    "occupancy_measure",
    "run",
    "run_classical_ucrl",
    "run_classical_ucrl_vtr",
    "run_quantum_ucrl",
    "run_quantum_ucrl_vtr",
    "summarize",
    "sweep",
]
