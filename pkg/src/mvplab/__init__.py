"""Tabular episodic RL lab: MVP learner, exact gap/variance solvers, hard instances, regret harness."""
from .errors import DomainError, MvpLabError, NoGapsError, ValidationError
from .mdp import (DeterministicPolicy, FiniteRewardDist, TabularMdp, Trajectory, max_total_reward,
                  sample_trajectory, validate_mdp)

__all__ = [
    "DeterministicPolicy", "DomainError", "FiniteRewardDist", "MvpLabError", "NoGapsError",
    "TabularMdp", "Trajectory", "ValidationError", "max_total_reward", "sample_trajectory",
    "validate_mdp",
]
__version__ = "0.1.0"
