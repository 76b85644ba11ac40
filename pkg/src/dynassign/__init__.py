"""Dynamic assignment engine: static LAP core, sequential decision
mechanisms driven by simulated arrival futures, and the surrounding
backtest / service / CLI plumbing."""

__version__ = "0.1.0"

from .errors import InfeasibleError, ValidationError
from .lap import AgentPool, Assignment, CostMatrix, brute_force_solve, expand_capacity, solve

__all__ = [
    "AgentPool",
    "Assignment",
    "CostMatrix",
    "InfeasibleError",
    "ValidationError",
    "brute_force_solve",
    "expand_capacity",
    "solve",
]
