"""Multi-objective imitation learning on exactly solvable MOMDPs."""

from .momdp import (
    DeterministicPolicy,
    OccupancyMeasure,
    StochasticPolicy,
    TabularMOMDP,
    evaluate_returns,
    occupancy,
    scalarized_value_iteration,
)

__all__ = [
    "DeterministicPolicy",
    "OccupancyMeasure",
    "StochasticPolicy",
    "TabularMOMDP",
    "evaluate_returns",
    "occupancy",
    "scalarized_value_iteration",
]
__version__ = "0.1.0"
