from .alpha import AlphaVectorPolicy, ValueAction, value_of
from .estimators import (
    AlphaVectorEstimator,
    JitteredEstimator,
    LookaheadScratch,
    MctsEstimator,
    RobotTieBreakEstimator,
    SupportsQV,
)
from .mcts import MctsBudget, QEstimates, mcts_estimate
from .oracle import ExactSmallOracle, exact_small_oracle
from .pbvi import PbviParams, pbvi_solve
from .vi import MdpSolution, ValueIterationEstimator, mdp_value_iteration

__all__ = [
    "AlphaVectorPolicy", "ValueAction", "value_of",
    "AlphaVectorEstimator", "JitteredEstimator", "LookaheadScratch",
    "MctsEstimator", "RobotTieBreakEstimator", "SupportsQV",
    "MctsBudget", "QEstimates", "mcts_estimate",
    "ExactSmallOracle", "exact_small_oracle",
    "PbviParams", "pbvi_solve",
    "MdpSolution", "ValueIterationEstimator", "mdp_value_iteration",
]
