from .controller import FscNode, StochasticFsc, union_fsc
from .evaluate import (ValueEstimate, action_sequence_distribution,
                       fsc_policy_value, mc_team_value, team_value)
from .extract import (ExtractionParams, extract_stochastic_fsc,
                      sample_deterministic_fsc)
from .io import fsc_from_dict, fsc_to_dict, load_fsc, save_fsc
from .rules import (HumanBranchKernel, branch_posterior, history_probability,
                    human_belief_update, marginal_human, marginal_robot,
                    softmax_joint)

__all__ = [
    "FscNode", "StochasticFsc", "union_fsc",
    "ValueEstimate", "action_sequence_distribution", "fsc_policy_value",
    "mc_team_value", "team_value",
    "ExtractionParams", "extract_stochastic_fsc", "sample_deterministic_fsc",
    "fsc_from_dict", "fsc_to_dict", "load_fsc", "save_fsc",
    "HumanBranchKernel", "branch_posterior", "history_probability",
    "human_belief_update", "marginal_human", "marginal_robot", "softmax_joint",
]
