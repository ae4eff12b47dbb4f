"""List-replicable planning and exploration for finite-horizon tabular MDPs."""

from .mdp import Policy, TabularMdp, backward_dp, evaluate_policy, max_occupancy, policy_occupancy

__version__ = "0.1.0"

__all__ = ["Policy", "TabularMdp", "backward_dp", "evaluate_policy", "max_occupancy", "policy_occupancy"]
