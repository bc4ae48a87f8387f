"""Value iteration on the fully observable relaxation of a POMDP.

The resulting Q* upper-bounds the partially observable optimum, is exact on
point-mass beliefs when transitions are deterministic (point-mass beliefs stay
point masses under the joint filter), and generalizes to mixed beliefs by
belief-weighted averaging.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..model import Belief, PomdpModel


@dataclass(eq=False)
class MdpSolution:
    q: np.ndarray        # S x A
    v: np.ndarray        # S
    residual: float
    iterations: int


def mdp_value_iteration(model: PomdpModel, tol: float = 1e-6,
                        max_iterations: int = 100_000) -> MdpSolution:
    S, A = model.n_states, model.n_actions
    stacked = sp.vstack(model.transition, format="csr")  # (A*S) x S, action-major
    R = model.reward.T.reshape(A * S)                    # action-major to match
    v = np.zeros(S)
    gamma = model.gamma
    residual = np.inf
    it = 0
    while it < max_iterations:
        it += 1
        q = (R + gamma * (stacked @ v)).reshape(A, S)
        v_new = q.max(axis=0)
        residual = float(np.abs(v_new - v).max())
        v = v_new
        if residual <= tol:
            break
    q = (R + gamma * (stacked @ v)).reshape(A, S)
    return MdpSolution(q=q.T.copy(), v=v, residual=residual, iterations=it)


class ValueIterationEstimator:
    """Belief-weighted Q* of the fully observable relaxation.

    q_values(b)[a] = sum_s b(s) Q*(s, a); value(b) = max_a q_values(b)[a].
    """

    def __init__(self, model: PomdpModel, tol: float = 1e-6,
                 max_iterations: int = 100_000):
        self.model = model
        self.solution = mdp_value_iteration(model, tol=tol, max_iterations=max_iterations)

    def q_values(self, b: Belief) -> np.ndarray:
        idx, val = b.arrays()
        return val @ self.solution.q[idx]

    def value(self, b: Belief) -> float:
        return float(self.q_values(b).max())

    def state_value(self, s: int) -> float:
        return float(self.solution.v[s])
