"""Exact finite-horizon expectimax for small POMDPs.

V_h(b) = max_a [ R(b,a) + gamma * sum_{o: Pr(o|b,a)>0} Pr(o|b,a) V_{h-1}(b^{a,o}) ]

Beliefs repeat heavily under filtering, so the recursion memoizes on a rounded
belief key.  Work is guarded two ways: instances whose worst-case leaf count
(|A|*|Omega|)^h stays under the budget are admitted outright; anything larger
runs with a live cap on distinct memo expansions and raises InstanceTooLarge
when the cap trips.
"""
from __future__ import annotations

import numpy as np

from ..errors import InstanceTooLarge
from ..model import Belief, PomdpModel, belief_update, observation_probabilities

LEAF_GUARD = 10_000_000
_KEY_DECIMALS = 11


def _belief_key(b: Belief) -> tuple:
    return tuple(sorted((s, round(p, _KEY_DECIMALS)) for s, p in b.probs.items()))


class ExactSmallOracle:
    """Exact horizon-limited solver; also usable as a Q/V estimator."""

    def __init__(self, model: PomdpModel, horizon: int, work_guard: int = LEAF_GUARD):
        if horizon < 0:
            raise ValueError(f"horizon {horizon} must be >= 0")
        self.model = model
        self.horizon = horizon
        self.work_guard = work_guard
        branch = model.n_actions * model.n_observations
        self._precleared = branch ** horizon <= work_guard if horizon else True
        self._memo: dict[tuple, np.ndarray] = {}
        self._expansions = 0

    def q_values(self, b: Belief, horizon: int | None = None) -> np.ndarray:
        h = self.horizon if horizon is None else horizon
        if h <= 0:
            return np.array([self.model.expected_reward(b, a)
                             for a in range(self.model.n_actions)])
        return self._q(b, h)

    def value(self, b: Belief, horizon: int | None = None) -> float:
        h = self.horizon if horizon is None else horizon
        if h <= 0:
            return 0.0
        return float(self.q_values(b, h).max())

    def _q(self, b: Belief, h: int) -> np.ndarray:
        key = (h, _belief_key(b))
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        if not self._precleared:
            self._expansions += 1
            if self._expansions > self.work_guard:
                raise InstanceTooLarge(
                    f"exact oracle exceeded {self.work_guard} expansions at horizon {self.horizon}")
        m = self.model
        q = np.empty(m.n_actions)
        for a in range(m.n_actions):
            total = m.expected_reward(b, a)
            if h > 1 and m.gamma > 0.0:
                probs = observation_probabilities(m, b, a)
                cont = 0.0
                for o in np.flatnonzero(probs > 0.0):
                    nb = belief_update(m, b, a, int(o))
                    cont += probs[o] * self._q(nb, h - 1).max()
                total += m.gamma * cont
            q[a] = total
        self._memo[key] = q
        return q


def exact_small_oracle(model: PomdpModel, horizon: int) -> ExactSmallOracle:
    return ExactSmallOracle(model, horizon)
