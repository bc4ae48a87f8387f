"""Q/V estimator backends behind a tiny common protocol.

Extraction and evaluation code only ever calls ``q_values(belief)`` and
``value(belief)``, so any of these (or an exact oracle) can drive them.
"""
from __future__ import annotations

from dataclasses import replace
from typing import Protocol

import numpy as np

from ..model import Belief, PomdpModel
from .alpha import AlphaVectorPolicy
from .mcts import MctsBudget, mcts_estimate
from .oracle import ExactSmallOracle, _belief_key
from .vi import ValueIterationEstimator


class SupportsQV(Protocol):
    def q_values(self, b: Belief) -> np.ndarray: ...
    def value(self, b: Belief) -> float: ...


class LookaheadScratch:
    """Shared sparse scratch for one-step lookahead over an alpha set."""

    def __init__(self, model: PomdpModel):
        self.model = model
        self.obs_csc = [Om.tocsc() for Om in model.observation]

    def q_values(self, vectors: np.ndarray, b_idx, b_val) -> np.ndarray:
        """Q(b,a) = R(b,a) + gamma * sum_o Pr(o|b,a) * max_k <vectors[k], b^{a,o}>."""
        m = self.model
        q = np.empty(m.n_actions)
        for a in range(m.n_actions):
            sub = m.transition[a][b_idx]
            pred = sub.T.dot(b_val)
            r = float(m.reward[b_idx, a] @ b_val)
            cont = 0.0
            if m.gamma > 0.0:
                w_o = m.observation[a].T.dot(pred)
                csc = self.obs_csc[a]
                for o in np.flatnonzero(w_o > 0.0):
                    lo, hi = csc.indptr[o], csc.indptr[o + 1]
                    rows = csc.indices[lo:hi]
                    post = pred[rows] * csc.data[lo:hi]
                    mass = post.sum()
                    if mass <= 0.0:
                        continue
                    vals = vectors[:, rows] @ post
                    cont += float(vals.max())  # posterior left unnormalized: mass folds in
            q[a] = r + m.gamma * cont
        return q


class AlphaVectorEstimator:
    """One-step lookahead on a solved alpha-vector policy."""

    def __init__(self, model: PomdpModel, policy: AlphaVectorPolicy):
        self.model = model
        self.policy = policy
        self._scratch = LookaheadScratch(model)

    def q_values(self, b: Belief) -> np.ndarray:
        idx, val = b.arrays()
        return self._scratch.q_values(self.policy.vectors, idx, val)

    def value(self, b: Belief) -> float:
        return self.policy.value(b)


class JitteredEstimator:
    """Base estimator plus zero-mean Gaussian noise, seeded per belief.

    Emulates the estimate scatter of sampling-based solvers while staying
    deterministic and cheap; useful when studying how controller extraction
    reacts to imperfect values.  The same belief always gets the same noise.
    """

    def __init__(self, base: SupportsQV, scale: float = 1.0, seed: int = 0):
        self.base = base
        self.scale = scale
        self.seed = seed

    def q_values(self, b: Belief) -> np.ndarray:
        q = np.asarray(self.base.q_values(b), dtype=float)
        rng = np.random.default_rng((self.seed, abs(hash(_belief_key(b)))))
        return q + self.scale * rng.standard_normal(q.shape)

    def value(self, b: Belief) -> float:
        return float(self.q_values(b).max())


class RobotTieBreakEstimator:
    """Base estimator with robot-side argmax ties demoted.

    Exact values on symmetric tasks tie whole blocks of joint actions whose
    robot half is irrelevant; a zero-temperature rule then fans uniformly
    over the block and the filtered belief smears across robot positions.
    This wrapper keeps one representative joint per tied human action and
    nudges the rest just below the tie tolerance, so human-side choice
    structure survives while the robot-side fan collapses.
    """

    def __init__(self, base: SupportsQV, n_robot_actions: int,
                 tie_tol: float = 1e-9, demote: float = 1e-6):
        self.base = base
        self.n_robot_actions = n_robot_actions
        self.tie_tol = tie_tol
        self.demote = demote

    def q_values(self, b: Belief) -> np.ndarray:
        q = np.asarray(self.base.q_values(b), dtype=float).copy()
        seen: set[int] = set()
        for j in np.flatnonzero(q >= q.max() - self.tie_tol):
            a_h = int(j) // self.n_robot_actions
            if a_h in seen:
                q[j] -= self.demote
            else:
                seen.add(a_h)
        return q

    def value(self, b: Belief) -> float:
        return float(self.base.value(b))


class MctsEstimator:
    """Fresh tree search per query; per-query seeds advance deterministically."""

    def __init__(self, model: PomdpModel, budget: MctsBudget | None = None,
                 leaf_value=None):
        self.model = model
        self.budget = budget or MctsBudget()
        self.leaf_value = leaf_value
        self._counter = 0
        self._cache: dict[tuple, np.ndarray] = {}

    def q_values(self, b: Belief) -> np.ndarray:
        key = _belief_key(b)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        budget = replace(self.budget, seed=self.budget.seed + self._counter)
        self._counter += 1
        est = mcts_estimate(self.model, b, budget, leaf_value=self.leaf_value)
        if len(self._cache) > 256:
            self._cache.clear()
        self._cache[key] = est.q
        return est.q

    def value(self, b: Belief) -> float:
        return float(self.q_values(b).max())


__all__ = [
    "SupportsQV", "LookaheadScratch", "AlphaVectorEstimator",
    "JitteredEstimator", "RobotTieBreakEstimator",
    "MctsEstimator", "ValueIterationEstimator", "ExactSmallOracle",
]
