"""Online Monte-Carlo tree search over the belief MDP (POMCP-style).

Simulations start from states drawn from a root particle set, descend the
history tree with UCB action selection, and push sampled (action, observation)
transitions through the model kernels.  New leaves are evaluated either by a
uniform-random rollout or, when ``leaf_value`` is given, by bootstrapping with
that state-value function (faster, lower variance).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..model import Belief, PomdpModel


@dataclass(frozen=True)
class MctsBudget:
    simulations: int = 10_000
    depth: int = 30
    exploration_c: float = 10.0
    seed: int = 0
    root_particles: int = 1000


@dataclass(eq=False)
class QEstimates:
    q: np.ndarray
    counts: np.ndarray
    std_err: np.ndarray
    simulations: int
    seed: int

    def best_action(self) -> int:
        return int(self.q.argmax())


class _Node:
    __slots__ = ("visits", "counts", "q", "children")

    def __init__(self, n_actions: int):
        self.visits = 0
        self.counts = np.zeros(n_actions, dtype=np.int64)
        self.q = np.zeros(n_actions)
        self.children: dict[tuple[int, int], _Node] = {}


class _Sampler:
    """Cached cumulative rows of the transition/observation kernels."""

    def __init__(self, model: PomdpModel):
        self.model = model
        self._trans: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
        self._obs: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    def _row(self, cache, mat, a, s):
        key = (a, s)
        hit = cache.get(key)
        if hit is None:
            lo, hi = mat.indptr[s], mat.indptr[s + 1]
            hit = (mat.indices[lo:hi], np.cumsum(mat.data[lo:hi]))
            cache[key] = hit
        return hit

    def next_state(self, a: int, s: int, rng) -> int:
        cols, cum = self._row(self._trans, self.model.transition[a], a, s)
        if cols.size == 1:
            return int(cols[0])
        return int(cols[np.searchsorted(cum, rng.random() * cum[-1], side="right")])

    def observation(self, a: int, s2: int, rng) -> int:
        cols, cum = self._row(self._obs, self.model.observation[a], a, s2)
        if cols.size == 1:
            return int(cols[0])
        return int(cols[np.searchsorted(cum, rng.random() * cum[-1], side="right")])


def _rollout(model, sampler, s, depth, rng):
    total, scale = 0.0, 1.0
    for _ in range(depth):
        a = int(rng.integers(model.n_actions))
        total += scale * model.reward[s, a]
        scale *= model.gamma
        if scale == 0.0:
            break
        s = sampler.next_state(a, s, rng)
    return total


def mcts_estimate(model: PomdpModel, b: Belief, budget: MctsBudget | None = None,
                  leaf_value: Callable[[int], float] | None = None) -> QEstimates:
    """Estimate Q(b, a) for every action; reproducible for a given seed.

    With depth 0 the estimate is the analytic immediate reward R(b, a).
    """
    budget = budget or MctsBudget()
    n_actions = model.n_actions
    if budget.depth <= 0:
        q = np.array([model.expected_reward(b, a) for a in range(n_actions)])
        return QEstimates(q=q, counts=np.zeros(n_actions, dtype=np.int64),
                          std_err=np.zeros(n_actions), simulations=0, seed=budget.seed)

    rng = np.random.default_rng(budget.seed)
    idx, val = b.arrays()
    particles = rng.choice(idx, size=budget.root_particles, p=val)
    sampler = _Sampler(model)
    root = _Node(n_actions)
    c = budget.exploration_c
    gamma = model.gamma
    # Welford accumulators for root-action return spread
    mean = np.zeros(n_actions)
    m2 = np.zeros(n_actions)

    def select(node: _Node) -> int:
        untried = np.flatnonzero(node.counts == 0)
        if untried.size:
            return int(untried[0])
        ucb = node.q + c * np.sqrt(math.log(node.visits) / node.counts)
        return int(ucb.argmax())

    def simulate(s: int, node: _Node, depth: int) -> float:
        a = select(node)
        r = float(model.reward[s, a])
        if depth == 1 or gamma == 0.0:
            ret = r
        else:
            s2 = sampler.next_state(a, s, rng)
            o = sampler.observation(a, s2, rng)
            child = node.children.get((a, o))
            if child is None:
                node.children[(a, o)] = child = _Node(n_actions)
                if leaf_value is not None:
                    tail = leaf_value(s2)
                else:
                    tail = _rollout(model, sampler, s2, depth - 1, rng)
                ret = r + gamma * tail
            else:
                ret = r + gamma * simulate(s2, child, depth - 1)
        node.visits += 1
        node.counts[a] += 1
        node.q[a] += (ret - node.q[a]) / node.counts[a]
        return ret

    for i in range(budget.simulations):
        s = int(particles[i % budget.root_particles])
        before = root.counts.copy()
        ret = simulate(s, root, budget.depth)
        a = int(np.flatnonzero(root.counts - before)[0])
        delta = ret - mean[a]
        mean[a] += delta / root.counts[a]
        m2[a] += delta * (ret - mean[a])

    std_err = np.zeros(n_actions)
    for a in range(n_actions):
        if root.counts[a] > 1:
            std_err[a] = math.sqrt(m2[a] / (root.counts[a] - 1) / root.counts[a])
    return QEstimates(q=root.q.copy(), counts=root.counts.copy(), std_err=std_err,
                      simulations=budget.simulations, seed=budget.seed)
