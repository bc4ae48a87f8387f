"""Controller extraction from a joint-belief action-value estimator.

Extraction grows a controller from the initial belief outward, always
expanding the open node with the largest weight-times-value product.  Each
(action, observation) branch either reuses a node whose reference belief is
within the merge threshold, creates a fresh node while the size bound allows,
or falls back to the closest existing node.  Branches the filter rules out,
including actions dropped by the action threshold, become self-loops, so the
controller stays total: it has a move for whatever actually happens.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import Belief, DecPomdpModel
from .controller import FscNode, StochasticFsc
from .rules import (HumanBranchKernel, marginal_human, marginal_robot,
                    softmax_joint)

# Branch masses at or below this are treated as impossible.
MASS_EPS = 1e-15

# L1 distance between distributions with disjoint support.
DISJOINT_L1 = 2.0


@dataclass(frozen=True)
class ExtractionParams:
    temperature: float
    max_nodes: int
    belief_merge_eps: float = 1e-3
    action_threshold: float = 0.1
    # Builder hint for pipelines that construct a sampling-based estimator;
    # the extraction loop itself never reads it.
    mcts_simulations: int = 10_000

    def __post_init__(self) -> None:
        if self.temperature < 0.0:
            raise ValueError("temperature must be >= 0")
        if self.max_nodes < 1:
            raise ValueError("max_nodes must be >= 1")
        if self.belief_merge_eps < 0.0:
            raise ValueError("belief merge threshold must be >= 0")
        if not 0.0 <= self.action_threshold < 1.0:
            raise ValueError("action threshold must be in [0, 1)")


class _Builder:
    def __init__(self, estimator, model: DecPomdpModel, objective_id: int,
                 params: ExtractionParams, sample_rng: np.random.Generator | None):
        self.estimator = estimator
        self.model = model
        self.objective_id = objective_id
        self.params = params
        self.sample_rng = sample_rng
        self.kernel = HumanBranchKernel(model)
        self.nodes: list[FscNode] = []
        self.open_ids: list[int] = []
        self.support_index: dict[int, list[int]] = {}
        self.n_merges = 0
        self.n_self_loops = 0

    def create_node(self, belief: Belief, weight: float) -> int:
        m = self.model
        q = np.asarray(self.estimator.q_values(belief), dtype=float)
        f = softmax_joint(q, self.params.temperature)
        sigma_h = marginal_human(f, m.n_human_actions, m.n_robot_actions,
                                 self.params.action_threshold)
        sigma_r = marginal_robot(f, m.n_human_actions, m.n_robot_actions)
        if self.sample_rng is not None:
            drawn = int(self.sample_rng.choice(m.n_human_actions, p=sigma_h))
            sigma_h = np.zeros(m.n_human_actions)
            sigma_h[drawn] = 1.0
        node = FscNode(id=len(self.nodes), action_probs=sigma_h, belief=belief,
                       weight=weight, value=float(q.max()), robot_rule=sigma_r,
                       objective=self.objective_id)
        self.nodes.append(node)
        self.open_ids.append(node.id)
        for s in belief.probs:
            self.support_index.setdefault(s, []).append(node.id)
        return node.id

    def pop_best(self) -> FscNode:
        best_pos = 0
        best_key = -np.inf
        for pos, i in enumerate(self.open_ids):
            n = self.nodes[i]
            key = n.weight * n.value
            if key > best_key:
                best_key, best_pos = key, pos
        return self.nodes[self.open_ids.pop(best_pos)]

    def closest_node(self, belief: Belief) -> tuple[int, float]:
        candidates: set[int] = set()
        for s in belief.probs:
            candidates.update(self.support_index.get(s, ()))
        best_id, best_dist = 0, DISJOINT_L1
        for i in sorted(candidates):
            d = belief.l1_distance(self.nodes[i].belief)
            if d < best_dist:
                best_id, best_dist = i, d
        return best_id, best_dist

    def expand(self, node: FscNode) -> None:
        m = self.model
        b_dense = node.belief.to_dense(m.n_states)
        for a in range(m.n_human_actions):
            if node.action_probs[a] <= 0.0:
                for o in range(m.n_human_observations):
                    node.edges[(a, o)] = {node.id: 1.0}
                    self.n_self_loops += 1
                continue
            post, mass = self.kernel.branches(b_dense, a, node.robot_rule)
            for o in range(m.n_human_observations):
                if mass[o] <= MASS_EPS:
                    node.edges[(a, o)] = {node.id: 1.0}
                    self.n_self_loops += 1
                    continue
                col = post.getcol(o)
                branch_belief = Belief.normalized(
                    zip(col.indices.tolist(), col.data.tolist()))
                branch_weight = node.weight * float(node.action_probs[a]) * float(mass[o])
                target, dist = self.closest_node(branch_belief)
                if dist > self.params.belief_merge_eps and len(self.nodes) < self.params.max_nodes:
                    target = self.create_node(branch_belief, branch_weight)
                else:
                    self.nodes[target].weight += branch_weight
                    self.n_merges += 1
                node.edges[(a, o)] = {target: 1.0}

    def run(self) -> StochasticFsc:
        self.create_node(self.model.b0, weight=1.0)
        while self.open_ids:
            self.expand(self.pop_best())
        m = self.model
        meta = {
            "kind": "deterministic" if self.sample_rng is not None else "stochastic",
            "objective": self.objective_id,
            "temperature": self.params.temperature,
            "max_nodes": self.params.max_nodes,
            "belief_merge_eps": self.params.belief_merge_eps,
            "action_threshold": self.params.action_threshold,
            "estimator": type(self.estimator).__name__,
            "estimator_calls": len(self.nodes),
            "merges": self.n_merges,
            "self_loops": self.n_self_loops,
        }
        return StochasticFsc(nodes=self.nodes, initial={0: 1.0},
                             n_human_actions=m.n_human_actions,
                             n_human_observations=m.n_human_observations,
                             metadata=meta)


def extract_stochastic_fsc(mpomdp_estimator, model: DecPomdpModel,
                           objective_id: int,
                           params: ExtractionParams) -> StochasticFsc:
    """Grow a stochastic controller for one objective.  The estimator must
    score beliefs over this model's states with joint-action values."""
    return _Builder(mpomdp_estimator, model, objective_id, params, None).run()


def sample_deterministic_fsc(mpomdp_estimator, model: DecPomdpModel,
                             objective_id: int, params: ExtractionParams,
                             seed: int = 0) -> StochasticFsc:
    """Like extract_stochastic_fsc, but each node commits to one action drawn
    from its pruned marginal, so only that action's branches are expanded."""
    rng = np.random.default_rng(seed)
    fsc = _Builder(mpomdp_estimator, model, objective_id, params, rng).run()
    fsc.metadata["seed"] = seed
    return fsc
