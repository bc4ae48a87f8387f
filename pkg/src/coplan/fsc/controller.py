"""Stochastic finite-state controllers over human actions.

A controller node carries an action distribution and, for every action it can
play, one successor per human observation.  Structure is deterministic per
(action, observation) pair after extraction; successor entries still use a
distribution so unions and hand-built controllers fit the same type.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..errors import FscStructureError
from ..model import Belief

DIST_TOL = 1e-9


@dataclass
class FscNode:
    id: int
    action_probs: np.ndarray
    edges: dict[tuple[int, int], dict[int, float]] = field(default_factory=dict)
    belief: Belief | None = None
    weight: float = 0.0
    value: float | None = None
    robot_rule: np.ndarray | None = None
    objective: int = 0
    parent_fsc: int = 0

    def successor_ids(self) -> set[int]:
        out: set[int] = set()
        for dist in self.edges.values():
            out.update(dist)
        return out


@dataclass
class StochasticFsc:
    nodes: list[FscNode]
    initial: dict[int, float]
    n_human_actions: int
    n_human_observations: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.validate()

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self) -> Iterator[FscNode]:
        return iter(self.nodes)

    def node(self, node_id: int) -> FscNode:
        return self.nodes[node_id]

    def validate(self) -> None:
        if not self.nodes:
            raise FscStructureError("controller has no nodes")
        for i, n in enumerate(self.nodes):
            if n.id != i:
                raise FscStructureError(f"node at position {i} has id {n.id}")
            if n.action_probs.shape != (self.n_human_actions,):
                raise FscStructureError(f"node {i}: action distribution has shape "
                                        f"{n.action_probs.shape}")
            if (n.action_probs < 0.0).any() or abs(n.action_probs.sum() - 1.0) > DIST_TOL:
                raise FscStructureError(f"node {i}: action probabilities do not form "
                                        "a distribution")
            for a in np.flatnonzero(n.action_probs):
                for o in range(self.n_human_observations):
                    dist = n.edges.get((int(a), o))
                    if dist is None:
                        raise FscStructureError(
                            f"node {i}: no successor for action {a}, observation {o}")
                    if abs(sum(dist.values()) - 1.0) > DIST_TOL:
                        raise FscStructureError(
                            f"node {i}: successor weights for ({a}, {o}) do not sum to 1")
                    for m in dist:
                        if not 0 <= m < len(self.nodes):
                            raise FscStructureError(f"node {i}: successor {m} out of range")
        if not self.initial:
            raise FscStructureError("empty initial node distribution")
        if abs(sum(self.initial.values()) - 1.0) > DIST_TOL:
            raise FscStructureError("initial node weights do not sum to 1")
        for m in self.initial:
            if not 0 <= m < len(self.nodes):
                raise FscStructureError(f"initial node {m} out of range")

    def act(self, node_id: int, rng: np.random.Generator) -> int:
        psi = self.nodes[node_id].action_probs
        return int(rng.choice(len(psi), p=psi))

    def step(self, node_id: int, action: int, observation: int,
             rng: np.random.Generator) -> int:
        dist = self.nodes[node_id].edges.get((action, observation))
        if dist is None:
            raise FscStructureError(
                f"node {node_id} has no successor for action {action}, "
                f"observation {observation}")
        ids = sorted(dist)
        if len(ids) == 1:
            return ids[0]
        probs = np.array([dist[m] for m in ids])
        return int(ids[rng.choice(len(ids), p=probs / probs.sum())])

    def depth(self) -> int:
        """Eccentricity of the initial node set: the longest shortest path
        to any reachable node."""
        dist = {m: 0 for m in self.initial}
        queue = deque(dist)
        while queue:
            n = queue.popleft()
            for m in sorted(self.nodes[n].successor_ids()):
                if m not in dist:
                    dist[m] = dist[n] + 1
                    queue.append(m)
        return max(dist.values())

    def reachable_ids(self) -> list[int]:
        seen = set(self.initial)
        queue = deque(sorted(seen))
        while queue:
            n = queue.popleft()
            for m in sorted(self.nodes[n].successor_ids()):
                if m not in seen:
                    seen.add(m)
                    queue.append(m)
        return sorted(seen)

    def pruned(self) -> "StochasticFsc":
        """Drop nodes unreachable from the initial set, renumbering densely."""
        keep = self.reachable_ids()
        if len(keep) == len(self.nodes):
            return self
        remap = {old: new for new, old in enumerate(keep)}
        nodes = []
        for old in keep:
            n = self.nodes[old]
            edges = {key: {remap[m]: p for m, p in dist.items()}
                     for key, dist in n.edges.items()}
            nodes.append(FscNode(id=remap[old], action_probs=n.action_probs,
                                 edges=edges, belief=n.belief, weight=n.weight,
                                 value=n.value, robot_rule=n.robot_rule,
                                 objective=n.objective, parent_fsc=n.parent_fsc))
        initial = {remap[m]: p for m, p in self.initial.items()}
        return StochasticFsc(nodes=nodes, initial=initial,
                             n_human_actions=self.n_human_actions,
                             n_human_observations=self.n_human_observations,
                             metadata=dict(self.metadata))


def union_fsc(controllers: list[StochasticFsc], weights: list[float],
              metadata: dict | None = None) -> StochasticFsc:
    """Concatenate controllers into one whose initial distribution mixes the
    constituents' entry points by the given weights.  No edges cross between
    constituents, so a run stays inside the component it entered."""
    if len(controllers) != len(weights) or not controllers:
        raise ValueError("need one weight per controller")
    total = float(sum(weights))
    if total <= 0.0 or any(w < 0.0 for w in weights):
        raise ValueError("controller weights must be nonnegative with positive sum")
    n_a = controllers[0].n_human_actions
    n_o = controllers[0].n_human_observations
    for c in controllers:
        if c.n_human_actions != n_a or c.n_human_observations != n_o:
            raise FscStructureError("controllers disagree on action or observation count")
    nodes: list[FscNode] = []
    initial: dict[int, float] = {}
    offset = 0
    for k, (c, w) in enumerate(zip(controllers, weights)):
        for n in c.nodes:
            edges = {key: {m + offset: p for m, p in dist.items()}
                     for key, dist in n.edges.items()}
            nodes.append(FscNode(id=n.id + offset, action_probs=n.action_probs.copy(),
                                 edges=edges, belief=n.belief, weight=n.weight,
                                 value=n.value, robot_rule=n.robot_rule,
                                 objective=n.objective, parent_fsc=k))
        for m, p in c.initial.items():
            initial[m + offset] = (w / total) * p
        offset += len(c.nodes)
    meta = {"kind": "union", "weights": [w / total for w in weights],
            "sizes": [len(c) for c in controllers]}
    if metadata:
        meta.update(metadata)
    return StochasticFsc(nodes=nodes, initial=initial, n_human_actions=n_a,
                         n_human_observations=n_o, metadata=meta)
