"""Robot-side planning against a population of human controllers.

The robot plans in a POMDP over extended states ⟨world state, human node,
stored robot observation⟩.  Human behavior is folded into the transition
kernel through the controller's action rule and node transitions; the reward
of a state is the one for the objective its human node was extracted for, so
a single solve best-responds to the whole union.  Observations are read off
the stored component, which makes the observation kernel deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import CompilationLimitExceeded
from .fsc.controller import StochasticFsc
from .model import Belief, PomdpModel
from .model import DecPomdpModel
from .solver.alpha import AlphaVectorPolicy
from .solver.pbvi import PbviParams, pbvi_solve

REACHABLE_CAP_DEFAULT = 2_000_000


class ExtendedState(NamedTuple):
    state: int
    node: int
    obs: int


def _initial_extended(model: DecPomdpModel, union: StochasticFsc,
                      noop: int) -> dict[ExtendedState, float]:
    """Product of the world prior and the controller's initial distribution,
    with the stored observation drawn as if a no-op had just happened."""
    Om = model.observation[noop]
    n_or = model.n_robot_observations
    init: dict[ExtendedState, float] = {}
    for s, p_s in sorted(model.b0.probs.items()):
        row: dict[int, float] = {}
        for k in range(Om.indptr[s], Om.indptr[s + 1]):
            o_r = int(Om.indices[k]) % n_or
            row[o_r] = row.get(o_r, 0.0) + float(Om.data[k])
        for n, p_n in sorted(union.initial.items()):
            for o_r, p_o in sorted(row.items()):
                e = ExtendedState(s, n, o_r)
                init[e] = init.get(e, 0.0) + p_s * p_n * p_o
    return init


def compile_robot_pomdp(model: DecPomdpModel, union: StochasticFsc,
                        reachable_cap: int = REACHABLE_CAP_DEFAULT) -> PomdpModel:
    """Forward-close the extended state space from the initial product belief
    and assemble the robot POMDP.  Indexing follows discovery order, so
    identical inputs compile identically."""
    noop = model.meta.get("noop_joint_action")
    if noop is None:
        raise ValueError("model.meta lacks 'noop_joint_action', needed to "
                         "define the initial stored observation")
    n_ar = model.n_robot_actions
    n_or = model.n_robot_observations
    init = _initial_extended(model, union, int(noop))

    index: dict[ExtendedState, int] = {}
    states: list[ExtendedState] = []

    def intern(e: ExtendedState) -> int:
        i = index.get(e)
        if i is None:
            i = len(states)
            if i >= reachable_cap:
                raise CompilationLimitExceeded(
                    f"extended reachable set exceeds {reachable_cap} states; "
                    "lower the controller size bound")
            index[e] = i
            states.append(e)
        return i

    for e in init:
        intern(e)

    rows: list[list[int]] = [[] for _ in range(n_ar)]
    cols: list[list[int]] = [[] for _ in range(n_ar)]
    vals: list[list[float]] = [[] for _ in range(n_ar)]
    rewards: list[np.ndarray] = []

    cursor = 0
    while cursor < len(states):
        e = states[cursor]
        i = cursor
        cursor += 1
        node = union.nodes[e.node]
        reward = model.rewards[node.objective]
        r_row = np.zeros(n_ar)
        for a_r in range(n_ar):
            succ: dict[int, float] = {}
            for a_h in np.flatnonzero(node.action_probs):
                a_h = int(a_h)
                psi = float(node.action_probs[a_h])
                j = model.joint_action(a_h, a_r)
                r_row[a_r] += psi * float(reward[e.state, j])
                T = model.transition[j]
                Om = model.observation[j]
                for k in range(T.indptr[e.state], T.indptr[e.state + 1]):
                    s2 = int(T.indices[k])
                    w = psi * float(T.data[k])
                    for kk in range(Om.indptr[s2], Om.indptr[s2 + 1]):
                        o_joint = int(Om.indices[kk])
                        o_h, o_r = divmod(o_joint, n_or)
                        w2 = w * float(Om.data[kk])
                        for n2, p_n2 in node.edges[(a_h, o_h)].items():
                            i2 = intern(ExtendedState(s2, n2, o_r))
                            succ[i2] = succ.get(i2, 0.0) + w2 * p_n2
            for i2, p in sorted(succ.items()):
                rows[a_r].append(i)
                cols[a_r].append(i2)
                vals[a_r].append(p)
        rewards.append(r_row)

    E = len(states)
    transition = tuple(
        sp.csr_matrix((vals[a], (rows[a], cols[a])), shape=(E, E))
        for a in range(n_ar))
    obs = sp.csr_matrix(
        (np.ones(E), (np.arange(E), np.array([e.obs for e in states]))),
        shape=(E, n_or))
    b0 = Belief.normalized((index[e], p) for e, p in init.items())
    return PomdpModel(
        states=tuple(f"{e.state}|{e.node}|{e.obs}" for e in states),
        actions=model.robot_actions,
        observations=model.robot_observations,
        transition=transition,
        observation=(obs,) * n_ar,
        reward=np.array(rewards),
        b0=b0,
        gamma=model.gamma,
        meta={"kind": "robot-extended",
              "extended_states": [list(e) for e in states],
              "n_union_nodes": len(union),
              "objectives": [n.objective for n in union.nodes],
              "parent_fsc": [n.parent_fsc for n in union.nodes],
              "source": dict(model.meta)},
    )


@dataclass
class RobotPolicy:
    """Solved policy plus the single-session execution state."""

    compiled: PomdpModel
    policy: AlphaVectorPolicy
    recovery: str = "condition-obs"
    belief: Belief = field(init=False)
    steps: int = field(init=False, default=0)
    recovery_events: list[dict] = field(init=False, default_factory=list)
    _last_action: int | None = field(init=False, default=None)
    _stored_obs: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.belief = self.compiled.b0
        self._stored_obs = np.array(
            [e[2] for e in self.compiled.meta["extended_states"]], dtype=np.int64)

    def reset(self) -> None:
        self.belief = self.compiled.b0
        self.steps = 0
        self._last_action = None
        self.recovery_events = []

    def fresh(self) -> "RobotPolicy":
        return RobotPolicy(self.compiled, self.policy, self.recovery)

    def _recovered(self, o_r: int, stage: str) -> Belief:
        self.recovery_events.append(
            {"step": self.steps, "observation": int(o_r), "stage": stage})
        match = np.flatnonzero(self._stored_obs == o_r)
        if match.size:
            return Belief({int(i): 1.0 / match.size for i in match})
        E = len(self.compiled.states)
        return Belief({i: 1.0 / E for i in range(E)})

    def _filtered(self, o_r: int) -> Belief:
        E = len(self.compiled.states)
        if self._last_action is None:
            # No transition yet: condition the initial belief on the stored
            # observation alone.
            mass = {i: p for i, p in self.belief.probs.items()
                    if self._stored_obs[i] == o_r}
            if mass:
                return Belief.normalized(mass.items())
            return self._recovered(o_r, "initial-mismatch")
        dense = self.belief.to_dense(E)
        pred = self.compiled.transition[self._last_action].T.dot(dense)
        pred[self._stored_obs != o_r] = 0.0
        total = pred.sum()
        if total > 0.0:
            nz = np.flatnonzero(pred)
            return Belief({int(i): float(pred[i] / total) for i in nz})
        return self._recovered(o_r, "zero-probability")

    def step(self, o_r: int) -> int:
        """Fold one observation into the belief and commit to an action."""
        self.belief = self._filtered(o_r)
        action = self.policy.greedy(self.belief).action
        self._last_action = action
        self.steps += 1
        return action

    def objective_posterior(self) -> np.ndarray:
        """Belief mass per parent controller of the union."""
        parents = self.compiled.meta["parent_fsc"]
        ext = self.compiled.meta["extended_states"]
        n_p = max(parents) + 1
        out = np.zeros(n_p)
        for i, p in self.belief.probs.items():
            out[parents[ext[i][1]]] += p
        return out


def solve_robot(compiled: PomdpModel, solver_params: PbviParams | None = None,
                recovery: str = "condition-obs") -> RobotPolicy:
    policy = pbvi_solve(compiled, solver_params or PbviParams())
    return RobotPolicy(compiled=compiled, policy=policy, recovery=recovery)


def robot_step(policy: RobotPolicy, o_r: int) -> int:
    return policy.step(o_r)
