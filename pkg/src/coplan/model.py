"""Tabular models for the two-agent repair setting and their single-agent relaxation.

A two-agent decision model factors actions and observations into a human and a
robot component.  Kernels are stored per joint action as scipy CSR matrices:
``transition[j]`` is |S| x |S| and ``observation[j]`` is |S| x |O_joint| with
joint observation index ``o = o_h * n_robot_obs + o_r``.  Rewards are one dense
|S| x |A_joint| table per objective.

The single-agent relaxation (``to_mpomdp``) treats the joint action as a single
action and the joint observation as a single observation; kernel matrices are
shared, not copied.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ModelValidationError, ZeroProbabilityObservation

ROW_TOL = 1e-9
BELIEF_TOL = 1e-12


@dataclass(frozen=True)
class Belief:
    """Sparse probability distribution over state indices.

    Entries are strictly positive and sum to 1 within ``BELIEF_TOL``.  Use the
    factories (``dirac``, ``normalized``, ``from_dense``) rather than building
    the dict by hand.
    """

    probs: dict[int, float]

    def __post_init__(self):
        if not self.probs:
            raise ModelValidationError("belief has empty support")
        total = 0.0
        for s, p in self.probs.items():
            if s < 0:
                raise ModelValidationError(f"belief has negative state index {s}")
            if p <= 0.0:
                raise ModelValidationError(f"belief entry for state {s} is {p}, must be > 0")
            total += p
        if abs(total - 1.0) > 1e-9:
            raise ModelValidationError(f"belief mass {total} is not 1")

    @staticmethod
    def dirac(state: int) -> "Belief":
        return Belief({int(state): 1.0})

    @staticmethod
    def normalized(pairs) -> "Belief":
        """Build from (state, weight) pairs, dropping zeros and normalizing."""
        acc: dict[int, float] = {}
        for s, w in pairs:
            if w < 0:
                raise ModelValidationError(f"negative weight {w} for state {s}")
            if w > 0.0:
                acc[int(s)] = acc.get(int(s), 0.0) + float(w)
        total = sum(acc.values())
        if total <= 0.0:
            raise ModelValidationError("cannot normalize zero-mass belief")
        return Belief({s: w / total for s, w in sorted(acc.items())})

    @staticmethod
    def from_dense(vec) -> "Belief":
        vec = np.asarray(vec, dtype=float)
        return Belief.normalized((int(s), float(vec[s])) for s in np.flatnonzero(vec))

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(self.probs.keys())

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        idx = np.fromiter(self.probs.keys(), dtype=np.int64, count=len(self.probs))
        val = np.fromiter(self.probs.values(), dtype=float, count=len(self.probs))
        return idx, val

    def to_dense(self, n_states: int) -> np.ndarray:
        out = np.zeros(n_states)
        for s, p in self.probs.items():
            out[s] = p
        return out

    def dot(self, vec: np.ndarray) -> float:
        return float(sum(p * vec[s] for s, p in self.probs.items()))

    def l1_distance(self, other: "Belief") -> float:
        keys = self.probs.keys() | other.probs.keys()
        return sum(abs(self.probs.get(s, 0.0) - other.probs.get(s, 0.0)) for s in keys)

    def __len__(self) -> int:
        return len(self.probs)


def _check_kernel(mats, n_rows, n_cols, what):
    for a, m in enumerate(mats):
        if m.shape != (n_rows, n_cols):
            raise ModelValidationError(
                f"{what}[{a}] has shape {m.shape}, expected {(n_rows, n_cols)}"
            )
        if m.nnz and m.data.min() < -ROW_TOL:
            raise ModelValidationError(f"{what}[{a}] has negative entries")
        sums = np.asarray(m.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
        if bad.size:
            r = int(bad[0])
            raise ModelValidationError(
                f"{what}[{a}] row {r} sums to {sums[r]:.12g}, expected 1"
            )


def _check_belief_indices(b: Belief, n_states: int, what="b0"):
    for s in b.probs:
        if s >= n_states:
            raise ModelValidationError(f"{what} references state {s} >= {n_states}")


@dataclass(eq=False)
class PomdpModel:
    """Single-agent tabular POMDP.  Immutable after construction."""

    states: tuple[str, ...]
    actions: tuple[str, ...]
    observations: tuple[str, ...]
    transition: tuple[sp.csr_matrix, ...]   # per action, S x S
    observation: tuple[sp.csr_matrix, ...]  # per action, S x O
    reward: np.ndarray                      # S x A
    b0: Belief
    gamma: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        S, A, O = len(self.states), len(self.actions), len(self.observations)
        if len(self.transition) != A or len(self.observation) != A:
            raise ModelValidationError("kernel count does not match action count")
        _check_kernel(self.transition, S, S, "transition")
        _check_kernel(self.observation, S, O, "observation")
        if self.reward.shape != (S, A):
            raise ModelValidationError(
                f"reward shape {self.reward.shape}, expected {(S, A)}"
            )
        if not (0.0 <= self.gamma < 1.0):
            raise ModelValidationError(f"gamma {self.gamma} outside [0, 1)")
        _check_belief_indices(self.b0, S)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_observations(self) -> int:
        return len(self.observations)

    def expected_reward(self, b: Belief, a: int) -> float:
        return b.dot(self.reward[:, a])


@dataclass(eq=False)
class DecPomdpModel:
    """Two-agent decision model with factored actions and observations."""

    states: tuple[str, ...]
    human_actions: tuple[str, ...]
    robot_actions: tuple[str, ...]
    human_observations: tuple[str, ...]
    robot_observations: tuple[str, ...]
    transition: tuple[sp.csr_matrix, ...]   # per joint action, S x S
    observation: tuple[sp.csr_matrix, ...]  # per joint action, S x (OH*OR)
    rewards: tuple[np.ndarray, ...]         # per objective, S x A_joint
    b0: Belief
    gamma: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        S = len(self.states)
        A = self.n_joint_actions
        O = self.n_joint_observations
        if len(self.transition) != A or len(self.observation) != A:
            raise ModelValidationError("kernel count does not match joint action count")
        _check_kernel(self.transition, S, S, "transition")
        _check_kernel(self.observation, S, O, "observation")
        if not self.rewards:
            raise ModelValidationError("model needs at least one reward objective")
        for i, r in enumerate(self.rewards):
            if r.shape != (S, A):
                raise ModelValidationError(
                    f"rewards[{i}] shape {r.shape}, expected {(S, A)}"
                )
        if not (0.0 <= self.gamma < 1.0):
            raise ModelValidationError(f"gamma {self.gamma} outside [0, 1)")
        _check_belief_indices(self.b0, S)

    # -- index helpers ----------------------------------------------------

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_objectives(self) -> int:
        return len(self.rewards)

    @property
    def n_human_actions(self) -> int:
        return len(self.human_actions)

    @property
    def n_robot_actions(self) -> int:
        return len(self.robot_actions)

    @property
    def n_joint_actions(self) -> int:
        return len(self.human_actions) * len(self.robot_actions)

    @property
    def n_human_observations(self) -> int:
        return len(self.human_observations)

    @property
    def n_robot_observations(self) -> int:
        return len(self.robot_observations)

    @property
    def n_joint_observations(self) -> int:
        return self.n_human_observations * self.n_robot_observations

    def joint_action(self, a_h: int, a_r: int) -> int:
        return a_h * self.n_robot_actions + a_r

    def split_action(self, j: int) -> tuple[int, int]:
        return divmod(j, self.n_robot_actions)

    def joint_observation(self, o_h: int, o_r: int) -> int:
        return o_h * self.n_robot_observations + o_r

    def split_observation(self, o: int) -> tuple[int, int]:
        return divmod(o, self.n_robot_observations)


def to_mpomdp(model: DecPomdpModel, objective_id: int) -> PomdpModel:
    """Relax a two-agent model to a single-agent POMDP over joint actions.

    The relaxation assumes one controller picks the joint action and sees the
    joint observation.  Kernels are shared with the source model.
    """
    if not (0 <= objective_id < model.n_objectives):
        raise ModelValidationError(
            f"objective {objective_id} outside 0..{model.n_objectives - 1}"
        )
    joint_actions = tuple(
        f"{h}+{r}" for h in model.human_actions for r in model.robot_actions
    )
    joint_obs = tuple(
        f"{h}|{r}" for h in model.human_observations for r in model.robot_observations
    )
    return PomdpModel(
        states=model.states,
        actions=joint_actions,
        observations=joint_obs,
        transition=model.transition,
        observation=model.observation,
        reward=model.rewards[objective_id],
        b0=model.b0,
        gamma=model.gamma,
        meta=dict(model.meta, objective=objective_id),
    )


def predicted_support(model, b: Belief, a: int) -> dict[int, float]:
    """Unnormalized next-state mass sum_s T(s,a,s') b(s), as a sparse dict."""
    T = model.transition[a]
    out: dict[int, float] = {}
    indptr, indices, data = T.indptr, T.indices, T.data
    for s, p in b.probs.items():
        for k in range(indptr[s], indptr[s + 1]):
            sp_ = int(indices[k])
            out[sp_] = out.get(sp_, 0.0) + p * float(data[k])
    return out


def belief_update(model: PomdpModel, b: Belief, a: int, o: int) -> Belief:
    """Bayes filter step: b'(s') proportional to O(a,s',o) sum_s T(s,a,s') b(s).

    Raises ZeroProbabilityObservation when o has zero likelihood under (b, a).
    """
    if not (0 <= a < model.n_actions):
        raise ModelValidationError(f"action {a} outside 0..{model.n_actions - 1}")
    if not (0 <= o < model.n_observations):
        raise ModelValidationError(f"observation {o} outside 0..{model.n_observations - 1}")
    _check_belief_indices(b, model.n_states, "belief")
    pred = predicted_support(model, b, a)
    Om = model.observation[a]
    indptr, indices, data = Om.indptr, Om.indices, Om.data
    post: dict[int, float] = {}
    for sp_, mass in pred.items():
        if mass <= 0.0:
            continue
        lik = 0.0
        for k in range(indptr[sp_], indptr[sp_ + 1]):
            if indices[k] == o:
                lik = float(data[k])
                break
        if lik > 0.0:
            post[sp_] = mass * lik
    if not post:
        raise ZeroProbabilityObservation(
            f"observation {o} has zero probability after action {a}"
        )
    return Belief.normalized(post.items())


def observation_probabilities(model: PomdpModel, b: Belief, a: int) -> np.ndarray:
    """Pr(o | b, a) for every observation, as a dense vector."""
    pred = predicted_support(model, b, a)
    out = np.zeros(model.n_observations)
    Om = model.observation[a]
    indptr, indices, data = Om.indptr, Om.indices, Om.data
    for sp_, mass in pred.items():
        for k in range(indptr[sp_], indptr[sp_ + 1]):
            out[indices[k]] += mass * float(data[k])
    return out
