"""Alpha-vector policies: piecewise-linear convex value functions."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ..errors import ModelValidationError
from ..model import Belief

TIE_TOL = 1e-12


class ValueAction(NamedTuple):
    value: float
    action: int


@dataclass(eq=False)
class AlphaVectorPolicy:
    """A set of alpha vectors with one action attached to each.

    ``vectors`` is K x S; ``actions`` has length K.  The value of a belief is
    the max inner product; the greedy action is the attached action of the
    maximizing vector, ties broken by lowest action index.
    """

    vectors: np.ndarray
    actions: np.ndarray
    gamma: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        self.actions = np.asarray(self.actions, dtype=np.int64)
        if self.vectors.shape[0] != self.actions.shape[0]:
            raise ModelValidationError(
                f"{self.vectors.shape[0]} vectors but {self.actions.shape[0]} actions")
        if self.vectors.shape[0] == 0:
            raise ModelValidationError("policy needs at least one alpha vector")

    @property
    def n_states(self) -> int:
        return self.vectors.shape[1]

    def belief_values(self, b: Belief) -> np.ndarray:
        idx, val = b.arrays()
        if idx.size and idx.max() >= self.n_states:
            raise ModelValidationError(
                f"belief references state {int(idx.max())} but policy covers {self.n_states}")
        return self.vectors[:, idx] @ val

    def value(self, b: Belief) -> float:
        return float(self.belief_values(b).max())

    def greedy(self, b: Belief) -> ValueAction:
        vals = self.belief_values(b)
        best = vals.max()
        winners = self.actions[vals >= best - TIE_TOL]
        return ValueAction(float(best), int(winners.min()))


def value_of(policy: AlphaVectorPolicy, b: Belief) -> ValueAction:
    """Value of a belief under the policy and the greedy action there."""
    return policy.greedy(b)


def prune_duplicates(vectors: np.ndarray, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Drop exact-duplicate vectors, keeping first occurrences."""
    seen = {}
    keep = []
    for i in range(vectors.shape[0]):
        key = (int(actions[i]), vectors[i].tobytes())
        if key not in seen:
            seen[key] = i
            keep.append(i)
    return vectors[keep], actions[keep]
