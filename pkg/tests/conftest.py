"""Shared fixtures: the tiger family, random small models, and the grid task.

The grid model and its relaxations are session-scoped because construction
and value iteration are the expensive parts of most downstream tests.
"""
from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from coplan.grid import build_grid_task
from coplan.model import Belief, DecPomdpModel, PomdpModel, to_mpomdp


def tiger_pomdp(gamma: float = 0.95) -> PomdpModel:
    """Two-state listen-or-open problem: listen costs -1 and hears the true
    side with probability 0.85; opening pays +10 on the safe door, -100 on
    the tiger, and resets to a coin flip."""
    T_listen = sp.csr_matrix(np.eye(2))
    T_open = sp.csr_matrix(np.full((2, 2), 0.5))
    O_listen = sp.csr_matrix(np.array([[0.85, 0.15], [0.15, 0.85]]))
    O_open = sp.csr_matrix(np.full((2, 2), 0.5))
    R = np.array([[-1.0, -100.0, 10.0],
                  [-1.0, 10.0, -100.0]])
    return PomdpModel(
        states=("tiger-left", "tiger-right"),
        actions=("listen", "open-left", "open-right"),
        observations=("hear-left", "hear-right"),
        transition=(T_listen, T_open, T_open),
        observation=(O_listen, O_open, O_open),
        reward=R,
        b0=Belief({0: 0.5, 1: 0.5}),
        gamma=gamma,
    )


def tiger_dec(gamma: float = 0.95) -> DecPomdpModel:
    """The same problem with a single-action, single-observation robot bolted
    on, so the joint relaxation coincides with the plain model."""
    base = tiger_pomdp(gamma)
    return DecPomdpModel(
        states=base.states,
        human_actions=base.actions,
        robot_actions=("none",),
        human_observations=base.observations,
        robot_observations=("none",),
        transition=base.transition,
        observation=base.observation,
        rewards=(base.reward,),
        b0=base.b0,
        gamma=gamma,
    )


def random_dec_pomdp(rng: np.random.Generator, n_states: int = 4,
                     n_ah: int = 2, n_ar: int = 2, n_oh: int = 2,
                     n_or: int = 2, n_objectives: int = 1,
                     gamma: float = 0.9, sparse_rows: bool = False) -> DecPomdpModel:
    """Dense random model with Dirichlet rows; sparse_rows zeroes a random
    subset of each row before renormalizing so zero-likelihood branches occur."""
    S, A = n_states, n_ah * n_ar
    O = n_oh * n_or

    def stochastic(n_rows, n_cols):
        m = rng.dirichlet(np.ones(n_cols), size=n_rows)
        if sparse_rows and n_cols > 2:
            for r in range(n_rows):
                drop = rng.random(n_cols) < 0.4
                if drop.all():
                    drop[rng.integers(n_cols)] = False
                m[r, drop] = 0.0
                m[r] /= m[r].sum()
        return sp.csr_matrix(m)

    return DecPomdpModel(
        states=tuple(f"s{i}" for i in range(S)),
        human_actions=tuple(f"h{i}" for i in range(n_ah)),
        robot_actions=tuple(f"r{i}" for i in range(n_ar)),
        human_observations=tuple(f"oh{i}" for i in range(n_oh)),
        robot_observations=tuple(f"or{i}" for i in range(n_or)),
        transition=tuple(stochastic(S, S) for _ in range(A)),
        observation=tuple(stochastic(S, O) for _ in range(A)),
        rewards=tuple(rng.uniform(-5.0, 5.0, size=(S, A)) for _ in range(n_objectives)),
        b0=Belief.from_dense(rng.dirichlet(np.ones(S))),
        gamma=gamma,
    )


def random_pomdp(rng: np.random.Generator, n_states: int = 4, n_actions: int = 3,
                 n_observations: int = 3, gamma: float = 0.9) -> PomdpModel:
    dec = random_dec_pomdp(rng, n_states=n_states, n_ah=n_actions, n_ar=1,
                           n_oh=n_observations, n_or=1, gamma=gamma)
    mp = to_mpomdp(dec, 0)
    return PomdpModel(
        states=mp.states,
        actions=tuple(f"a{i}" for i in range(n_actions)),
        observations=tuple(f"o{i}" for i in range(n_observations)),
        transition=mp.transition,
        observation=mp.observation,
        reward=mp.reward,
        b0=mp.b0,
        gamma=gamma,
    )


@pytest.fixture(scope="session")
def grid_model() -> DecPomdpModel:
    return build_grid_task()


@pytest.fixture(scope="session")
def grid_mpomdp_left(grid_model) -> PomdpModel:
    return to_mpomdp(grid_model, 0)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(7)
