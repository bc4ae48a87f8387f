"""Model containers, the single-agent relaxation, and standard filtering.

The filtering oracle here enumerates all (s, s') pairs directly from the
kernels, independent of the sparse row walk in the implementation.
"""
from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from coplan.errors import ModelValidationError, ZeroProbabilityObservation
from coplan.model import (Belief, PomdpModel, belief_update,
                          observation_probabilities, to_mpomdp)

from .conftest import random_dec_pomdp, random_pomdp


def brute_force_posterior(model: PomdpModel, b: Belief, a: int, o: int) -> dict[int, float]:
    T = model.transition[a].toarray()
    O = model.observation[a].toarray()
    post = np.zeros(model.n_states)
    for s, p in b.probs.items():
        for s2 in range(model.n_states):
            post[s2] += p * T[s, s2] * O[s2, o]
    total = post.sum()
    assert total > 0.0
    return {s: post[s] / total for s in range(model.n_states) if post[s] > 0.0}


# -- Belief ---------------------------------------------------------------

def test_belief_dirac_and_support():
    b = Belief.dirac(3)
    assert b.probs == {3: 1.0}
    assert b.support == (3,)


def test_belief_normalized_merges_and_drops_zeros():
    b = Belief.normalized([(0, 1.0), (1, 2.0), (0, 1.0), (2, 0.0)])
    assert b.probs == pytest.approx({0: 0.5, 1: 0.5})


def test_belief_rejects_empty_and_negative():
    with pytest.raises(ModelValidationError):
        Belief({})
    with pytest.raises(ModelValidationError):
        Belief.normalized([(0, -1.0), (1, 2.0)])
    with pytest.raises(ModelValidationError):
        Belief({0: 0.5, 1: 0.4})  # mass 0.9


def test_belief_l1_distance_symmetric():
    a = Belief({0: 0.5, 1: 0.5})
    b = Belief({1: 0.25, 2: 0.75})
    assert a.l1_distance(b) == pytest.approx(b.l1_distance(a))
    assert a.l1_distance(b) == pytest.approx(0.5 + 0.25 + 0.75)


@given(st.lists(st.floats(min_value=0.01, max_value=10.0), min_size=1, max_size=8))
def test_belief_from_dense_normalizes(weights):
    b = Belief.from_dense(np.array(weights))
    assert sum(b.probs.values()) == pytest.approx(1.0, abs=1e-12)
    assert all(p > 0 for p in b.probs.values())


# -- model validation -----------------------------------------------------

def test_pomdp_rejects_nonstochastic_transition_row():
    T_bad = sp.csr_matrix(np.array([[0.6, 0.3], [0.0, 1.0]]))  # row 0 sums 0.9
    O = sp.csr_matrix(np.full((2, 2), 0.5))
    with pytest.raises(ModelValidationError, match="row 0"):
        PomdpModel(states=("a", "b"), actions=("x",), observations=("o1", "o2"),
                   transition=(T_bad,), observation=(O,),
                   reward=np.zeros((2, 1)), b0=Belief.dirac(0), gamma=0.9)


def test_pomdp_rejects_bad_gamma_and_shapes():
    T = sp.csr_matrix(np.eye(2))
    O = sp.csr_matrix(np.full((2, 2), 0.5))
    with pytest.raises(ModelValidationError):
        PomdpModel(states=("a", "b"), actions=("x",), observations=("o1", "o2"),
                   transition=(T,), observation=(O,),
                   reward=np.zeros((2, 1)), b0=Belief.dirac(0), gamma=1.0)
    with pytest.raises(ModelValidationError):
        PomdpModel(states=("a", "b"), actions=("x",), observations=("o1", "o2"),
                   transition=(T,), observation=(O,),
                   reward=np.zeros((3, 1)), b0=Belief.dirac(0), gamma=0.9)


def test_dec_pomdp_index_round_trips(rng):
    m = random_dec_pomdp(rng, n_ah=3, n_ar=2, n_oh=4, n_or=5)
    for a_h in range(3):
        for a_r in range(2):
            assert m.split_action(m.joint_action(a_h, a_r)) == (a_h, a_r)
    for o_h in range(4):
        for o_r in range(5):
            assert m.split_observation(m.joint_observation(o_h, o_r)) == (o_h, o_r)


# -- to_mpomdp ------------------------------------------------------------

def test_to_mpomdp_counts_and_sharing(rng):
    m = random_dec_pomdp(rng, n_states=5, n_ah=3, n_ar=2, n_oh=2, n_or=3,
                         n_objectives=2)
    mp = to_mpomdp(m, 1)
    assert mp.n_states == 5
    assert mp.n_actions == 6
    assert mp.n_observations == 6
    assert mp.reward is m.rewards[1]
    assert mp.transition is m.transition  # kernels shared, not copied
    assert mp.meta["objective"] == 1


def test_to_mpomdp_objectives_differ_only_in_reward(rng):
    m = random_dec_pomdp(rng, n_objectives=2)
    a, b = to_mpomdp(m, 0), to_mpomdp(m, 1)
    assert a.transition is b.transition
    assert a.observation is b.observation
    assert not np.array_equal(a.reward, b.reward)


def test_to_mpomdp_rejects_bad_objective(rng):
    m = random_dec_pomdp(rng)
    with pytest.raises(ModelValidationError):
        to_mpomdp(m, 1)
    with pytest.raises(ModelValidationError):
        to_mpomdp(m, -1)


def test_to_mpomdp_singleton_robot_is_identity(rng):
    m = random_dec_pomdp(rng, n_ah=3, n_ar=1, n_oh=2, n_or=1)
    mp = to_mpomdp(m, 0)
    assert mp.n_actions == 3
    assert mp.n_observations == 2


# -- belief_update --------------------------------------------------------

def test_belief_update_deterministic_chain():
    T = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 1.0]]))
    O = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 1.0]]))
    m = PomdpModel(states=("a", "b"), actions=("go",), observations=("oa", "ob"),
                   transition=(T,), observation=(O,),
                   reward=np.zeros((2, 1)), b0=Belief.dirac(0), gamma=0.9)
    assert belief_update(m, Belief.dirac(0), 0, 1).probs == {1: 1.0}


def test_belief_update_two_state_hand_bayes():
    # Static state, observation matches truth with 0.85: uniform prior and
    # one matching observation gives (0.85, 0.15).
    T = sp.csr_matrix(np.eye(2))
    O = sp.csr_matrix(np.array([[0.85, 0.15], [0.15, 0.85]]))
    m = PomdpModel(states=("a", "b"), actions=("look",), observations=("oa", "ob"),
                   transition=(T,), observation=(O,),
                   reward=np.zeros((2, 1)), b0=Belief({0: 0.5, 1: 0.5}), gamma=0.9)
    b1 = belief_update(m, m.b0, 0, 0)
    assert b1.probs == pytest.approx({0: 0.85, 1: 0.15})
    oracle = brute_force_posterior(m, m.b0, 0, 0)
    assert b1.probs == pytest.approx(oracle)


def test_belief_update_zero_probability_observation():
    T = sp.csr_matrix(np.eye(2))
    O = sp.csr_matrix(np.array([[1.0, 0.0], [1.0, 0.0]]))  # o=1 never emitted
    m = PomdpModel(states=("a", "b"), actions=("look",), observations=("oa", "ob"),
                   transition=(T,), observation=(O,),
                   reward=np.zeros((2, 1)), b0=Belief({0: 0.5, 1: 0.5}), gamma=0.9)
    with pytest.raises(ZeroProbabilityObservation):
        belief_update(m, m.b0, 0, 1)


def test_belief_update_validates_indices(rng):
    m = random_pomdp(rng)
    with pytest.raises(ModelValidationError):
        belief_update(m, m.b0, m.n_actions, 0)
    with pytest.raises(ModelValidationError):
        belief_update(m, m.b0, 0, m.n_observations)


@pytest.mark.parametrize("seed", range(20))
def test_belief_update_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    m = random_pomdp(rng, n_states=int(rng.integers(2, 9)),
                     n_actions=int(rng.integers(1, 4)),
                     n_observations=int(rng.integers(2, 5)))
    b = Belief.from_dense(rng.dirichlet(np.ones(m.n_states)))
    for a in range(m.n_actions):
        probs = observation_probabilities(m, b, a)
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)
        for o in np.flatnonzero(probs > 1e-12):
            got = belief_update(m, b, a, int(o)).probs
            want = brute_force_posterior(m, b, a, int(o))
            l1 = sum(abs(got.get(s, 0.0) - want.get(s, 0.0))
                     for s in set(got) | set(want))
            assert l1 <= 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_observation_probabilities_form_distribution(seed):
    rng = np.random.default_rng(seed)
    m = random_pomdp(rng, n_states=5, n_actions=2, n_observations=4)
    b = Belief.from_dense(rng.dirichlet(np.ones(5)))
    for a in range(m.n_actions):
        probs = observation_probabilities(m, b, a)
        assert (probs >= -1e-15).all()
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)
