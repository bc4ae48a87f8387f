"""Temperature-indexed joint action rules and the human-side filter.

The joint rule over a Q estimate at belief b is

    f(a | b) = exp(Q(b,a)/T) / sum_a' exp(Q(b,a')/T)

with the T = 0 limit uniform over the argmax set.  Each agent's rule is the
marginal of f over the other agent's actions.  The human filters without
seeing the robot's action or observation, so both are marginalized out of the
belief update, the robot action under the robot's own marginal rule:

    b'(s') prop. to sum_{a_r} sigma_r(a_r) [sum_{o_r} O(<a_h,a_r>, s', <o_h,o_r>)]
                                           [sum_s T(s, <a_h,a_r>, s') b(s)]
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import AllActionsPruned
from ..model import Belief, DecPomdpModel

ARGMAX_TIE_TOL = 1e-9


def softmax_joint(q: np.ndarray, temperature: float,
                  tie_tol: float = ARGMAX_TIE_TOL) -> np.ndarray:
    """Softmax over joint-action values; T = 0 is uniform over the argmax set."""
    q = np.asarray(q, dtype=float)
    if q.size == 0:
        raise ValueError("empty action-value vector")
    if temperature < 0.0:
        raise ValueError(f"temperature {temperature} must be >= 0")
    if temperature == 0.0:
        winners = q >= q.max() - tie_tol
        return winners / winners.sum()
    z = np.exp((q - q.max()) / temperature)
    return z / z.sum()


def marginal_human(f: np.ndarray, n_human_actions: int, n_robot_actions: int,
                   action_threshold: float = 0.0) -> np.ndarray:
    """Human marginal of a joint rule, with low-probability actions pruned
    (strictly below the threshold) and the rest renormalized."""
    sigma = np.asarray(f, dtype=float).reshape(n_human_actions, n_robot_actions).sum(axis=1)
    if action_threshold > 0.0:
        sigma = np.where(sigma < action_threshold, 0.0, sigma)
        total = sigma.sum()
        if total <= 0.0:
            raise AllActionsPruned(
                f"action threshold {action_threshold} pruned the whole human marginal")
        sigma = sigma / total
    return sigma


def marginal_robot(f: np.ndarray, n_human_actions: int, n_robot_actions: int) -> np.ndarray:
    return np.asarray(f, dtype=float).reshape(n_human_actions, n_robot_actions).sum(axis=0)


def _human_obs_likelihood(model: DecPomdpModel, j: int, s2: int, o_h: int) -> float:
    """sum_{o_r} O(j, s2, <o_h, o_r>)."""
    Om = model.observation[j]
    lo, hi = Om.indptr[s2], Om.indptr[s2 + 1]
    cols = Om.indices[lo:hi]
    mask = (cols // model.n_robot_observations) == o_h
    return float(Om.data[lo:hi][mask].sum())


def branch_posterior(model: DecPomdpModel, b: Belief, a_h: int, o_h: int,
                     sigma_r: np.ndarray) -> tuple[dict[int, float], float]:
    """Unnormalized next-state mass for the human branch (a_h, o_h) and its
    total, which is Pr(o_h | b, a_h, sigma_r)."""
    post: dict[int, float] = {}
    for a_r in np.flatnonzero(sigma_r):
        j = model.joint_action(a_h, int(a_r))
        T = model.transition[j]
        indptr, indices, data = T.indptr, T.indices, T.data
        w = float(sigma_r[a_r])
        pred: dict[int, float] = {}
        for s, p in b.probs.items():
            for k in range(indptr[s], indptr[s + 1]):
                s2 = int(indices[k])
                pred[s2] = pred.get(s2, 0.0) + p * float(data[k])
        for s2, mass in pred.items():
            lik = _human_obs_likelihood(model, j, s2, o_h)
            if lik > 0.0:
                post[s2] = post.get(s2, 0.0) + w * mass * lik
    return post, sum(post.values())


def human_belief_update(model: DecPomdpModel, b: Belief, a_h: int, o_h: int,
                        sigma_r: np.ndarray) -> Belief:
    """Filter the human's belief after playing a_h and observing o_h, the
    robot's action and observation marginalized out under sigma_r."""
    post, total = branch_posterior(model, b, a_h, o_h, sigma_r)
    if total <= 0.0:
        from ..errors import ZeroProbabilityObservation
        raise ZeroProbabilityObservation(
            f"human observation {o_h} after action {a_h} has zero probability")
    return Belief.normalized(post.items())


def history_probability(model: DecPomdpModel, b: Belief, a_h: int, o_h: int,
                        sigma_h: np.ndarray, sigma_r: np.ndarray) -> float:
    """Pr(o_h, a_h | b, sigma_h, sigma_r); sums to 1 over all (a_h, o_h)."""
    p_a = float(sigma_h[a_h])
    if p_a <= 0.0:
        return 0.0
    _, total = branch_posterior(model, b, a_h, o_h, sigma_r)
    return p_a * total


class HumanBranchKernel:
    """Batched form of the human filter: all o_h branches of one (belief,
    a_h) pair at once.  Precomputes, per joint action, the observation kernel
    aggregated over robot observations; agrees with branch_posterior entry
    for entry."""

    def __init__(self, model: DecPomdpModel):
        self.model = model
        collapse = sp.kron(sp.identity(model.n_human_observations, format="csr"),
                           np.ones((model.n_robot_observations, 1)), format="csr")
        self._obs_by_human = [(Om @ collapse).tocsr() for Om in model.observation]

    def branches(self, b_dense: np.ndarray, a_h: int,
                 sigma_r: np.ndarray) -> tuple[sp.csc_matrix, np.ndarray]:
        """Matrix of unnormalized posteriors, states by human observations,
        and the per-observation mass vector."""
        m = self.model
        acc = None
        for a_r in np.flatnonzero(sigma_r):
            j = m.joint_action(a_h, int(a_r))
            pred = m.transition[j].T.dot(b_dense)
            scaled = sp.diags(pred * float(sigma_r[a_r])) @ self._obs_by_human[j]
            acc = scaled if acc is None else acc + scaled
        post = acc.tocsc()
        post.eliminate_zeros()
        return post, np.asarray(post.sum(axis=0)).ravel()
