"""Point-based value iteration.

Belief points are collected by guided rollouts from b0: actions greedy for the
fully observable upper bound (with epsilon exploration), observations sampled
from their true likelihoods.  Backups are asynchronous with one alpha-vector
slot per belief point, swept in reverse insertion order so value flows from
deep points back to b0.  Every vector is the value of some executable plan, so
the set is a valid lower bound on the optimum throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..model import Belief, PomdpModel
from .alpha import AlphaVectorPolicy, prune_duplicates
from .vi import mdp_value_iteration

_PRESENT_TOL = 1e-300
_KEY_DECIMALS = 10


@dataclass(frozen=True)
class PbviParams:
    belief_points: int = 256
    iterations: int = 60
    epsilon: float = 1e-3
    seed: int = 0
    explore: float = 0.15
    expand_depth: int | None = None
    upper_tol: float = 1e-5
    max_stale_rollouts: int = 40


def _key(idx, val) -> tuple:
    return tuple(zip(idx.tolist(), np.round(val, _KEY_DECIMALS).tolist()))


class _Backup:
    """Shared per-model scratch for point backups."""

    def __init__(self, model: PomdpModel):
        self.model = model
        self.obs_coo = []
        for Om in model.observation:
            coo = Om.tocoo()
            self.obs_coo.append((coo.row, coo.col, coo.data))

    def predicted(self, a: int, b_idx, b_val):
        sub = self.model.transition[a][b_idx]
        return sub.T.dot(b_val)

    def backup(self, b_idx, b_val, gamma_mat: np.ndarray):
        """One point backup against the current vector set; returns
        (alpha, action, value-at-point)."""
        m = self.model
        S = m.n_states
        best = None
        for a in range(m.n_actions):
            pred = self.predicted(a, b_idx, b_val)
            supp = np.flatnonzero(pred)
            Oa = m.observation[a]
            w_o = Oa.T.dot(pred)
            present = np.flatnonzero(w_o > _PRESENT_TOL)
            choice = np.zeros(m.n_observations, dtype=np.int64)
            if present.size:
                On = Oa[supp].toarray()[:, present]
                Z = gamma_mat[:, supp] * pred[supp]
                X = Z @ On
                choice[present] = X.argmax(axis=0)
            rows, cols, data = self.obs_coo[a]
            g = np.bincount(rows, weights=data * gamma_mat[choice[cols], rows],
                            minlength=S)
            alpha = m.reward[:, a] + m.gamma * m.transition[a].dot(g)
            val = float(alpha[b_idx] @ b_val)
            if best is None or val > best[2] + 1e-12:
                best = (alpha, a, val)
        return best


def _expand_beliefs(model: PomdpModel, params: PbviParams, q_upper: np.ndarray,
                    rng: np.random.Generator):
    """Guided rollouts from b0; returns list of (idx, val) in discovery order."""
    b0_idx, b0_val = model.b0.arrays()
    points = [(b0_idx, b0_val)]
    keys = {_key(b0_idx, b0_val)}
    backup = _Backup(model)
    if params.expand_depth is not None:
        depth = params.expand_depth
    elif model.gamma > 0.0:
        depth = min(60, max(8, int(math.ceil(math.log(0.01) / math.log(model.gamma)))))
    else:
        depth = 1
    obs_csc = [Om.tocsc() for Om in model.observation]
    stale = 0
    while len(points) < params.belief_points and stale < params.max_stale_rollouts:
        found = False
        idx, val = b0_idx, b0_val
        for _ in range(depth):
            if rng.random() < params.explore:
                a = int(rng.integers(model.n_actions))
            else:
                a = int((val @ q_upper[idx]).argmax())
            pred = backup.predicted(a, idx, val)
            w_o = model.observation[a].T.dot(pred)
            total = w_o.sum()
            if total <= 0.0:
                break
            o = int(rng.choice(model.n_observations, p=w_o / total))
            col = obs_csc[a].getcol(o)
            post = np.zeros(model.n_states)
            post[col.indices] = pred[col.indices] * col.data
            mass = post.sum()
            if mass <= 0.0:
                break
            idx = np.flatnonzero(post)
            val = post[idx] / mass
            k = _key(idx, val)
            if k not in keys:
                keys.add(k)
                points.append((idx, val))
                found = True
                if len(points) >= params.belief_points:
                    break
        stale = 0 if found else stale + 1
    return points


def pbvi_solve(model: PomdpModel, params: PbviParams | None = None) -> AlphaVectorPolicy:
    """Anytime point-based solve; deterministic for a given seed.

    The returned policy's metadata reports the final sweep residual, the value
    and upper bound at b0, and the budgets actually used.
    """
    params = params or PbviParams()
    rng = np.random.default_rng(params.seed)
    upper = mdp_value_iteration(model, tol=params.upper_tol)
    points = _expand_beliefs(model, params, upper.q, rng)

    S = model.n_states
    r_min = float(model.reward.min())
    floor = r_min / (1.0 - model.gamma) if model.gamma > 0 else r_min
    gamma_mat = np.full((len(points) + 1, S), floor)
    actions = np.zeros(len(points) + 1, dtype=np.int64)
    values = np.array([floor] * len(points))

    backup = _Backup(model)
    order = list(range(len(points) - 1, -1, -1))
    residual = math.inf
    sweeps = 0
    while sweeps < params.iterations:
        sweeps += 1
        residual = 0.0
        for i in order:
            b_idx, b_val = points[i]
            alpha, a, val = backup.backup(b_idx, b_val, gamma_mat)
            change = val - values[i]
            if change > residual:
                residual = change
            if val >= values[i]:
                gamma_mat[i + 1] = alpha
                actions[i + 1] = a
                values[i] = val
        if residual <= params.epsilon:
            break

    vectors, acts = prune_duplicates(gamma_mat, actions)
    b0_idx, b0_val = points[0]
    policy = AlphaVectorPolicy(
        vectors=vectors, actions=acts, gamma=model.gamma,
        metadata={
            "method": "pbvi",
            "residual": float(residual),
            "v_b0": float(values[0]),
            "upper_v_b0": float((b0_val @ upper.q[b0_idx]).max()),
            "sweeps": sweeps,
            "seed": params.seed,
            "n_beliefs": len(points),
            "n_vectors": int(vectors.shape[0]),
        })
    return policy
