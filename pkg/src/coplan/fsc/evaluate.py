"""Controller evaluation: exact occupancy chains and Monte-Carlo rollouts.

The exact path builds the discounted occupancy chain over (node, state)
pairs and iterates it to convergence; cost grows with nodes times states, so
it is meant for small models and oracle tests.  The Monte-Carlo path scales
and reports a standard error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..model import Belief, DecPomdpModel, PomdpModel, to_mpomdp
from .controller import StochasticFsc


@dataclass(frozen=True)
class ValueEstimate:
    value: float
    method: str
    std_err: float | None = None
    episodes: int | None = None
    iterations: int | None = None


def _chain_value(model: PomdpModel, n_nodes: int, initial: dict[int, float],
                 action_dist, successor, tol: float, max_iter: int) -> ValueEstimate:
    """Iterate x <- r + gamma P x for the node-state chain and average the
    result under the initial occupancy.  action_dist(n) gives the node's
    distribution over model actions; successor(n, a, o) its next-node
    distribution."""
    S = model.n_states
    obs_cols = [Om.tocsc() for Om in model.observation]
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    reward = np.zeros(n_nodes * S)
    for n in range(n_nodes):
        dist = action_dist(n)
        for a in np.flatnonzero(dist):
            a = int(a)
            p_a = float(dist[a])
            reward[n * S:(n + 1) * S] += p_a * model.reward[:, a]
            Ta = model.transition[a]
            Oa = obs_cols[a]
            for o in range(model.n_observations):
                lo, hi = Oa.indptr[o], Oa.indptr[o + 1]
                if lo == hi:
                    continue
                col = np.zeros(S)
                col[Oa.indices[lo:hi]] = Oa.data[lo:hi]
                block = (Ta @ sp.diags(col)).tocoo()
                if block.nnz == 0:
                    continue
                for n2, p_n2 in successor(n, a, o).items():
                    rows.append(block.row + n * S)
                    cols.append(block.col + n2 * S)
                    vals.append(block.data * (p_a * p_n2))
    P = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_nodes * S, n_nodes * S)).tocsr()
    mu0 = np.zeros(n_nodes * S)
    b_idx, b_val = model.b0.arrays()
    for n, p_n in initial.items():
        mu0[n * S + b_idx] += p_n * b_val
    x = np.zeros(n_nodes * S)
    gamma = model.gamma
    bound = np.abs(model.reward).max() / (1.0 - gamma)
    it = 0
    for it in range(1, max_iter + 1):
        x_new = reward + gamma * (P @ x)
        if np.abs(x_new - x).max() <= tol:
            x = x_new
            break
        x = x_new
    else:
        raise RuntimeError(f"chain evaluation did not converge within {max_iter} "
                           f"iterations (value bound {bound:.3g})")
    return ValueEstimate(value=float(mu0 @ x), method="chain", iterations=it)


def fsc_policy_value(model: PomdpModel, fsc: StochasticFsc, tol: float = 1e-9,
                     max_iter: int = 100_000) -> ValueEstimate:
    """Exact discounted value of a controller driving the model directly; the
    model's actions and observations must be the controller's."""
    if model.n_actions != fsc.n_human_actions or model.n_observations != fsc.n_human_observations:
        raise ValueError("model action/observation spaces do not match the controller")

    def successor(n: int, a: int, o: int) -> dict[int, float]:
        return fsc.nodes[n].edges[(a, o)]

    return _chain_value(model, len(fsc), fsc.initial,
                        lambda n: fsc.nodes[n].action_probs, successor, tol, max_iter)


def team_value(model: DecPomdpModel, objective_id: int, fsc: StochasticFsc,
               tol: float = 1e-9, max_iter: int = 100_000) -> ValueEstimate:
    """Exact team value when the robot plays each node's stored marginal rule
    alongside the controller's action distribution."""
    mp = to_mpomdp(model, objective_id)
    n_or = model.n_robot_observations
    n_ar = model.n_robot_actions

    def action_dist(n: int) -> np.ndarray:
        node = fsc.nodes[n]
        if node.robot_rule is None:
            raise ValueError(f"node {n} has no robot rule to pair with")
        return np.outer(node.action_probs, node.robot_rule).ravel()

    def successor(n: int, j: int, o_joint: int) -> dict[int, float]:
        return fsc.nodes[n].edges[(j // n_ar, o_joint // n_or)]

    return _chain_value(mp, len(fsc), fsc.initial, action_dist, successor,
                        tol, max_iter)


def action_sequence_distribution(model: DecPomdpModel, fsc: StochasticFsc,
                                 length: int) -> dict[tuple[int, ...], float]:
    """Exact distribution of the controller's first `length` actions when the
    robot plays each node's stored marginal rule.  Probabilities sum to 1."""
    b_idx, b_val = model.b0.arrays()
    start: dict[tuple[int, int], float] = {}
    for n, p_n in fsc.initial.items():
        for s, p_s in zip(b_idx.tolist(), b_val.tolist()):
            start[(n, int(s))] = start.get((n, int(s)), 0.0) + p_n * p_s
    out: dict[tuple[int, ...], float] = {}
    stack: list[tuple[tuple[int, ...], dict[tuple[int, int], float]]] = [((), start)]
    while stack:
        prefix, occ = stack.pop()
        if len(prefix) == length:
            mass = sum(occ.values())
            if mass > 0.0:
                out[prefix] = out.get(prefix, 0.0) + mass
            continue
        by_action: dict[int, dict[tuple[int, int], float]] = {}
        for (n, s), p in occ.items():
            node = fsc.nodes[n]
            for a_h in np.flatnonzero(node.action_probs):
                a_h = int(a_h)
                w_h = p * float(node.action_probs[a_h])
                nxt = by_action.setdefault(a_h, {})
                for a_r in np.flatnonzero(node.robot_rule):
                    a_r = int(a_r)
                    j = model.joint_action(a_h, a_r)
                    w = w_h * float(node.robot_rule[a_r])
                    T = model.transition[j]
                    Om = model.observation[j]
                    for k in range(T.indptr[s], T.indptr[s + 1]):
                        s2 = int(T.indices[k])
                        w2 = w * float(T.data[k])
                        for kk in range(Om.indptr[s2], Om.indptr[s2 + 1]):
                            o_h = int(Om.indices[kk]) // model.n_robot_observations
                            w3 = w2 * float(Om.data[kk])
                            for n2, p_n2 in node.edges[(a_h, o_h)].items():
                                key = (n2, s2)
                                nxt[key] = nxt.get(key, 0.0) + w3 * p_n2
        for a_h, nxt in by_action.items():
            stack.append((prefix + (a_h,), nxt))
    return out


def mc_team_value(model: DecPomdpModel, objective_id: int, fsc: StochasticFsc,
                  episodes: int = 500, horizon: int = 200,
                  seed: int = 0) -> ValueEstimate:
    """Monte-Carlo team value under the same pairing as team_value."""
    rng = np.random.default_rng(seed)
    reward = model.rewards[objective_id]
    b_idx, b_val = model.b0.arrays()
    init_ids = sorted(fsc.initial)
    init_p = np.array([fsc.initial[i] for i in init_ids])
    returns = np.empty(episodes)
    for ep in range(episodes):
        s = int(rng.choice(b_idx, p=b_val))
        n = int(init_ids[rng.choice(len(init_ids), p=init_p)])
        total, disc = 0.0, 1.0
        for _ in range(horizon):
            node = fsc.nodes[n]
            a_h = fsc.act(n, rng)
            a_r = int(rng.choice(model.n_robot_actions, p=node.robot_rule))
            j = model.joint_action(a_h, a_r)
            total += disc * float(reward[s, j])
            disc *= model.gamma
            T = model.transition[j]
            lo, hi = T.indptr[s], T.indptr[s + 1]
            s = int(T.indices[lo + rng.choice(hi - lo, p=T.data[lo:hi] / T.data[lo:hi].sum())])
            Om = model.observation[j]
            lo, hi = Om.indptr[s], Om.indptr[s + 1]
            o = int(Om.indices[lo + rng.choice(hi - lo, p=Om.data[lo:hi] / Om.data[lo:hi].sum())])
            n = fsc.step(n, a_h, o // model.n_robot_observations, rng)
        returns[ep] = total
    std_err = float(returns.std(ddof=1) / np.sqrt(episodes)) if episodes > 1 else None
    return ValueEstimate(value=float(returns.mean()), method="monte-carlo",
                         std_err=std_err, episodes=episodes)
