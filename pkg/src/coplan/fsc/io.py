"""Controller JSON files.

Layout: `nodes` (id, objective, action_dist, optional belief/weight),
`initial` ({id, p} entries), `edges` ({from, action, obs, to, p} entries).
Robot rules and cached values ride along so a reloaded controller can keep
filtering and report the same stats.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import SchemaError
from ..model import Belief
from .controller import FscNode, StochasticFsc

FSC_SCHEMA_VERSION = 1


def _dist_pairs(arr: np.ndarray) -> list[list]:
    return [[int(i), float(arr[i])] for i in np.flatnonzero(arr)]


def fsc_to_dict(fsc: StochasticFsc) -> dict:
    nodes = []
    for n in fsc.nodes:
        entry: dict = {"id": n.id, "objective": n.objective,
                       "action_dist": _dist_pairs(n.action_probs),
                       "weight": n.weight}
        if n.belief is not None:
            entry["belief"] = [[s, p] for s, p in sorted(n.belief.probs.items())]
        if n.robot_rule is not None:
            entry["robot_rule"] = _dist_pairs(n.robot_rule)
        if n.value is not None:
            entry["value"] = n.value
        if n.parent_fsc:
            entry["parent_fsc"] = n.parent_fsc
        nodes.append(entry)
    edges = [{"from": n.id, "action": a, "obs": o, "to": m, "p": p}
             for n in fsc.nodes
             for (a, o), dist in sorted(n.edges.items())
             for m, p in sorted(dist.items())]
    out = {"version": FSC_SCHEMA_VERSION,
           "n_human_actions": fsc.n_human_actions,
           "n_human_observations": fsc.n_human_observations,
           "nodes": nodes,
           "initial": [{"id": i, "p": p} for i, p in sorted(fsc.initial.items())],
           "edges": edges,
           "metadata": fsc.metadata}
    rules = [n.robot_rule for n in fsc.nodes if n.robot_rule is not None]
    if rules:
        out["n_robot_actions"] = len(rules[0])
    return out


def fsc_from_dict(data: dict) -> StochasticFsc:
    try:
        if data["version"] != FSC_SCHEMA_VERSION:
            raise SchemaError(f"unsupported controller schema version {data['version']!r}")
        n_a = int(data["n_human_actions"])
        n_o = int(data["n_human_observations"])
        nodes = []
        for entry in data["nodes"]:
            psi = np.zeros(n_a)
            for a, p in entry["action_dist"]:
                psi[int(a)] = float(p)
            belief = None
            if "belief" in entry:
                belief = Belief({int(s): float(p) for s, p in entry["belief"]})
            rule = None
            if "robot_rule" in entry:
                size = int(data.get("n_robot_actions",
                                    max(int(a) for a, _ in entry["robot_rule"]) + 1))
                rule = np.zeros(size)
                for a, p in entry["robot_rule"]:
                    rule[int(a)] = float(p)
            nodes.append(FscNode(id=int(entry["id"]), action_probs=psi,
                                 belief=belief, weight=float(entry.get("weight", 0.0)),
                                 value=float(entry["value"]) if "value" in entry else None,
                                 robot_rule=rule,
                                 objective=int(entry.get("objective", 0)),
                                 parent_fsc=int(entry.get("parent_fsc", 0))))
        for edge in data["edges"]:
            n = nodes[int(edge["from"])]
            key = (int(edge["action"]), int(edge["obs"]))
            n.edges.setdefault(key, {})[int(edge["to"])] = float(edge["p"])
        initial = {int(e["id"]): float(e["p"]) for e in data["initial"]}
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise SchemaError(f"malformed controller file: {exc!r}") from exc
    return StochasticFsc(nodes=nodes, initial=initial, n_human_actions=n_a,
                         n_human_observations=n_o,
                         metadata=dict(data.get("metadata", {})))


def save_fsc(fsc: StochasticFsc, path: str | Path) -> None:
    Path(path).write_text(json.dumps(fsc_to_dict(fsc), separators=(",", ":")))


def load_fsc(path: str | Path) -> StochasticFsc:
    return fsc_from_dict(json.loads(Path(path).read_text()))
