"""JSON model files.

Format (version 1): sparse triplet lists over indices.

    {"version": 1, "agents": ["human", "robot"],
     "states": [...], "actions": {"human": [...], "robot": [...]},
     "observations": {"human": [...], "robot": [...]},
     "transitions": [[s, a_joint, s2, p], ...],
     "observations_fn": [[a_joint, s2, o_joint, p], ...],
     "rewards": [{"id": 0, "label": ..., "entries": [[s, a_joint, r], ...]}, ...],
     "b0": [[s, p], ...], "gamma": 0.95, "meta": {...}}

"meta" is an optional free-form extension bag (grid geometry etc.).
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import SchemaError
from .model import Belief, DecPomdpModel

MODEL_SCHEMA_VERSION = 1


def model_to_dict(model: DecPomdpModel) -> dict:
    transitions = []
    for j, T in enumerate(model.transition):
        coo = T.tocoo()
        transitions.extend(
            [int(s), j, int(s2), float(p)]
            for s, s2, p in zip(coo.row, coo.col, coo.data))
    observations_fn = []
    for j, Om in enumerate(model.observation):
        coo = Om.tocoo()
        observations_fn.extend(
            [j, int(s2), int(o), float(p)]
            for s2, o, p in zip(coo.row, coo.col, coo.data))
    objective_labels = model.meta.get("objectives") or [str(i) for i in range(model.n_objectives)]
    rewards = []
    for i, R in enumerate(model.rewards):
        rs, js = np.nonzero(R)
        rewards.append({
            "id": i,
            "label": objective_labels[i],
            "entries": [[int(s), int(j), float(R[s, j])] for s, j in zip(rs, js)],
        })
    return {
        "version": MODEL_SCHEMA_VERSION,
        "agents": ["human", "robot"],
        "states": list(model.states),
        "actions": {"human": list(model.human_actions), "robot": list(model.robot_actions)},
        "observations": {"human": list(model.human_observations), "robot": list(model.robot_observations)},
        "transitions": transitions,
        "observations_fn": observations_fn,
        "rewards": rewards,
        "b0": [[s, p] for s, p in model.b0.probs.items()],
        "gamma": model.gamma,
        "meta": model.meta,
    }


def save_model(model: DecPomdpModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), separators=(",", ":")))


def _require(doc: dict, key: str):
    if key not in doc:
        raise SchemaError(f"model file missing required key {key!r}")
    return doc[key]


def model_from_dict(doc: dict) -> DecPomdpModel:
    version = doc.get("version")
    if version != MODEL_SCHEMA_VERSION:
        raise SchemaError(
            f"unsupported model schema version {version!r}, this build reads version {MODEL_SCHEMA_VERSION}")
    states = _require(doc, "states")
    actions = _require(doc, "actions")
    observations = _require(doc, "observations")
    for part, bag in (("human", actions), ("robot", actions), ("human", observations), ("robot", observations)):
        if part not in bag:
            raise SchemaError(f"model file missing {part!r} entry")
    S = len(states)
    nA = len(actions["human"]) * len(actions["robot"])
    nO = len(observations["human"]) * len(observations["robot"])

    def build(rows, n_mats, shape, order, what):
        data = [[] for _ in range(n_mats)]
        coords = [([], []) for _ in range(n_mats)]
        for row in rows:
            if len(row) != 4:
                raise SchemaError(f"{what} rows must have 4 entries, got {row!r}")
            a = int(row[order])
            if not (0 <= a < n_mats):
                raise SchemaError(f"{what} row references action {a} outside 0..{n_mats - 1}")
            r, c = (int(row[i]) for i in range(3) if i != order)
            if not (0 <= r < shape[0] and 0 <= c < shape[1]):
                raise SchemaError(f"{what} row {row!r} out of bounds for shape {shape}")
            coords[a][0].append(r)
            coords[a][1].append(c)
            data[a].append(float(row[3]))
        return tuple(
            sp.csr_matrix((data[a], coords[a]), shape=shape) for a in range(n_mats))

    transition = build(_require(doc, "transitions"), nA, (S, S), 1, "transitions")
    observation = build(_require(doc, "observations_fn"), nA, (S, nO), 0, "observations_fn")

    reward_docs = _require(doc, "rewards")
    if not reward_docs:
        raise SchemaError("model file declares no reward objectives")
    rewards = []
    for i, rd in enumerate(sorted(reward_docs, key=lambda d: d.get("id", 0))):
        R = np.zeros((S, nA))
        for s, j, r in rd.get("entries", []):
            R[int(s), int(j)] = float(r)
        rewards.append(R)

    b0_rows = _require(doc, "b0")
    b0_total = sum(float(p) for _, p in b0_rows)
    if abs(b0_total - 1.0) > 1e-6:
        raise SchemaError(f"b0 mass {b0_total:.9g} is not 1")
    b0 = Belief.normalized((int(s), float(p)) for s, p in b0_rows)
    return DecPomdpModel(
        states=tuple(states),
        human_actions=tuple(actions["human"]),
        robot_actions=tuple(actions["robot"]),
        human_observations=tuple(observations["human"]),
        robot_observations=tuple(observations["robot"]),
        transition=transition,
        observation=observation,
        rewards=tuple(rewards),
        b0=b0,
        gamma=float(_require(doc, "gamma")),
        meta=doc.get("meta", {}),
    )


def load_model(path: str | Path) -> DecPomdpModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"model file {path} is not valid JSON: {e}") from e
    return model_from_dict(doc)
