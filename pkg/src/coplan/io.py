"""On-disk formats for solved artifacts.

A robot policy bundle carries the compiled POMDP and its alpha vectors in one
JSON file: kernels in float64 (the executor filters with them), alpha vectors
in float32 (greedy lookups tolerate the rounding).
"""
from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import SchemaError
from .model import Belief, PomdpModel
from .robot import RobotPolicy
from .solver.alpha import AlphaVectorPolicy

BUNDLE_SCHEMA_VERSION = 1


def _pack(arr: np.ndarray, dtype) -> dict:
    a = np.ascontiguousarray(arr, dtype=dtype)
    return {"dtype": str(a.dtype), "shape": list(a.shape),
            "b64": base64.b64encode(a.tobytes()).decode("ascii")}


def _unpack(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["b64"])
    return np.frombuffer(raw, dtype=np.dtype(obj["dtype"])).reshape(obj["shape"]).copy()


def _pack_csr(m: sp.csr_matrix) -> dict:
    m = m.tocsr()
    return {"shape": list(m.shape), "data": _pack(m.data, np.float64),
            "indices": _pack(m.indices, np.int32),
            "indptr": _pack(m.indptr, np.int32)}


def _unpack_csr(obj: dict) -> sp.csr_matrix:
    return sp.csr_matrix(
        (_unpack(obj["data"]), _unpack(obj["indices"]), _unpack(obj["indptr"])),
        shape=tuple(obj["shape"]))


def pomdp_to_dict(model: PomdpModel) -> dict:
    b_idx, b_val = model.b0.arrays()
    return {
        "states": list(model.states),
        "actions": list(model.actions),
        "observations": list(model.observations),
        "transition": [_pack_csr(t) for t in model.transition],
        "observation": [_pack_csr(o) for o in model.observation],
        "reward": _pack(model.reward, np.float64),
        "b0": {"indices": _pack(b_idx, np.int64),
               "values": _pack(b_val, np.float64)},
        "gamma": model.gamma,
        "meta": model.meta,
    }


def pomdp_from_dict(data: dict) -> PomdpModel:
    try:
        b0 = Belief.normalized(zip(_unpack(data["b0"]["indices"]).tolist(),
                                   _unpack(data["b0"]["values"]).tolist()))
        return PomdpModel(
            states=tuple(data["states"]),
            actions=tuple(data["actions"]),
            observations=tuple(data["observations"]),
            transition=tuple(_unpack_csr(t) for t in data["transition"]),
            observation=tuple(_unpack_csr(o) for o in data["observation"]),
            reward=_unpack(data["reward"]),
            b0=b0,
            gamma=float(data["gamma"]),
            meta=data.get("meta", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed POMDP payload: {exc}") from exc


def alpha_policy_to_dict(policy: AlphaVectorPolicy) -> dict:
    return {"vectors": _pack(policy.vectors, np.float32),
            "actions": _pack(policy.actions, np.int64),
            "gamma": policy.gamma,
            "metadata": policy.metadata}


def alpha_policy_from_dict(data: dict) -> AlphaVectorPolicy:
    try:
        return AlphaVectorPolicy(
            vectors=_unpack(data["vectors"]).astype(float),
            actions=_unpack(data["actions"]),
            gamma=float(data["gamma"]),
            metadata=data.get("metadata", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed policy payload: {exc}") from exc


def save_robot_policy(policy: RobotPolicy, path: str | Path) -> None:
    payload = {"schema_version": BUNDLE_SCHEMA_VERSION,
               "kind": "robot-policy-bundle",
               "compiled": pomdp_to_dict(policy.compiled),
               "policy": alpha_policy_to_dict(policy.policy),
               "recovery": policy.recovery}
    Path(path).write_text(json.dumps(payload, separators=(",", ":")))


def load_robot_policy(path: str | Path) -> RobotPolicy:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not a JSON bundle: {exc}") from exc
    if payload.get("kind") != "robot-policy-bundle":
        raise SchemaError("file is not a robot policy bundle")
    if payload.get("schema_version") != BUNDLE_SCHEMA_VERSION:
        raise SchemaError(
            f"unsupported schema version {payload.get('schema_version')!r}")
    return RobotPolicy(
        compiled=pomdp_from_dict(payload["compiled"]),
        policy=alpha_policy_from_dict(payload["policy"]),
        recovery=payload.get("recovery", "condition-obs"))
