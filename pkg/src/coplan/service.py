"""Live collaboration sessions: a human plays the grid task with a solved
robot policy over a WebSocket, eight rounds per session.

The human client sees the full state; the robot executor inside the session
only ever receives its own observations.
"""
from __future__ import annotations

import asyncio
import itertools
import json
import secrets
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from .grid import grid_state
from .harness import (EpisodeTrace, StepRecord, initial_robot_observation,
                      _sample_row, success_predicate)
from .model import DecPomdpModel
from .robot import RobotPolicy

DEFAULT_ROUNDS = 8
DEFAULT_HORIZON = 30
LIVE_NODE = -1  # trace slot for the human controller node; live humans have none

QUESTIONNAIRE_CHOICES = ("no-adaptation", "human-adapts", "robot-adapts",
                         "mutual")

AWAITING = "awaiting-human"
FINISHED_SUCCESS = "finished-success"
FINISHED_TIMEOUT = "finished-timeout"


class SessionError(Exception):
    pass


@dataclass
class Session:
    id: str
    policy_id: str
    model: DecPomdpModel
    executor: RobotPolicy
    seed: int
    objective: int
    rounds: int
    horizon: int
    state: int = 0
    round_index: int = 1
    step_index: int = 0
    status: str = AWAITING
    pending_robot_action: int = 0
    steps: list[StepRecord] = field(default_factory=list)
    traces: list[EpisodeTrace] = field(default_factory=list)
    questionnaire: list[dict] = field(default_factory=list)
    seq: int = 0
    _rng: np.random.Generator = None
    _cumulative: float = 0.0
    _discounted: float = 0.0
    _disc: float = 1.0

    def next_seq(self) -> int:
        self.seq += 1
        return self.seq

    @property
    def round_seed(self) -> int:
        return self.seed * 100 + self.round_index

    def begin_round(self) -> None:
        self._rng = np.random.default_rng(self.round_seed)
        b_idx, b_val = self.model.b0.arrays()
        self.state = int(self._rng.choice(b_idx, p=b_val))
        self.executor = self.executor.fresh()
        self.pending_robot_action = self.executor.step(
            initial_robot_observation(self.model, self.state, self._rng))
        self.step_index = 0
        self.steps = []
        self._cumulative = 0.0
        self._discounted = 0.0
        self._disc = 1.0
        self.status = AWAITING

    def apply_human_action(self, a_h: int) -> dict:
        """One simultaneous joint step.  Returns what happened plus the wire
        messages to deliver, in order: terminal-state view before any round
        advance, then round_end, then the fresh round's state."""
        if self.status != AWAITING:
            raise SessionError("session finished")
        if not (0 <= a_h < self.model.n_human_actions):
            raise SessionError(f"invalid action id {a_h}")
        model = self.model
        a_r = self.pending_robot_action
        j = model.joint_action(a_h, a_r)
        r = float(model.rewards[self.objective][self.state, j])
        self._cumulative += r
        self._discounted += self._disc * r
        self._disc *= model.gamma
        s2 = _sample_row(model.transition[j], self.state, self._rng)
        o_joint = _sample_row(model.observation[j], s2, self._rng)
        o_h, o_r = divmod(o_joint, model.n_robot_observations)
        self.steps.append(StepRecord(self.step_index, self.state, a_h, a_r,
                                     o_h, o_r, LIVE_NODE, r))
        self.state = s2
        self.step_index += 1
        ended_round = self.round_index
        success = success_predicate(model, s2)
        round_over = success or self.step_index >= self.horizon
        if round_over:
            self.traces.append(EpisodeTrace(
                seed=self.round_seed, objective=self.objective,
                steps=self.steps, terminal=success, success=success,
                cumulative_reward=self._cumulative,
                discounted_reward=self._discounted))
            if self.round_index >= self.rounds:
                self.status = FINISHED_SUCCESS if success else FINISHED_TIMEOUT
        messages = [state_message(self)]
        if round_over:
            messages.append(round_end_message(self, ended_round, success))
            if self.status == AWAITING:
                self.round_index += 1
                self.begin_round()
                messages.append(state_message(self))
        else:
            self.pending_robot_action = self.executor.step(o_r)
        return {"a_h": a_h, "a_r": a_r, "round_over": round_over,
                "ended_round": ended_round, "success": success,
                "messages": messages}


def state_message(session: Session) -> dict:
    model = session.model
    gs = grid_state(model, session.state)
    cfg = model.meta["config"]
    devices = [{"cell": list(cell), "status": "good" if st else "broken",
                "kind": "repair"}
               for cell, st in zip(cfg["broken_device_cells"], gs.statuses)]
    devices.append({"cell": list(cfg["maintenance_device_cell"]),
                    "status": "good" if gs.statuses[-1] else "needs-maintenance",
                    "kind": "maintenance"})
    return {
        "type": "state",
        "session": session.id,
        "seq": session.next_seq(),
        "grid": {"width": cfg["width"], "height": cfg["height"],
                 "toolbox_cell": list(cfg["toolbox_cell"]),
                 "human_actions": list(model.human_actions),
                 "robot_actions": list(model.robot_actions)},
        "devices": devices,
        "holding": gs.holding,
        "round": session.round_index,
        "step": session.step_index,
        "status": session.status,
        "robot_cell": list(gs.robot_cell),
        "human_cell": list(gs.human_cell),
    }


def round_end_message(session: Session, round_index: int, success: bool) -> dict:
    return {"type": "round_end", "session": session.id,
            "seq": session.next_seq(), "round": round_index,
            "success": success, "cumulative_reward_hidden": True}


class SessionService:
    """Owns sessions and read-only policy artifacts; sync core, no I/O."""

    def __init__(self, model: DecPomdpModel,
                 policies: dict[str, RobotPolicy],
                 rounds: int = DEFAULT_ROUNDS,
                 horizon: int = DEFAULT_HORIZON):
        self.model = model
        self.policies = dict(policies)
        self.rounds = rounds
        self.horizon = horizon
        self.sessions: dict[str, Session] = {}
        self._ids = itertools.count(1)

    def create_session(self, policy_id: str, config: dict | None = None) -> Session:
        if policy_id not in self.policies:
            raise SessionError(f"unknown policy {policy_id!r}")
        config = config or {}
        seed = int(config.get("seed", secrets.randbits(31)))
        objective = int(config.get("objective", 0))
        if not (0 <= objective < self.model.n_objectives):
            raise SessionError(f"unknown objective {objective}")
        sid = f"s{next(self._ids)}-{secrets.token_hex(4)}"
        session = Session(id=sid, policy_id=policy_id, model=self.model,
                          executor=self.policies[policy_id].fresh(),
                          seed=seed, objective=objective,
                          rounds=int(config.get("rounds", self.rounds)),
                          horizon=int(config.get("horizon", self.horizon)))
        session.begin_round()
        self.sessions[sid] = session
        return session

    def get(self, session_id: str) -> Session:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise SessionError(f"unknown session {session_id!r}") from None

    def submit_human_action(self, session_id: str, a_h: int) -> dict:
        return self.get(session_id).apply_human_action(a_h)

    def export(self, session_id: str) -> dict:
        session = self.get(session_id)
        rounds = [{"round": i + 1, "partial": False, **trace.to_dict()}
                  for i, trace in enumerate(session.traces)]
        if session.status == AWAITING and session.steps:
            partial = EpisodeTrace(
                seed=session.round_seed, objective=session.objective,
                steps=session.steps, terminal=False, success=False,
                cumulative_reward=session._cumulative,
                discounted_reward=session._discounted)
            rounds.append({"round": session.round_index, "partial": True,
                           **partial.to_dict()})
        return {"session": session.id, "policy": session.policy_id,
                "status": session.status, "objective": session.objective,
                "rounds": rounds, "questionnaire": list(session.questionnaire)}

    def store_questionnaire(self, session_id: str, choice: str,
                            text: str = "") -> dict:
        session = self.get(session_id)
        if choice not in QUESTIONNAIRE_CHOICES:
            raise SessionError(
                f"choice must be one of {', '.join(QUESTIONNAIRE_CHOICES)}")
        entry = {"round": session.round_index, "choice": choice,
                 "text": str(text)}
        session.questionnaire.append(entry)
        return entry


def create_app(service: SessionService) -> FastAPI:
    """FastAPI app speaking the session wire protocol."""
    app = FastAPI(title="coplan session service")
    app.state.service = service
    locks: dict[str, asyncio.Lock] = {}

    def lock_for(sid: str) -> asyncio.Lock:
        return locks.setdefault(sid, asyncio.Lock())

    @app.get("/policies")
    def list_policies():
        return {"policies": sorted(service.policies)}

    @app.get("/sessions/{session_id}/traces")
    def traces(session_id: str):
        try:
            return service.export(session_id)
        except SessionError as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)

    @app.post("/sessions/{session_id}/questionnaire")
    async def questionnaire(session_id: str, payload: dict):
        try:
            entry = service.store_questionnaire(
                session_id, payload.get("choice", ""),
                payload.get("text", ""))
        except SessionError as exc:
            code = 404 if "unknown session" in str(exc) else 400
            return JSONResponse({"error": str(exc)}, status_code=code)
        return {"stored": entry}

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await ws.send_json({"type": "error", "error": "bad json"})
                    continue
                kind = msg.get("type")
                if kind == "new_session":
                    try:
                        session = service.create_session(
                            msg.get("policy", ""), msg.get("config"))
                    except SessionError as exc:
                        await ws.send_json({"type": "error",
                                            "error": str(exc)})
                        continue
                    await ws.send_json(state_message(session))
                elif kind == "action":
                    sid = msg.get("session", "")
                    try:
                        session = service.get(sid)
                    except SessionError as exc:
                        await ws.send_json({"type": "error",
                                            "error": str(exc)})
                        continue
                    async with lock_for(sid):
                        try:
                            result = session.apply_human_action(
                                int(msg.get("action", -1)))
                        except (SessionError, TypeError, ValueError) as exc:
                            await ws.send_json({"type": "error",
                                                "session": sid,
                                                "error": str(exc)})
                            continue
                    for payload in result["messages"]:
                        await ws.send_json(payload)
                else:
                    await ws.send_json({"type": "error",
                                        "error": f"unknown type {kind!r}"})
        except WebSocketDisconnect:
            return

    return app
