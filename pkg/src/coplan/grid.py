"""Collaborative repair task on a small grid.

Two broken devices need a joint repair (both agents on the device cell, human
holding a component, both playing repair); one device needs a robot-only
maintenance action.  The human fetches components one at a time from a toolbox
cell.  The task ends in an absorbing all-good state worth +100 on entry; each
objective adds a one-time bonus for repairing its preferred device first.

State = (human cell, robot cell, one status bit per device, holding flag).
Default geometry: 4x3 grid, broken devices at (0,0) and (3,0), maintenance
at (1,0), toolbox at (2,2), human starts at (2,1), robot at (1,1); that is
12*12*2*2*2*2 = 2304 states, 7 actions per agent, 30 human observations and
180 robot observations.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateTask, ModelValidationError
from .model import Belief, DecPomdpModel

UP, DOWN, LEFT, RIGHT, WAIT, REPAIR = 0, 1, 2, 3, 4, 5
PICK = 6      # human only
MAINTAIN = 6  # robot only

_DELTAS = {UP: (0, -1), DOWN: (0, 1), LEFT: (-1, 0), RIGHT: (1, 0)}

HUMAN_ACTIONS = ("up", "down", "left", "right", "wait", "repair", "pick")
ROBOT_ACTIONS = ("up", "down", "left", "right", "wait", "repair", "maintain")


@dataclass(frozen=True)
class GridTaskConfig:
    width: int = 4
    height: int = 3
    broken_device_cells: tuple[tuple[int, int], ...] = ((0, 0), (3, 0))
    maintenance_device_cell: tuple[int, int] = (1, 0)
    toolbox_cell: tuple[int, int] = (2, 2)
    human_start: tuple[int, int] = (2, 1)
    robot_start: tuple[int, int] = (1, 1)
    preference_bonus: float = 10.0
    gamma: float = 0.95
    horizon_for_success: int = 30

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DegenerateTask(f"grid {self.width}x{self.height} is empty")
        if not self.broken_device_cells:
            raise DegenerateTask("task has zero broken devices, nothing to repair")
        cells = [*self.broken_device_cells, self.maintenance_device_cell,
                 self.toolbox_cell, self.human_start, self.robot_start]
        for (x, y) in cells:
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise DegenerateTask(f"cell ({x}, {y}) outside {self.width}x{self.height} grid")
        device_cells = [*self.broken_device_cells, self.maintenance_device_cell]
        if len(set(device_cells)) != len(device_cells):
            raise DegenerateTask("device cells must be pairwise distinct")
        if self.preference_bonus < 0:
            raise DegenerateTask("preference bonus must be >= 0")
        if not (0.0 <= self.gamma < 1.0):
            raise DegenerateTask(f"gamma {self.gamma} outside [0, 1)")

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    @property
    def n_broken(self) -> int:
        return len(self.broken_device_cells)

    def cell_index(self, cell: tuple[int, int]) -> int:
        x, y = cell
        return y * self.width + x

    def cell_xy(self, c: int) -> tuple[int, int]:
        return c % self.width, c // self.width


@dataclass(frozen=True)
class GridState:
    human_cell: tuple[int, int]
    robot_cell: tuple[int, int]
    statuses: tuple[int, ...]  # broken devices first (1 = good), maintenance last
    holding: bool

    @property
    def all_good(self) -> bool:
        return all(self.statuses)


def _encode(cfg: GridTaskConfig, hc: int, rc: int, statuses, hold: int) -> int:
    s = hc * cfg.n_cells + rc
    for bit in statuses:
        s = s * 2 + bit
    return s * 2 + hold


def _objective_labels(cfg: GridTaskConfig) -> tuple[str, ...]:
    if cfg.n_broken == 2:
        a, b = cfg.broken_device_cells
        if a[0] != b[0]:
            return ("prefer-left", "prefer-right") if a[0] < b[0] else ("prefer-right", "prefer-left")
    return tuple(f"prefer-device{i}" for i in range(cfg.n_broken))


def grid_state(model: DecPomdpModel, s: int) -> GridState:
    """Decode a state index of a grid-task model."""
    meta = model.meta
    if meta.get("kind") != "grid-task":
        raise ModelValidationError("model does not carry grid-task metadata")
    cfg = GridTaskConfig(**meta["config"])
    hold = s % 2
    s //= 2
    bits = []
    for _ in range(cfg.n_broken + 1):
        bits.append(s % 2)
        s //= 2
    bits.reverse()
    rc = s % cfg.n_cells
    hc = s // cfg.n_cells
    return GridState(cfg.cell_xy(hc), cfg.cell_xy(rc), tuple(bits), bool(hold))


def initial_state_index(cfg: GridTaskConfig) -> int:
    statuses = (0,) * (cfg.n_broken + 1)
    return _encode(cfg, cfg.cell_index(cfg.human_start), cfg.cell_index(cfg.robot_start), statuses, 0)


def build_grid_task(cfg: GridTaskConfig | None = None) -> DecPomdpModel:
    """Build the repair task as a tabular two-agent model with one reward
    objective per broken device (that device preferred first)."""
    cfg = cfg or GridTaskConfig()
    C = cfg.n_cells
    k = cfg.n_broken
    n_bits = k + 1
    S = C * C * (2 ** n_bits) * 2

    # decode every state into component arrays
    idx = np.arange(S)
    hold = idx % 2
    idx = idx // 2
    status = np.empty((S, n_bits), dtype=np.int64)
    for b in range(n_bits - 1, -1, -1):
        status[:, b] = idx % 2
        idx = idx // 2
    rc = idx % C
    hc = idx // C
    hx, hy = hc % cfg.width, hc // cfg.width
    rx, ry = rc % cfg.width, rc // cfg.width

    broken_idx = np.array([cfg.cell_index(c) for c in cfg.broken_device_cells])
    maint_idx = cfg.cell_index(cfg.maintenance_device_cell)
    tool_idx = cfg.cell_index(cfg.toolbox_cell)

    terminal = status.all(axis=1)
    any_broken = (status[:, :k] == 0).any(axis=1)

    def moved(x, y, a):
        """(new cell index, valid flag) for one agent playing a."""
        if a in _DELTAS:
            dx, dy = _DELTAS[a]
            nx, ny = x + dx, y + dy
            ok = (0 <= nx) & (nx < cfg.width) & (0 <= ny) & (ny < cfg.height)
            cell = np.where(ok, ny * cfg.width + nx, y * cfg.width + x)
            return cell, ok
        return y * cfg.width + x, np.ones(len(x), dtype=bool)

    transitions = []
    n_joint = len(HUMAN_ACTIONS) * len(ROBOT_ACTIONS)
    rewards = [np.zeros((S, n_joint), dtype=float) for _ in range(k)]

    for a_h in range(len(HUMAN_ACTIONS)):
        nhc, h_move_ok = moved(hx, hy, a_h)
        for a_r in range(len(ROBOT_ACTIONS)):
            j = a_h * len(ROBOT_ACTIONS) + a_r
            nrc, r_move_ok = moved(rx, ry, a_r)

            repair = np.zeros((S, k), dtype=bool)
            if a_h == REPAIR and a_r == REPAIR:
                for i, dc in enumerate(broken_idx):
                    repair[:, i] = (hold == 1) & (hc == dc) & (rc == dc) & (status[:, i] == 0)
            repair_any = repair.any(axis=1)
            pick = (a_h == PICK) & (hc == tool_idx) & (hold == 0)
            maintain = (a_r == MAINTAIN) & (rc == maint_idx) & (status[:, k] == 0)

            # per-agent validity, used for penalties in every state
            if a_h in _DELTAS:
                h_valid = h_move_ok
            elif a_h == WAIT:
                h_valid = np.ones(S, dtype=bool)
            elif a_h == REPAIR:
                h_valid = repair_any
            else:
                h_valid = pick
            if a_r in _DELTAS:
                r_valid = r_move_ok
            elif a_r == WAIT:
                r_valid = np.ones(S, dtype=bool)
            elif a_r == REPAIR:
                r_valid = repair_any
            else:
                r_valid = maintain

            nstatus = status.copy()
            for i in range(k):
                nstatus[:, i] = np.where(repair[:, i], 1, status[:, i])
            nstatus[:, k] = np.where(maintain, 1, status[:, k])
            nhold = np.where(repair_any, 0, hold)
            nhold = np.where(pick, 1, nhold)

            ns = nhc * C + nrc
            for b in range(n_bits):
                ns = ns * 2 + nstatus[:, b]
            ns = ns * 2 + nhold
            ns = np.where(terminal, np.arange(S), ns)

            transitions.append(sp.csr_matrix(
                (np.ones(S), (np.arange(S), ns)), shape=(S, S)))

            penalties = -20.0 * (~h_valid).astype(float) - 20.0 * (~r_valid).astype(float)
            if a_h == WAIT:
                h_cost = np.where(any_broken, -1.0, 0.0)
            else:
                h_cost = np.full(S, -2.0)
            r_cost = np.full(S, -2.0)
            base = (np.where(h_valid, h_cost, -20.0)
                    + np.where(r_valid, r_cost, -20.0))
            completed = (~terminal) & nstatus.all(axis=1)
            for i in range(k):
                other_broken = (np.delete(status[:, :k], i, axis=1) == 0).any(axis=1) \
                    if k > 1 else np.zeros(S, dtype=bool)
                bonus = cfg.preference_bonus * (repair[:, i] & other_broken)
                r = np.where(terminal, penalties, base + 100.0 * completed + bonus)
                rewards[i][:, j] = r

    # observations depend on the landed state only; one matrix shared by all
    # joint actions
    device_at = {int(c): ("repair", i) for i, c in enumerate(broken_idx)}
    device_at[maint_idx] = ("maintenance", k)

    human_obs_labels: list[str] = []
    human_obs_index: dict[tuple, int] = {}
    for c in range(C):
        x, y = cfg.cell_xy(c)
        if c in device_at:
            for coloc in (0, 1):
                for st in (0, 1):
                    human_obs_index[(c, coloc, st)] = len(human_obs_labels)
                    human_obs_labels.append(f"cell({x},{y})|coloc={coloc}|device={'good' if st else 'down'}")
        else:
            for coloc in (0, 1):
                human_obs_index[(c, coloc, None)] = len(human_obs_labels)
                human_obs_labels.append(f"cell({x},{y})|coloc={coloc}")

    robot_obs_labels: list[str] = []
    robot_obs_index: dict[tuple, int] = {}
    for c in range(C):
        x, y = cfg.cell_xy(c)
        if c in device_at:
            for hcell in range(C):
                for st in (0, 1):
                    robot_obs_index[(c, hcell, st)] = len(robot_obs_labels)
                    robot_obs_labels.append(f"cell({x},{y})|human={hcell}|device={'good' if st else 'down'}")
        else:
            for hcell in range(C):
                robot_obs_index[(c, hcell, None)] = len(robot_obs_labels)
                robot_obs_labels.append(f"cell({x},{y})|human={hcell}")

    n_or = len(robot_obs_labels)
    obs_cols = np.empty(S, dtype=np.int64)
    for s in range(S):
        h, r = int(hc[s]), int(rc[s])
        coloc = int(h == r)
        h_key = (h, coloc, int(status[s, device_at[h][1]])) if h in device_at else (h, coloc, None)
        r_key = (r, h, int(status[s, device_at[r][1]])) if r in device_at else (r, h, None)
        obs_cols[s] = human_obs_index[h_key] * n_or + robot_obs_index[r_key]
    obs_matrix = sp.csr_matrix(
        (np.ones(S), (np.arange(S), obs_cols)),
        shape=(S, len(human_obs_labels) * n_or))

    state_labels = tuple(
        f"h{int(hc[s])}|r{int(rc[s])}|" + "".join(str(int(b)) for b in status[s]) + f"|k{int(hold[s])}"
        for s in range(S))

    s0 = initial_state_index(cfg)
    noop_joint = WAIT * len(ROBOT_ACTIONS) + WAIT
    meta = {
        "kind": "grid-task",
        "config": asdict(cfg),
        "objectives": list(_objective_labels(cfg)),
        "initial_state": int(s0),
        "noop_joint_action": int(noop_joint),
        "device_count": n_bits,
        "horizon_for_success": cfg.horizon_for_success,
    }

    return DecPomdpModel(
        states=state_labels,
        human_actions=HUMAN_ACTIONS,
        robot_actions=ROBOT_ACTIONS,
        human_observations=tuple(human_obs_labels),
        robot_observations=tuple(robot_obs_labels),
        transition=tuple(transitions),
        observation=(obs_matrix,) * n_joint,
        rewards=tuple(rewards),
        b0=Belief.dirac(s0),
        gamma=cfg.gamma,
        meta=meta,
    )


def all_good(model: DecPomdpModel, s: int) -> bool:
    """True when every device in state s is good (the success condition)."""
    return grid_state(model, s).all_good
