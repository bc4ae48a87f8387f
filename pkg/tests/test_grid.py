"""Grid task generator: counts, dynamics, and reward rules.

Reward spot checks decode the state (grid_state), replay the rule from the
documented semantics, and compare against the built tables.
"""
from __future__ import annotations

import numpy as np
import pytest

from coplan.errors import DegenerateTask
from coplan.grid import (GridTaskConfig, all_good, build_grid_task, grid_state,
                         initial_state_index, HUMAN_ACTIONS, ROBOT_ACTIONS,
                         WAIT, REPAIR, PICK, MAINTAIN)


def _encode(cfg, model, human_cell, robot_cell, statuses, holding):
    for s in range(model.n_states):
        g = grid_state(model, s)
        if (g.human_cell == human_cell and g.robot_cell == robot_cell
                and g.statuses == statuses and g.holding == holding):
            return s
    raise AssertionError("state not found")


@pytest.fixture(scope="module")
def model():
    return build_grid_task()


def test_default_counts(model):
    assert model.n_states == 2304
    assert model.n_joint_actions == 49
    assert model.n_human_actions == 7
    assert model.n_robot_actions == 7
    assert model.n_human_observations == 30
    assert model.n_robot_observations == 180
    assert model.n_joint_observations == 5400


def test_objective_labels_and_count(model):
    assert model.n_objectives == 2
    assert model.meta["objectives"] == ["prefer-left", "prefer-right"]


def test_initial_state(model):
    s0 = model.meta["initial_state"]
    assert model.b0.probs == {s0: 1.0}
    g = grid_state(model, s0)
    assert g.human_cell == (2, 1)
    assert g.robot_cell == (1, 1)
    assert g.statuses == (0, 0, 0)
    assert not g.holding


def test_degenerate_configs_rejected():
    with pytest.raises(DegenerateTask):
        GridTaskConfig(width=1, height=1, broken_device_cells=(),
                       maintenance_device_cell=(0, 0), toolbox_cell=(0, 0),
                       human_start=(0, 0), robot_start=(0, 0))
    with pytest.raises(DegenerateTask):
        GridTaskConfig(broken_device_cells=((0, 0), (0, 0)))
    with pytest.raises(DegenerateTask):
        GridTaskConfig(toolbox_cell=(9, 9))


def test_observation_determinism(model):
    # For every (a, s') exactly one joint observation fires with mass 1.
    for j in (0, 24, 48):
        Om = model.observation[j]
        rows = np.diff(Om.indptr)
        assert (rows == 1).all()
        assert np.allclose(Om.data, 1.0)


def test_transitions_deterministic(model):
    for j in range(model.n_joint_actions):
        T = model.transition[j]
        assert (np.diff(T.indptr) == 1).all()
        assert np.allclose(T.data, 1.0)


def test_all_good_states_absorbing_and_zero_base_reward(model):
    terminal = [s for s in range(model.n_states) if all_good(model, s)]
    assert terminal
    noop = model.meta["noop_joint_action"]
    for s in terminal[:32]:
        T = model.transition[noop]
        lo = T.indptr[s]
        assert T.indices[lo] == s
        # every joint action self-loops once terminal
        j = model.joint_action(0, 0)
        assert model.transition[j].indices[model.transition[j].indptr[s]] == s
        assert model.rewards[0][s, noop] == 0.0


def test_invalid_actions_penalized_in_terminal_states(model):
    # Repair with nobody on a device is invalid for both agents: -40.
    s = _encode(None, model, (2, 1), (1, 1), (1, 1, 1), False)
    j = model.joint_action(REPAIR, REPAIR)
    assert model.rewards[0][s, j] == -40.0


def test_reachability_within_horizon(model):
    # Breadth-first search over joint actions from the start state reaches an
    # all-good state within 30 steps.
    s0 = model.meta["initial_state"]
    frontier = {s0}
    seen = {s0}
    for depth in range(1, 31):
        nxt = set()
        for s in frontier:
            for j in range(model.n_joint_actions):
                T = model.transition[j]
                s2 = int(T.indices[T.indptr[s]])
                if s2 not in seen:
                    seen.add(s2)
                    nxt.add(s2)
        if any(all_good(model, s) for s in nxt):
            assert depth <= 30
            return
        frontier = nxt
    raise AssertionError("no all-good state reachable within 30 joint steps")


def test_wait_costs(model):
    s0 = model.meta["initial_state"]
    j_ww = model.joint_action(WAIT, WAIT)
    # human wait -1 while a repairable device is broken, robot wait -2
    assert model.rewards[0][s0, j_ww] == -3.0
    # all repairable good, maintenance pending: human wait is free
    s = _encode(None, model, (2, 1), (1, 1), (1, 1, 0), False)
    assert model.rewards[0][s, j_ww] == -2.0


def test_move_costs_and_offgrid_penalty(model):
    s0 = model.meta["initial_state"]
    j = model.joint_action(0, WAIT)  # human up, robot wait
    assert model.rewards[0][s0, j] == -4.0
    # moving off-grid is invalid: -20 replaces that agent's -2
    s_top = _encode(None, model, (2, 0), (1, 1), (0, 0, 0), False)
    assert model.rewards[0][s_top, j] == -22.0
    g = grid_state(model, int(model.transition[j].indices[model.transition[j].indptr[s_top]]))
    assert g.human_cell == (2, 0)  # position unchanged


def test_pick_only_at_toolbox_without_component(model):
    j = model.joint_action(PICK, WAIT)
    s_tool = _encode(None, model, (2, 2), (1, 1), (0, 0, 0), False)
    s2 = int(model.transition[j].indices[model.transition[j].indptr[s_tool]])
    assert grid_state(model, s2).holding
    assert model.rewards[0][s_tool, j] == -4.0
    # picking while already holding is invalid
    s_hold = _encode(None, model, (2, 2), (1, 1), (0, 0, 0), True)
    assert model.rewards[0][s_hold, j] == -22.0
    # picking elsewhere is invalid
    s_off = _encode(None, model, (2, 1), (1, 1), (0, 0, 0), False)
    assert model.rewards[0][s_off, j] == -22.0


def test_joint_repair_requires_colocation_component_and_both_hands(model):
    j_rr = model.joint_action(REPAIR, REPAIR)
    s_ready = _encode(None, model, (0, 0), (0, 0), (0, 0, 0), True)
    s2 = int(model.transition[j_rr].indices[model.transition[j_rr].indptr[s_ready]])
    g = grid_state(model, s2)
    assert g.statuses[0] == 1
    assert not g.holding
    # left repaired first while right still broken: +10 preference bonus on
    # the prefer-left objective, not on prefer-right
    assert model.rewards[0][s_ready, j_rr] == -2.0 - 2.0 + 10.0
    assert model.rewards[1][s_ready, j_rr] == -4.0
    # no component: both repair plays invalid
    s_empty = _encode(None, model, (0, 0), (0, 0), (0, 0, 0), False)
    assert model.rewards[0][s_empty, j_rr] == -40.0
    # only one agent at the device: invalid for both (no joint repair)
    s_alone = _encode(None, model, (0, 0), (1, 0), (0, 0, 0), True)
    assert model.rewards[0][s_alone, j_rr] == -40.0
    # one agent repairs alone while the other waits: that agent invalid
    j_rw = model.joint_action(REPAIR, WAIT)
    assert model.rewards[0][s_ready, j_rw] == -20.0 - 2.0


def test_maintain_is_robot_only_at_its_device(model):
    j = model.joint_action(WAIT, MAINTAIN)
    s_at = _encode(None, model, (2, 1), (1, 0), (0, 0, 0), False)
    s2 = int(model.transition[j].indices[model.transition[j].indptr[s_at]])
    assert grid_state(model, s2).statuses[2] == 1
    assert model.rewards[0][s_at, j] == -1.0 - 2.0
    s_off = _encode(None, model, (2, 1), (1, 1), (0, 0, 0), False)
    assert model.rewards[0][s_off, j] == -1.0 - 20.0


def test_completion_pays_100(model):
    # Final repair with everything else good: +100 on entering all-good.
    j_rr = model.joint_action(REPAIR, REPAIR)
    s = _encode(None, model, (3, 0), (3, 0), (1, 0, 1), True)
    s2 = int(model.transition[j_rr].indices[model.transition[j_rr].indptr[s]])
    assert all_good(model, s2)
    assert model.rewards[0][s, j_rr] == 100.0 - 4.0
    # completing second gets no preference bonus on either objective
    assert model.rewards[1][s, j_rr] == 100.0 - 4.0


def test_preference_bonus_only_while_other_still_broken(model):
    j_rr = model.joint_action(REPAIR, REPAIR)
    # right repaired first while left broken: bonus on prefer-right only
    s = _encode(None, model, (3, 0), (3, 0), (0, 0, 0), True)
    assert model.rewards[1][s, j_rr] == 6.0
    assert model.rewards[0][s, j_rr] == -4.0


def test_human_observation_structure(model):
    # (own cell, co-located flag, device status in cell) for device cells;
    # 30 = 9 plain cells x 2 + 3 device cells x 4
    labels = model.human_observations
    assert len(labels) == 30
    assert len([l for l in labels if "device=" in l]) == 12


def test_robot_observation_structure(model):
    labels = model.robot_observations
    assert len(labels) == 180
    assert len([l for l in labels if "device=" in l]) == 3 * 12 * 2


def test_custom_geometry_round_trips():
    cfg = GridTaskConfig(width=3, height=2, broken_device_cells=((0, 0),),
                         maintenance_device_cell=(2, 0), toolbox_cell=(1, 1),
                         human_start=(0, 1), robot_start=(2, 1))
    m = build_grid_task(cfg)
    assert m.n_states == 6 * 6 * 4 * 2
    s0 = initial_state_index(cfg)
    assert m.b0.probs == {s0: 1.0}
    g = grid_state(m, s0)
    assert g.human_cell == (0, 1)
    assert g.statuses == (0, 0)
    assert m.n_objectives == 1


def test_action_label_tables():
    assert HUMAN_ACTIONS[PICK] == "pick"
    assert ROBOT_ACTIONS[MAINTAIN] == "maintain"
    assert HUMAN_ACTIONS[:5] == ROBOT_ACTIONS[:5]
