"""Episode simulation and synthetic-human evaluation campaigns.

A campaign builds robot policies (robust unions and a deterministic
best-response baseline), samples populations of synthetic humans, plays
seeded episodes of robot versus human, and reports per-family means, success
rates, and wall-clock per pipeline stage.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fsc.controller import StochasticFsc, union_fsc
from .fsc.extract import (ExtractionParams, extract_stochastic_fsc,
                          sample_deterministic_fsc)
from .grid import all_good
from .model import DecPomdpModel, to_mpomdp
from .robot import RobotPolicy, compile_robot_pomdp, solve_robot
from .solver import (JitteredEstimator, MctsBudget, MctsEstimator, PbviParams,
                     ValueIterationEstimator)

SUCCESS_HORIZON = 30

# Pipeline stages timed by campaigns, in execution order.
STAGE_CONVERT = "dec-to-mpomdp"
STAGE_EXTRACT = "extract-human-fscs"
STAGE_COMPILE = "build-robot-pomdp"
STAGE_SOLVE = "solve-robot-pomdp"
STAGES = (STAGE_CONVERT, STAGE_EXTRACT, STAGE_COMPILE, STAGE_SOLVE)


def success_predicate(model: DecPomdpModel, state: int) -> bool:
    """True iff the task counts as finished in this state."""
    if model.meta.get("kind") == "grid-task":
        return all_good(model, state)
    return False


@dataclass(frozen=True)
class StepRecord:
    t: int
    state: int
    a_h: int
    a_r: int
    o_h: int
    o_r: int
    node: int
    reward: float


@dataclass
class EpisodeTrace:
    seed: int
    objective: int
    steps: list[StepRecord]
    terminal: bool
    success: bool
    cumulative_reward: float
    discounted_reward: float

    def to_dict(self) -> dict:
        return {"seed": self.seed, "objective": self.objective,
                "terminal": self.terminal, "success": self.success,
                "cumulative_reward": self.cumulative_reward,
                "discounted_reward": self.discounted_reward,
                "steps": [[r.t, r.state, r.a_h, r.a_r, r.o_h, r.o_r, r.node,
                           r.reward] for r in self.steps]}

    @classmethod
    def from_dict(cls, data: dict) -> "EpisodeTrace":
        steps = [StepRecord(*row[:7], float(row[7])) for row in data["steps"]]
        return cls(seed=int(data["seed"]), objective=int(data["objective"]),
                   steps=steps, terminal=bool(data["terminal"]),
                   success=bool(data["success"]),
                   cumulative_reward=float(data["cumulative_reward"]),
                   discounted_reward=float(data["discounted_reward"]))


def _sample_row(matrix, row: int, rng: np.random.Generator) -> int:
    lo, hi = matrix.indptr[row], matrix.indptr[row + 1]
    if hi == lo + 1:
        return int(matrix.indices[lo])
    p = matrix.data[lo:hi]
    return int(matrix.indices[lo + rng.choice(hi - lo, p=p / p.sum())])


def initial_robot_observation(model: DecPomdpModel, state: int,
                              rng: np.random.Generator) -> int:
    """Robot observation emitted before any action, as if a no-op happened."""
    noop = int(model.meta["noop_joint_action"])
    o_joint = _sample_row(model.observation[noop], state, rng)
    return o_joint % model.n_robot_observations


def simulate_episode(model: DecPomdpModel, human: StochasticFsc,
                     robot: RobotPolicy, seed: int,
                     horizon: int = SUCCESS_HORIZON) -> EpisodeTrace:
    """Play one seeded episode.  Rewards are scored with the objective of the
    human's sampled entry node, so union humans are scored per draw."""
    rng = np.random.default_rng(seed)
    b_idx, b_val = model.b0.arrays()
    s = int(rng.choice(b_idx, p=b_val))
    ids = sorted(human.initial)
    n = int(ids[rng.choice(len(ids), p=np.array([human.initial[i] for i in ids]))])
    objective = human.nodes[n].objective
    reward = model.rewards[objective]

    executor = robot.fresh()
    a_r = executor.step(initial_robot_observation(model, s, rng))

    steps: list[StepRecord] = []
    total = 0.0
    discounted = 0.0
    disc = 1.0
    terminal = False
    success = False
    for t in range(horizon):
        a_h = human.act(n, rng)
        j = model.joint_action(a_h, a_r)
        r = float(reward[s, j])
        total += r
        discounted += disc * r
        disc *= model.gamma
        s2 = _sample_row(model.transition[j], s, rng)
        o_joint = _sample_row(model.observation[j], s2, rng)
        o_h, o_r = divmod(o_joint, model.n_robot_observations)
        steps.append(StepRecord(t, s, a_h, a_r, o_h, o_r, n, r))
        n = human.step(n, a_h, o_h, rng)
        s = s2
        if success_predicate(model, s):
            terminal = True
            success = True
            break
        a_r = executor.step(o_r)
    return EpisodeTrace(seed=seed, objective=objective, steps=steps,
                        terminal=terminal, success=success,
                        cumulative_reward=total, discounted_reward=discounted)


def objective_union_sampler(pairs, seed: int) -> StochasticFsc:
    """Uniform union of the seed-th pair of per-objective controllers."""
    pair = pairs[seed]
    return union_fsc(list(pair), [1.0] * len(pair))


@dataclass(frozen=True)
class CampaignSpec:
    """Defaults are the calibrated desk-scale protocol.

    The robust merge radius 0.5 matters: with an exact value-iteration
    estimator the softmax smears wide and the open list floods with
    near-duplicate beliefs, so a tight radius spends the whole node budget
    before the second repair phase is reachable, leaving controllers that can
    finish only the preferred device.  Deterministic humans keep a tight
    radius on purpose: coarse merging makes every sampled human tolerant of
    the same observation histories, which flattens the gap between the robust
    policy and the single-pair baseline.  Each human also gets its own
    jittered value landscape; without it every draw collapses to one policy.
    """
    temperature: float = 0.5
    robot_nmax: tuple[int, ...] = (200,)
    humans_per_objective: int = 20
    det_temperature: float = 0.5
    det_nmax: int = 200
    belief_merge_eps: float = 0.5
    det_eps: float = 1e-3
    action_threshold: float = 0.1
    jitter_scale: float = 1.0
    episodes_per_human: int = 2
    horizon: int = SUCCESS_HORIZON
    include_baseline: bool = True
    estimator: str = "vi"          # "vi" | "mcts"
    mcts_simulations: int = 10_000
    mcts_depth: int = 30
    solver: PbviParams = field(default_factory=PbviParams)
    seed: int = 0


@dataclass
class CellStats:
    mean_value: float
    std_err: float
    success_rate: float
    episodes: int

    def to_dict(self) -> dict:
        return {"mean_value": self.mean_value, "std_err": self.std_err,
                "success_rate": self.success_rate, "episodes": self.episodes}


@dataclass
class CampaignReport:
    cells: dict[str, dict[str, CellStats]]
    overall: dict[str, CellStats]
    stage_seconds: dict[str, dict[str, float]]
    fsc_sizes: dict[str, list[int]]
    metadata: dict

    def to_dict(self) -> dict:
        return {"cells": {r: {f: c.to_dict() for f, c in fams.items()}
                          for r, fams in self.cells.items()},
                "overall": {r: c.to_dict() for r, c in self.overall.items()},
                "stage_seconds": self.stage_seconds,
                "fsc_sizes": self.fsc_sizes,
                "metadata": self.metadata}

    def write_csv(self, path: str | Path) -> None:
        """Cells then timing rows, in deterministic order."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["robot", "family", "mean_value", "std_err",
                        "success_rate", "episodes"])
            for robot in sorted(self.cells):
                fams = self.cells[robot]
                for fam in sorted(fams):
                    c = fams[fam]
                    w.writerow([robot, fam, f"{c.mean_value:.6f}",
                                f"{c.std_err:.6f}", f"{c.success_rate:.6f}",
                                c.episodes])
                c = self.overall[robot]
                w.writerow([robot, "overall", f"{c.mean_value:.6f}",
                            f"{c.std_err:.6f}", f"{c.success_rate:.6f}",
                            c.episodes])
            w.writerow([])
            w.writerow(["robot", "stage", "seconds"])
            for robot in sorted(self.stage_seconds):
                stages = self.stage_seconds[robot]
                for stage in STAGES:
                    w.writerow([robot, stage, f"{stages[stage]:.3f}"])


def _aggregate(traces: list[EpisodeTrace]) -> CellStats:
    if not traces:
        return CellStats(0.0, 0.0, 0.0, 0)
    vals = np.array([t.cumulative_reward for t in traces])
    err = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return CellStats(float(vals.mean()), err,
                     float(np.mean([t.success for t in traces])), len(vals))


def _build_estimator(spec: CampaignSpec, mp, seed: int):
    vi = ValueIterationEstimator(mp)
    if spec.estimator == "mcts":
        return MctsEstimator(
            mp, MctsBudget(simulations=spec.mcts_simulations,
                           depth=spec.mcts_depth, seed=seed),
            leaf_value=vi.state_value)
    if spec.estimator != "vi":
        raise ValueError(f"unknown estimator {spec.estimator!r}")
    return vi


def build_robot(model: DecPomdpModel, union: StochasticFsc,
                solver_params: PbviParams,
                stages: dict[str, float]) -> RobotPolicy:
    t0 = time.perf_counter()
    compiled = compile_robot_pomdp(model, union)
    stages[STAGE_COMPILE] = stages.get(STAGE_COMPILE, 0.0) + time.perf_counter() - t0
    t0 = time.perf_counter()
    policy = solve_robot(compiled, solver_params)
    stages[STAGE_SOLVE] = stages.get(STAGE_SOLVE, 0.0) + time.perf_counter() - t0
    return policy


def run_campaign(model: DecPomdpModel, spec: CampaignSpec,
                 out_dir: str | Path | None = None) -> CampaignReport:
    objectives = range(model.n_objectives)
    stage_seconds: dict[str, dict[str, float]] = {}
    fsc_sizes: dict[str, list[int]] = {}
    robots: dict[str, RobotPolicy] = {}

    # Robust robots: one stochastic controller per objective, solved jointly.
    for nmax in spec.robot_nmax:
        name = f"robust-T{spec.temperature}-N{nmax}"
        stages: dict[str, float] = {}
        params = ExtractionParams(temperature=spec.temperature, max_nodes=nmax,
                                  belief_merge_eps=spec.belief_merge_eps,
                                  action_threshold=spec.action_threshold)
        fscs = []
        for obj in objectives:
            t0 = time.perf_counter()
            mp = to_mpomdp(model, obj)
            stages[STAGE_CONVERT] = stages.get(STAGE_CONVERT, 0.0) + time.perf_counter() - t0
            t0 = time.perf_counter()
            est = _build_estimator(spec, mp, spec.seed + obj)
            fscs.append(extract_stochastic_fsc(est, model, obj, params))
            stages[STAGE_EXTRACT] = stages.get(STAGE_EXTRACT, 0.0) + time.perf_counter() - t0
        union = union_fsc(fscs, [1.0] * len(fscs))
        robots[name] = build_robot(model, union, spec.solver, stages)
        stage_seconds[name] = {s: stages.get(s, 0.0) for s in STAGES}
        fsc_sizes[name] = [len(f) for f in fscs]

    # Synthetic humans: deterministic samples per objective plus pair unions.
    # Each human gets its own jittered value landscape so draws differ.
    det_params = ExtractionParams(temperature=spec.det_temperature,
                                  max_nodes=spec.det_nmax,
                                  belief_merge_eps=spec.det_eps,
                                  action_threshold=spec.action_threshold)
    det_base = {obj: ValueIterationEstimator(to_mpomdp(model, obj))
                for obj in objectives}
    pairs = []
    for i in range(spec.humans_per_objective):
        pair = tuple(
            sample_deterministic_fsc(
                JitteredEstimator(det_base[obj], scale=spec.jitter_scale,
                                  seed=spec.seed + 100 * (obj + 1) + i),
                model, obj, det_params, seed=spec.seed + i)
            for obj in objectives)
        pairs.append(pair)

    # Baseline: best response to one deterministic pair union.
    if spec.include_baseline:
        name = "best-response"
        stages = {STAGE_CONVERT: 0.0, STAGE_EXTRACT: 0.0}
        union = objective_union_sampler(pairs, 0)
        robots[name] = build_robot(model, union, spec.solver, stages)
        stage_seconds[name] = {s: stages.get(s, 0.0) for s in STAGES}
        fsc_sizes[name] = [len(f) for f in pairs[0]]

    families: dict[str, list[StochasticFsc]] = {}
    for obj in objectives:
        label = model.meta.get("objectives", [f"objective-{o}" for o in objectives])[obj]
        families[label] = [pair[obj] for pair in pairs]
    families["union"] = [objective_union_sampler(pairs, i)
                         for i in range(len(pairs))]

    cells: dict[str, dict[str, CellStats]] = {}
    overall: dict[str, CellStats] = {}
    traces_out = []
    for rname, robot in robots.items():
        cells[rname] = {}
        all_traces: list[EpisodeTrace] = []
        for fam, humans in families.items():
            fam_traces = []
            for hi, human in enumerate(humans):
                for ep in range(spec.episodes_per_human):
                    ep_seed = spec.seed + 10_000 * (1 + ep) + hi
                    trace = simulate_episode(model, human, robot, ep_seed,
                                             spec.horizon)
                    fam_traces.append(trace)
                    traces_out.append((rname, fam, hi, trace))
            cells[rname][fam] = _aggregate(fam_traces)
            all_traces.extend(fam_traces)
        overall[rname] = _aggregate(all_traces)

    report = CampaignReport(
        cells=cells, overall=overall, stage_seconds=stage_seconds,
        fsc_sizes=fsc_sizes,
        metadata={"temperature": spec.temperature,
                  "robot_nmax": list(spec.robot_nmax),
                  "humans_per_objective": spec.humans_per_objective,
                  "det_temperature": spec.det_temperature,
                  "det_nmax": spec.det_nmax,
                  "belief_merge_eps": spec.belief_merge_eps,
                  "det_eps": spec.det_eps,
                  "jitter_scale": spec.jitter_scale,
                  "episodes_per_human": spec.episodes_per_human,
                  "estimator": spec.estimator,
                  "seed": spec.seed})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.write_csv(out / "report.csv")
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
        with open(out / "traces.jsonl", "w") as fh:
            for rname, fam, hi, trace in traces_out:
                fh.write(json.dumps({"robot": rname, "family": fam,
                                     "human": hi, **trace.to_dict()}) + "\n")
    return report
