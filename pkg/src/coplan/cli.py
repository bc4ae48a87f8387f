"""Command line front end.

Every artifact the pipeline produces (model, FSC, compiled robot POMDP,
policy bundle, campaign report) is a JSON file, so stages can be run and
inspected independently.
"""
from __future__ import annotations

import json
import os
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

import click
import numpy as np

from .fsc.controller import union_fsc
from .fsc.extract import (ExtractionParams, extract_stochastic_fsc,
                          sample_deterministic_fsc)
from .fsc.io import load_fsc, save_fsc
from .errors import DegenerateTask, SchemaError
from .grid import GridTaskConfig, build_grid_task
from .harness import CampaignSpec, run_campaign
from .io import (load_robot_policy, pomdp_from_dict, pomdp_to_dict,
                 save_robot_policy)
from .model import DecPomdpModel, ModelValidationError, to_mpomdp
from .model_io import load_model as load_dec_model
from .model_io import save_model as save_dec_model
from .robot import compile_robot_pomdp, solve_robot
from .solver import (MctsBudget, MctsEstimator, PbviParams, mcts_estimate,
                     pbvi_solve, ValueIterationEstimator)

COMPILED_KIND = "robot-pomdp"


def _load_model(path: str | None) -> DecPomdpModel:
    if path is None:
        return build_grid_task()
    return load_dec_model(path)


def _fail(message: str) -> None:
    raise click.ClickException(message)


@click.group()
def main():
    """Human-robot collaboration planning toolkit."""


@main.group()
def model():
    """Build and validate task models."""


@model.command("build-grid")
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="JSON file with GridTaskConfig overrides.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the model file here (default: stdout summary only).")
def model_build_grid(config_path, out_path):
    """Build the grid repair task."""
    overrides = {}
    if config_path:
        overrides = json.loads(Path(config_path).read_text())
        overrides = {k: tuple(tuple(c) for c in v) if isinstance(v, list) and v
                     and isinstance(v[0], list) else
                     (tuple(v) if isinstance(v, list) else v)
                     for k, v in overrides.items()}
    try:
        cfg = GridTaskConfig(**overrides)
        m = build_grid_task(cfg)
    except (TypeError, DegenerateTask, ModelValidationError) as exc:
        _fail(f"cannot build grid task: {exc}")
    click.echo(f"states={m.n_states} joint_actions={m.n_joint_actions} "
               f"human_obs={m.n_human_observations} "
               f"robot_obs={m.n_robot_observations} "
               f"objectives={m.n_objectives}")
    if out_path:
        save_dec_model(m, out_path)
        click.echo(f"wrote {out_path}")


@model.command("validate")
@click.argument("path", type=click.Path(exists=True))
def model_validate(path):
    """Load a model file and run every structural check."""
    try:
        m = load_dec_model(path)
    except (SchemaError, ModelValidationError) as exc:
        _fail(str(exc))
    click.echo(f"ok: {m.n_states} states, {m.n_joint_actions} joint actions, "
               f"{m.n_objectives} objectives, gamma={m.gamma}")


@main.command("solve")
@click.option("--model", "model_path", type=click.Path(exists=True),
              required=True)
@click.option("--objective", type=int, default=0, show_default=True)
@click.option("--method", type=click.Choice(["pbvi", "mcts"]),
              default="pbvi", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--points", type=int, default=256, show_default=True,
              help="PBVI belief points.")
@click.option("--iterations", type=int, default=60, show_default=True)
@click.option("--sims", type=int, default=10_000, show_default=True,
              help="MCTS simulations (method=mcts).")
@click.option("--depth", type=int, default=30, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def solve(model_path, objective, method, seed, points, iterations, sims,
          depth, out_path):
    """Solve the joint relaxation of a model for one objective."""
    m = _load_model(model_path)
    if not (0 <= objective < m.n_objectives):
        _fail(f"objective {objective} out of range")
    mp = to_mpomdp(m, objective)
    if method == "pbvi":
        policy = pbvi_solve(mp, PbviParams(belief_points=points,
                                           iterations=iterations, seed=seed))
        payload = {"method": "pbvi",
                   "vectors": policy.vectors.tolist(),
                   "actions": policy.actions.tolist(),
                   "gamma": policy.gamma,
                   "metadata": policy.metadata}
        click.echo(f"pbvi: v(b0)={policy.metadata['v_b0']:.4f} "
                   f"residual={policy.metadata['residual']:.2e} "
                   f"vectors={policy.metadata['n_vectors']}")
    else:
        est = mcts_estimate(mp, mp.b0,
                            MctsBudget(simulations=sims, depth=depth,
                                       seed=seed))
        payload = {"method": "mcts", "vectors": [],
                   "metadata": {"method": "mcts", "seed": seed,
                                "simulations": sims, "depth": depth,
                                "root_q": est.q.tolist(),
                                "root_counts": est.counts.tolist(),
                                "greedy_action": est.best_action()}}
        click.echo(f"mcts: greedy root action {est.best_action()} "
                   f"v(b0)={est.q.max():.4f}")
    Path(out_path).write_text(json.dumps(payload))
    click.echo(f"wrote {out_path}")


@main.group()
def fsc():
    """Extract and combine human controllers."""


def _extraction_params(t, nmax, eps, threshold) -> ExtractionParams:
    return ExtractionParams(temperature=t, max_nodes=nmax,
                            belief_merge_eps=eps, action_threshold=threshold)


def _estimator(kind, mp, sims, depth, seed):
    vi = ValueIterationEstimator(mp)
    if kind == "mcts":
        return MctsEstimator(mp, MctsBudget(simulations=sims, depth=depth,
                                            seed=seed),
                             leaf_value=vi.state_value)
    return vi


_fsc_common = [
    click.option("--model", "model_path", type=click.Path(exists=True),
                 default=None, help="Model file (default: built-in grid)."),
    click.option("--objective", type=int, default=0, show_default=True),
    click.option("--T", "temperature", type=float, default=0.3,
                 show_default=True),
    click.option("--nmax", type=int, default=600, show_default=True),
    click.option("--eps", type=float, default=1e-3, show_default=True),
    click.option("--threshold", type=float, default=0.1, show_default=True),
    click.option("--seed", type=int, default=0, show_default=True),
    click.option("--estimator", "estimator_kind",
                 type=click.Choice(["vi", "mcts"]), default="vi",
                 show_default=True),
    click.option("--sims", type=int, default=10_000, show_default=True),
    click.option("--depth", type=int, default=30, show_default=True),
    click.option("--out", "out_path", type=click.Path(), required=True),
]


def _with_options(options):
    def wrap(f):
        for opt in reversed(options):
            f = opt(f)
        return f
    return wrap


@fsc.command("extract")
@_with_options(_fsc_common)
def fsc_extract(model_path, objective, temperature, nmax, eps, threshold,
                seed, estimator_kind, sims, depth, out_path):
    """Extract a stochastic controller for one objective."""
    m = _load_model(model_path)
    if not (0 <= objective < m.n_objectives):
        _fail(f"objective {objective} out of range")
    mp = to_mpomdp(m, objective)
    est = _estimator(estimator_kind, mp, sims, depth, seed)
    ctrl = extract_stochastic_fsc(est, m, objective,
                                  _extraction_params(temperature, nmax, eps,
                                                     threshold))
    save_fsc(ctrl, out_path)
    click.echo(f"extracted {len(ctrl)} nodes (depth {ctrl.depth()}) "
               f"-> {out_path}")


@fsc.command("sample-det")
@_with_options(_fsc_common)
def fsc_sample_det(model_path, objective, temperature, nmax, eps, threshold,
                   seed, estimator_kind, sims, depth, out_path):
    """Sample a deterministic controller for one objective."""
    m = _load_model(model_path)
    if not (0 <= objective < m.n_objectives):
        _fail(f"objective {objective} out of range")
    mp = to_mpomdp(m, objective)
    est = _estimator(estimator_kind, mp, sims, depth, seed)
    ctrl = sample_deterministic_fsc(est, m, objective,
                                    _extraction_params(temperature, nmax, eps,
                                                       threshold), seed=seed)
    save_fsc(ctrl, out_path)
    click.echo(f"sampled {len(ctrl)} nodes (depth {ctrl.depth()}) "
               f"-> {out_path}")


@fsc.command("union")
@click.argument("paths", nargs=-1, required=True,
                type=click.Path(exists=True))
@click.option("--p", "weights", type=float, multiple=True,
              help="Mixture weight per controller (default: uniform).")
@click.option("--out", "out_path", type=click.Path(), required=True)
def fsc_union(paths, weights, out_path):
    """Concatenate controllers into one mixture controller."""
    controllers = [load_fsc(p) for p in paths]
    if weights and len(weights) != len(controllers):
        _fail(f"{len(weights)} weights for {len(controllers)} controllers")
    w = list(weights) if weights else [1.0] * len(controllers)
    merged = union_fsc(controllers, w)
    save_fsc(merged, out_path)
    click.echo(f"union of {len(controllers)} controllers: {len(merged)} "
               f"nodes -> {out_path}")


@fsc.command("stats")
@click.argument("path", type=click.Path(exists=True))
def fsc_stats(path):
    """Report size and depth of a stored controller."""
    ctrl = load_fsc(path)
    by_obj: dict[int, int] = {}
    for node in ctrl.nodes:
        by_obj[node.objective] = by_obj.get(node.objective, 0) + 1
    click.echo(f"nodes={len(ctrl)} depth={ctrl.depth()} "
               f"initial={len(ctrl.initial)} "
               f"per_objective={json.dumps(by_obj, sort_keys=True)}")


@main.command("compile")
@click.option("--model", "model_path", type=click.Path(exists=True),
              default=None)
@click.option("--union", "union_path", type=click.Path(exists=True),
              required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def compile_cmd(model_path, union_path, out_path):
    """Compile a robot POMDP over extended states from a controller."""
    m = _load_model(model_path)
    ctrl = load_fsc(union_path)
    compiled = compile_robot_pomdp(m, ctrl)
    payload = {"kind": COMPILED_KIND, "schema_version": 1,
               "pomdp": pomdp_to_dict(compiled)}
    Path(out_path).write_text(json.dumps(payload, separators=(",", ":")))
    click.echo(f"compiled {compiled.n_states} extended states -> {out_path}")


@main.group()
def robot():
    """Solve and inspect robot policies."""


@robot.command("solve")
@click.option("--pomdp", "pomdp_path", type=click.Path(exists=True),
              required=True, help="Compiled robot POMDP from `coplan compile`.")
@click.option("--points", type=int, default=256, show_default=True)
@click.option("--iterations", type=int, default=60, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def robot_solve(pomdp_path, points, iterations, seed, out_path):
    """Solve a compiled robot POMDP and store the policy bundle."""
    payload = json.loads(Path(pomdp_path).read_text())
    if payload.get("kind") != COMPILED_KIND:
        _fail(f"{pomdp_path} is not a compiled robot POMDP")
    compiled = pomdp_from_dict(payload["pomdp"])
    policy = solve_robot(compiled, PbviParams(belief_points=points,
                                              iterations=iterations,
                                              seed=seed))
    save_robot_policy(policy, out_path)
    md = policy.policy.metadata
    click.echo(f"solved: v(b0)={md['v_b0']:.4f} vectors={md['n_vectors']} "
               f"-> {out_path}")


@main.command("bench")
@click.option("--spec", "spec_path", type=click.Path(exists=True),
              required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def bench(spec_path, out_dir):
    """Run a synthetic-human evaluation campaign."""
    raw = json.loads(Path(spec_path).read_text())
    model_path = raw.pop("model", None)
    grid_overrides = raw.pop("grid", None)
    if model_path:
        m = load_dec_model(model_path)
    elif grid_overrides:
        m = build_grid_task(GridTaskConfig(**grid_overrides))
    else:
        m = build_grid_task()
    solver_raw = raw.pop("solver", {})
    known = {f.name for f in dataclass_fields(CampaignSpec)}
    unknown = set(raw) - known
    if unknown:
        _fail(f"unknown campaign keys: {', '.join(sorted(unknown))}")
    if "robot_nmax" in raw:
        raw["robot_nmax"] = tuple(raw["robot_nmax"])
    spec = CampaignSpec(solver=PbviParams(**solver_raw), **raw)
    report = run_campaign(m, spec, out_dir=out_dir)
    for rname in sorted(report.overall):
        cell = report.overall[rname]
        click.echo(f"{rname}: mean={cell.mean_value:.2f} "
                   f"success={cell.success_rate:.2%} ({cell.episodes} eps)")
    click.echo(f"report in {out_dir}/")


@main.command("serve")
@click.option("--policies", "policy_dir", type=click.Path(exists=True),
              required=True, help="Directory of robot policy bundles.")
@click.option("--model", "model_path", type=click.Path(exists=True),
              default=None)
@click.option("--port", type=int, default=None,
              help="Default: COPLAN_PORT or 8000.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--rounds", type=int, default=8, show_default=True)
def serve(policy_dir, model_path, port, host, rounds):
    """Serve live collaboration game sessions over WebSocket."""
    import uvicorn

    from .service import SessionService, create_app

    m = _load_model(model_path)
    policies = {}
    for path in sorted(Path(policy_dir).glob("*.json")):
        try:
            policies[path.stem] = load_robot_policy(path)
        except SchemaError as exc:
            click.echo(f"skipping {path.name}: {exc}", err=True)
    if not policies:
        _fail(f"no loadable policy bundles in {policy_dir}")
    if port is None:
        port = int(os.environ.get("COPLAN_PORT", "8000"))
    app = create_app(SessionService(m, policies, rounds=rounds))
    click.echo(f"serving {len(policies)} policies on {host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main(prog_name="coplan")
