"""Command-line entry points: single-instance solves and batch experiments."""
from __future__ import annotations

import json
import sys

import click
import numpy as np

from . import harness
from .baselines import OracleBudget, exhaustive_optimum, reuse_one, serving_link_only_bf
from .core import compute_interference, total_utility
from .errors import BpcoordError
from .exact_bp import BPConfig, run_exact_bp
from .femto import FemtoInstance, build_instance, draw_subband_fading, drop_to_dict, \
    generate_drop, params_for_mode
from .first_order_bp import overhead_rows, run_first_order_bp
from .gauss_bp import run_gaussian_bp
from .instance_io import load_instance
from .utility import UtilitySpec


def _fail(exc: Exception) -> None:
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(2)


def _parse_utility(token: str) -> UtilitySpec:
    if token in ("pf", "proportional-fair"):
        return UtilitySpec(kind="proportional-fair")
    if token in ("sumrate", "sum-rate"):
        return UtilitySpec(kind="sum-rate")
    if token.startswith("beta:"):
        return UtilitySpec(kind="beta-fair", beta=float(token.split(":", 1)[1]))
    raise BpcoordError(f"unknown utility {token!r}; use pf|sumrate|beta:<value>")


@click.group()
def main():
    """Belief-propagation interference coordination toolkit."""


@main.command()
@click.option("--instance", "instance_path", type=click.Path(exists=True),
              help="Problem instance JSON.")
@click.option("--scenario", type=click.Choice(["femto-grid"]),
              help="Generate the instance from a scenario instead of a file.")
@click.option("--mode", type=click.Choice(["onoff", "subband", "beamforming"]),
              default="onoff", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--drop-index", type=int, default=0, show_default=True)
@click.option("--wall-loss-db", type=float, default=None)
@click.option("--utility", default="pf", show_default=True)
@click.option("--algorithm", default="gauss-bp", show_default=True,
              help="reuse1|exhaustive|serving-only|exact-bp|gauss-bp|fo-bp")
@click.option("--rounds", type=int, default=None)
@click.option("--u", "sharpness", type=float, default=50.0, show_default=True)
@click.option("--damping", type=float, default=0.0, show_default=True)
@click.option("--quad-order", type=int, default=9, show_default=True)
@click.option("--strong-thresh-db", type=float, default=0.0, show_default=True)
@click.option("--broadcast-hessian", is_flag=True, default=False)
@click.option("--trace", "trace_path", type=click.Path(), default=None,
              help="Dump per-round solver state as JSON.")
@click.option("--overhead-report", "overhead_path", type=click.Path(), default=None,
              help="Write per-round per-node message bytes as CSV (fo-bp).")
def solve(instance_path, scenario, mode, seed, drop_index, wall_loss_db, utility,
          algorithm, rounds, sharpness, damping, quad_order, strong_thresh_db,
          broadcast_hessian, trace_path, overhead_path):
    """Solve a single instance and print the decision as JSON."""
    try:
        if instance_path is None and scenario is None:
            raise BpcoordError("provide --instance or --scenario")
        spec = _parse_utility(utility)
        if instance_path is not None:
            system = load_instance(instance_path)
            instance = None
        else:
            params = params_for_mode(mode, wall_loss_db)
            drop = generate_drop(seed, drop_index, params)
            fading = (draw_subband_fading(seed, drop_index, drop.n,
                                          params.subband_count)
                      if mode == "subband" else None)
            instance = build_instance(drop, mode, params, fading=fading,
                                      utility_spec=spec)
            system = instance.system

        kind, token_rounds = harness.parse_algorithm(algorithm)
        rounds = rounds or token_rounds or {"gauss-bp": 4, "fo-bp": 2}.get(kind, 4)
        config = BPConfig(sharpness=sharpness, rounds=rounds, damping=damping,
                          quad_order=quad_order, broadcast_hessian=broadcast_hessian)
        trace = trace_path is not None
        extras = {}
        if kind == "reuse1":
            if instance is None:
                raise BpcoordError("reuse1 needs a scenario instance")
            profile = reuse_one(instance)
        elif kind == "serving-only":
            if instance is None:
                raise BpcoordError("serving-only needs a scenario instance")
            profile = serving_link_only_bf(instance)
        elif kind == "exhaustive":
            profile = exhaustive_optimum(system, OracleBudget())
        elif kind == "exact-bp":
            res = run_exact_bp(system, config, trace=trace)
            profile, extras = res.profile, {"history": res.history, "stats": res.stats}
        elif kind == "gauss-bp":
            res = run_gaussian_bp(system, config, trace=trace)
            profile, extras = res.profile, {"history": res.history, "stats": res.stats}
        else:
            res = run_first_order_bp(system, config, threshold_db=strong_thresh_db)
            profile, extras = res.profile, {"stats": res.stats}
            if overhead_path is not None:
                harness.write_csv(overhead_path, harness.OVERHEAD_COLUMNS,
                                  overhead_rows(res.bundles))
        report = {
            "algorithm": algorithm,
            "profile": list(profile.indices),
            "objective": total_utility(system, profile),
            "interference": [compute_interference(system, profile, i).tolist()
                             for i in range(system.n)],
        }
        if trace_path is not None:
            with open(trace_path, "w") as fh:
                json.dump({"history": extras.get("history", []),
                           "stats": _jsonable(extras.get("stats", {}))}, fh, indent=1)
        click.echo(json.dumps(report))
    except Exception as exc:  # single-line machine-parsable failure
        _fail(exc)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    return obj


@main.command()
@click.option("--mode", type=click.Choice(["onoff", "subband", "beamforming"]),
              required=True)
@click.option("--algorithms", default="reuse1,fo-bp-2,gauss-bp-4,exhaustive",
              show_default=True, help="Comma-separated algorithm tokens.")
@click.option("--drops", type=int, default=100, show_default=True)
@click.option("--slots", type=int, default=100, show_default=True)
@click.option("--rounds", type=int, default=None,
              help="Override the per-algorithm round counts.")
@click.option("--u", "sharpness", type=float, default=None,
              help="Gibbs sharpness (default: per-mode).")
@click.option("--damping", type=float, default=None,
              help="Message damping (default: per-mode).")
@click.option("--strong-thresh-db", type=float, default=0.0, show_default=True)
@click.option("--alpha", type=float, default=0.1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--utility", default="pf", show_default=True)
@click.option("--quad-order", type=int, default=None)
@click.option("--wall-loss-db", type=float, default=None)
@click.option("--out", "out_path", type=click.Path(), default="results.csv",
              show_default=True)
@click.option("--cdf-out", "cdf_path", type=click.Path(), default=None)
@click.option("--overhead-report", "overhead_path", type=click.Path(), default=None)
def simulate(mode, algorithms, drops, slots, rounds, sharpness, damping,
             strong_thresh_db, alpha, seed, utility, quad_order, wall_loss_db,
             out_path, cdf_path, overhead_path):
    """Run one experiment over seeded drops and write CSV outputs."""
    try:
        spec = _parse_utility(utility)
        config = harness.ExperimentConfig(
            mode=mode,
            algorithms=tuple(tok.strip() for tok in algorithms.split(",") if tok.strip()),
            drops=drops, slots=slots, sharpness=sharpness, damping=damping,
            strong_threshold_db=strong_thresh_db, alpha=alpha, seed=seed,
            utility=spec.kind, quad_order=quad_order, wall_loss_db=wall_loss_db,
            rounds_override=rounds,
        )
        result = harness.run_experiment(config)
        harness.write_results(result, out_path)
        if cdf_path is not None:
            harness.write_cdfs(result, cdf_path)
        if overhead_path is not None:
            harness.write_overhead(result, overhead_path)
    except Exception as exc:
        _fail(exc)


@main.command("dump-drop")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--drop-index", type=int, default=0, show_default=True)
@click.option("--mode", type=click.Choice(["onoff", "subband", "beamforming"]),
              default="onoff", show_default=True)
@click.option("--wall-loss-db", type=float, default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
def dump_drop(seed, drop_index, mode, wall_loss_db, out_path):
    """Write one femtocell drop (geometry, walls, shadowing) as JSON."""
    try:
        params = params_for_mode(mode, wall_loss_db)
        doc = drop_to_dict(generate_drop(seed, drop_index, params))
        text = json.dumps(doc, indent=1)
        if out_path is None:
            click.echo(text)
        else:
            with open(out_path, "w") as fh:
                fh.write(text)
    except Exception as exc:
        _fail(exc)
