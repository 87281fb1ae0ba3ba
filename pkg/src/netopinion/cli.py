"""Command-line driver: run / sweep / converge / validate.

Exit codes: 0 success, 1 runtime failure (step collapse, I/O), 2 invalid
input (bad file, schema violation, bad flags).  Sweeps parallelize across
runs (never inside a run) with one output directory per run and a summary
CSV in deterministic grid order.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import itertools
import json
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import io as nio
from .core import RunParams, Scenario, sample_initial_conditions, validate
from .dpa import ScenarioError, StepCollapseError, simulate
from .io import ScenarioFormatError
from .metrics import (bimodality_gap, cluster_opinion_spread, mean_opinions,
                      network_clusters, polarization_index)
from .transport import (empirical_gap_bound, empirical_wasserstein_gap,
                        reconstruct, wasserstein1)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INVALID = 2


def _resolve_scenario(arg: str) -> Path:
    """Filesystem path, or a file shipped in the package data directory."""
    p = Path(arg)
    if p.exists():
        return p
    builtin = resources.files("netopinion").joinpath("data", p.name)
    if builtin.is_file():
        return Path(str(builtin))
    raise FileNotFoundError(f"scenario file not found: {arg}")


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    run_updates = {}
    if args.particles is not None:
        run_updates["n_particles"] = args.particles
    if args.dt is not None:
        run_updates["dt"] = args.dt
    if run_updates:
        scenario = dataclasses.replace(
            scenario, run=dataclasses.replace(scenario.run, **run_updates))
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, seed=args.seed)
    if args.radius is not None:
        scenario = dataclasses.replace(scenario, interaction_radius=args.radius)
    if args.no_diffusion:
        scenario = dataclasses.replace(scenario, diffusion_enabled=False)
    return scenario


def _final_metrics(traj) -> dict:
    state = traj.final
    labels = network_clusters(state, traj.scenario.interaction_radius)
    return {
        "t_final": state.t,
        "n_clusters": int(labels.max()) + 1,
        "polarization_index": polarization_index(state),
        "bimodality_gap": bimodality_gap(mean_opinions(state)),
        "cluster_opinion_spread": cluster_opinion_spread(state, labels),
    }


def cmd_run(args) -> int:
    try:
        scenario = nio.load_scenario(_resolve_scenario(args.scenario))
        scenario = _apply_overrides(scenario, args)
        violations = validate(scenario)
        if violations:
            raise ScenarioError(violations)
    except (FileNotFoundError, ScenarioFormatError, ScenarioError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    t0 = time.perf_counter()
    try:
        traj = simulate(scenario)
    except StepCollapseError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    wall = time.perf_counter() - t0
    try:
        nio.write_snapshots(traj, args.out, wall_clock_seconds=wall)
        nio.write_plot_data(traj, args.out)
    except OSError as e:
        print(f"error writing {args.out}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"run finished: t={traj.times[-1]:.9g}, {len(traj.times)} snapshots, "
          f"{traj.stats.substeps} substeps "
          f"({traj.stats.rejections} rejections), {wall:.1f}s -> {args.out}")
    return EXIT_OK


def _set_by_path(doc: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = doc
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value


def _sweep_worker(payload: dict) -> dict:
    """Run one sweep cell; returns the summary row (never raises)."""
    try:
        scenario = nio.parse_scenario(payload["doc"])
        violations = validate(scenario)
        if violations:
            raise ScenarioError(violations)
        t0 = time.perf_counter()
        traj = simulate(scenario)
        wall = time.perf_counter() - t0
        out = payload["out"]
        nio.write_snapshots(traj, out, wall_clock_seconds=wall)
        nio.write_plot_data(traj, out)
        row = {"status": "ok", "error": ""}
        row.update(_final_metrics(traj))
        return row
    except Exception as e:  # noqa: BLE001 - failures land in the summary
        return {"status": "error", "error": f"{type(e).__name__}: {e}",
                "t_final": "", "n_clusters": "", "polarization_index": "",
                "bimodality_gap": "", "cluster_opinion_spread": ""}


def _dedupe(values: list) -> list:
    seen = set()
    out = []
    for v in values:
        key = json.dumps(v, sort_keys=True)
        if key not in seen:
            seen.add(key)
            out.append(v)
    return out


def cmd_sweep(args) -> int:
    try:
        spec = json.loads(Path(args.sweep).read_text())
        allowed = {"base", "scenario", "axes", "seeds"}
        unknown = set(spec) - allowed
        if unknown:
            raise ScenarioFormatError(f"sweep: unknown key(s) {sorted(unknown)}")
        if ("base" in spec) == ("scenario" in spec):
            raise ScenarioFormatError("sweep: need exactly one of base/scenario")
        if "base" in spec:
            cand = Path(args.sweep).parent / spec["base"]
            base_path = cand if cand.exists() else _resolve_scenario(spec["base"])
            base_doc = json.loads(base_path.read_text())
        else:
            base_doc = spec["scenario"]
        nio.parse_scenario(base_doc)  # schema check before fanning out
        axes = spec.get("axes", [])
        axis_paths = []
        axis_values = []
        for ax in axes:
            unknown = set(ax) - {"path", "values"}
            if unknown or "path" not in ax or "values" not in ax:
                raise ScenarioFormatError(f"sweep axis: expected path/values, got {ax}")
            axis_paths.append(ax["path"])
            axis_values.append(_dedupe(list(ax["values"])))
        seeds = _dedupe([int(s) for s in spec.get("seeds", [base_doc.get("seed", 0)])])
    except (FileNotFoundError, json.JSONDecodeError, ScenarioFormatError,
            ScenarioError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    grid = list(itertools.product(*axis_values, seeds))
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    payloads = []
    for idx, cell in enumerate(grid):
        doc = json.loads(json.dumps(base_doc))
        for path, value in zip(axis_paths, cell[:-1]):
            _set_by_path(doc, path, value)
        doc["seed"] = cell[-1]
        payloads.append({"doc": doc, "out": str(out_root / f"run_{idx:04d}")})
    width = args.parallel or min(len(payloads), os.cpu_count() or 1)
    width = max(1, min(width, len(payloads)))
    if width > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=width) as pool:
            rows = list(pool.map(_sweep_worker, payloads))
    else:
        rows = [_sweep_worker(p) for p in payloads]
    summary = out_root / "summary.csv"
    with summary.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run"] + axis_paths + ["seed", "status", "error", "t_final",
                    "n_clusters", "polarization_index", "bimodality_gap",
                    "cluster_opinion_spread", "out_dir"])
        for idx, (cell, row) in enumerate(zip(grid, rows)):
            w.writerow([f"run_{idx:04d}"]
                       + [json.dumps(v) if isinstance(v, (dict, list)) else v
                          for v in cell[:-1]]
                       + [cell[-1], row["status"], row["error"], row["t_final"],
                          row["n_clusters"], row["polarization_index"],
                          row["bimodality_gap"], row["cluster_opinion_spread"],
                          payloads[idx]["out"]])
    failures = sum(1 for r in rows if r["status"] != "ok")
    print(f"sweep: {len(rows)} runs, {failures} failed -> {summary}")
    return EXIT_OK if failures == 0 else EXIT_RUNTIME


def cmd_converge(args) -> int:
    try:
        n_list = [int(v) for v in args.particles.split(",")]
        if len(n_list) < 2 or any(b <= a for a, b in zip(n_list, n_list[1:])):
            raise ValueError("--particles must be an ascending list of >= 2 values")
        scenario = nio.load_scenario(_resolve_scenario(args.scenario))
        if args.seed is not None:
            scenario = dataclasses.replace(scenario, seed=args.seed)
    except (FileNotFoundError, ScenarioFormatError, ScenarioError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    # One set of realized initial densities/positions shared by every N,
    # so discrepancies measure discretization only.  Quiescence stopping
    # is disabled: final states must sit at the same time.
    realized = sample_initial_conditions(scenario, scenario.seed)
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    finals = {}
    try:
        for n in n_list:
            run = dataclasses.replace(realized.run, n_particles=n,
                                      stop_when_quiet=False)
            traj = simulate(dataclasses.replace(realized, run=run))
            finals[n] = traj.final
            nio.write_snapshots(traj, out_root / f"n_{n}")
    except StepCollapseError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    m = realized.n_agents
    with (out_root / "convergence.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_coarse", "n_fine", "agent", "w1_final", "node_dist"])
        for n_c, n_f in zip(n_list[:-1], n_list[1:]):
            sc, sf = finals[n_c], finals[n_f]
            for i in range(m):
                w1 = wasserstein1(reconstruct(sc.x[i], sc.sigma_n[i]),
                                  reconstruct(sf.x[i], sf.sigma_n[i]))
                node = float(np.linalg.norm(sc.a[i] - sf.a[i]))
                w.writerow([n_c, n_f, i, repr(w1), repr(node)])
    with (out_root / "empirical_gap.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "agent", "gap", "bound"])
        for n in n_list:
            s = finals[n]
            for i in range(m):
                gap = empirical_wasserstein_gap(s.x[i], s.sigma_n[i])
                w.writerow([n, i, repr(gap), repr(empirical_gap_bound(s.sigma_n[i]))])
    for n_c, n_f in zip(n_list[:-1], n_list[1:]):
        sc, sf = finals[n_c], finals[n_f]
        w1s = [wasserstein1(reconstruct(sc.x[i], sc.sigma_n[i]),
                            reconstruct(sf.x[i], sf.sigma_n[i])) for i in range(m)]
        nodes = [float(np.linalg.norm(sc.a[i] - sf.a[i])) for i in range(m)]
        print(f"N {n_c:>5} vs {n_f:>5}: W1 mean {np.mean(w1s):.3e} "
              f"max {np.max(w1s):.3e}; node max {np.max(nodes):.3e}")
    print(f"convergence tables -> {out_root}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        doc = json.loads(_resolve_scenario(args.scenario).read_text())
        scenario = nio.parse_scenario(doc)
    except (FileNotFoundError, json.JSONDecodeError, ScenarioFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    violations = validate(scenario)
    if violations:
        for v in violations:
            print(f"violation: {v.code} at {v.where}: {v.detail}")
        return EXIT_INVALID
    print("scenario valid")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="netopinion",
        description="Particle simulation of opinion densities on an "
                    "evolving interaction network")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one scenario and write outputs")
    p_run.add_argument("scenario", help="scenario JSON (path or built-in name)")
    p_run.add_argument("out", nargs="?", default="out", help="output directory")
    p_run.add_argument("--out", dest="out_flag", default=None,
                       help="output directory (alternative to positional)")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--radius", type=float, default=None,
                       help="override interaction radius")
    p_run.add_argument("--no-diffusion", action="store_true",
                       help="disable the diffusion term")
    p_run.add_argument("--particles", type=int, default=None,
                       help="override particles per agent (N)")
    p_run.add_argument("--dt", type=float, default=None)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a parameter grid")
    p_sweep.add_argument("sweep", help="sweep spec JSON")
    p_sweep.add_argument("out", nargs="?", default="sweep_out")
    p_sweep.add_argument("--out", dest="out_flag", default=None)
    p_sweep.add_argument("--parallel", type=int, default=None,
                         help="worker processes (default: one per run, "
                              "capped at CPU count)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_conv = sub.add_parser("converge",
                            help="rerun one scenario at increasing N from "
                                 "identical initial densities")
    p_conv.add_argument("scenario")
    p_conv.add_argument("out", nargs="?", default="converge_out")
    p_conv.add_argument("--out", dest="out_flag", default=None)
    p_conv.add_argument("--particles", default="50,100,200",
                        help="comma-separated ascending N values")
    p_conv.add_argument("--seed", type=int, default=None)
    p_conv.set_defaults(func=cmd_converge)

    p_val = sub.add_parser("validate", help="check a scenario file")
    p_val.add_argument("scenario")
    p_val.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    if getattr(args, "out_flag", None):
        args.out = args.out_flag
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
