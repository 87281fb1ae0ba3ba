"""Scenario files, snapshot/metrics persistence, and run manifests.

Formats (all human-inspectable: JSON for structures, CSV for arrays):

Scenario JSON, snake_case keys, unknown keys rejected.  Top level:

    attitude        required; {"r_f","r_a","r_r","r_l"} (opinion-distance
                    units) or a preset name "blue"/"black"/"red"/"olive"
    agents          required; list of agent objects, or a template
                    {"count": M, "mass": 1.0} meaning M agents whose
                    means/variances/positions are sampled from the seed
    interaction_radius  number > 0 or "infinite" (default); network units
    diffusion_enabled   bool, default true
    phi             {"kind":"linear"} (default) or
                    {"kind":"power","exponent":m,"rho_max":c}
    network_dim     int >= 1, default 2
    run             {"n_particles","t_final","dt","snapshot_every",
                     "min_gap","stop_when_quiet"}; all optional
                    (defaults N=100, t_final=2.0, dt=1e-3,
                     snapshot_every=0.1, min_gap=1e-12, false)
    seed            int >= 0, default 0
    position_box    [lo, hi] per coordinate, default [0, 10]
    mass_jitter     float in [0,1), default 0
    invert_network_velocity  bool, default false

Agent object: {"mass": s > 0, "density": D, "position": [..] or null}
with D = {"kind":"truncated_gaussian","mean":m or null,"variance":v or
null} or {"kind":"tabulated","grid":[...],"values":[...]}; null means
"sample from the seed".

Run outputs per directory: particles_t<T>.csv (agent,k,x) and
nodes_t<T>.csv (agent,dim,value) per snapshot with T formatted to 9
significant digits, metrics.csv (one row per snapshot), manifest.json
(tool version, scenario digest, realized scenario, integrator counters,
wall clock).  The realized scenario in the manifest replays the run
exactly: floats are serialized with full round-trip precision.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .core import (AgentInit, AttitudeParams, ATTITUDE_PRESETS, PhiSpec,
                   RunParams, Scenario, TabulatedDensity, TruncatedGaussian,
                   validate)
from .dpa import ScenarioError, Trajectory
from .metrics import compute_metrics, mean_opinions


class ScenarioFormatError(ValueError):
    """Malformed scenario document (unknown/missing keys, bad types)."""


def _fmt_time(t: float) -> str:
    return f"{t:.9g}"


def _require_keys(doc: dict, allowed: set[str], required: set[str],
                  where: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ScenarioFormatError(
            f"{where}: unknown key(s) {sorted(unknown)}; allowed: {sorted(allowed)}")
    missing = required - set(doc)
    if missing:
        raise ScenarioFormatError(f"{where}: missing required key(s) {sorted(missing)}")


def _parse_attitude(doc, where: str) -> AttitudeParams:
    if isinstance(doc, str):
        if doc not in ATTITUDE_PRESETS:
            raise ScenarioFormatError(
                f"{where}: unknown preset {doc!r}; have {sorted(ATTITUDE_PRESETS)}")
        return ATTITUDE_PRESETS[doc]
    if not isinstance(doc, dict):
        raise ScenarioFormatError(f"{where}: expected object or preset name")
    keys = {"r_f", "r_a", "r_r", "r_l"}
    _require_keys(doc, keys, keys, where)
    return AttitudeParams(**{k: float(doc[k]) for k in keys})


def _parse_density(doc, where: str):
    if not isinstance(doc, dict):
        raise ScenarioFormatError(f"{where}: expected object")
    kind = doc.get("kind")
    if kind == "truncated_gaussian":
        _require_keys(doc, {"kind", "mean", "variance"}, {"kind"}, where)
        mean = doc.get("mean")
        var = doc.get("variance")
        return TruncatedGaussian(None if mean is None else float(mean),
                                 None if var is None else float(var))
    if kind == "tabulated":
        _require_keys(doc, {"kind", "grid", "values"}, {"kind", "grid", "values"},
                      where)
        return TabulatedDensity(tuple(float(v) for v in doc["grid"]),
                                tuple(float(v) for v in doc["values"]))
    raise ScenarioFormatError(f"{where}: unknown density kind {kind!r}")


def _parse_agent(doc, where: str) -> AgentInit:
    if not isinstance(doc, dict):
        raise ScenarioFormatError(f"{where}: expected object")
    _require_keys(doc, {"mass", "density", "position"}, set(), where)
    density = (_parse_density(doc["density"], where + ".density")
               if "density" in doc else TruncatedGaussian())
    pos = doc.get("position")
    return AgentInit(
        mass=float(doc.get("mass", 1.0)),
        density=density,
        position=None if pos is None else tuple(float(v) for v in pos),
    )


def _parse_agents(doc, where: str) -> tuple[AgentInit, ...]:
    if isinstance(doc, dict):
        _require_keys(doc, {"count", "mass"}, {"count"}, where)
        count = int(doc["count"])
        mass = float(doc.get("mass", 1.0))
        return tuple(AgentInit(mass=mass) for _ in range(count))
    if isinstance(doc, list):
        return tuple(_parse_agent(a, f"{where}[{i}]") for i, a in enumerate(doc))
    raise ScenarioFormatError(f"{where}: expected list or count template")


def _parse_radius(value, where: str) -> float:
    if isinstance(value, str):
        if value in ("infinite", "inf"):
            return math.inf
        raise ScenarioFormatError(f"{where}: bad radius string {value!r}")
    return float(value)


def _parse_phi(doc, where: str) -> PhiSpec:
    if not isinstance(doc, dict):
        raise ScenarioFormatError(f"{where}: expected object")
    kind = doc.get("kind", "linear")
    if kind == "linear":
        _require_keys(doc, {"kind"}, set(), where)
        return PhiSpec()
    if kind == "power":
        _require_keys(doc, {"kind", "exponent", "rho_max"}, set(), where)
        defaults = PhiSpec()
        return PhiSpec("power", float(doc.get("exponent", 2.0)),
                       float(doc.get("rho_max", defaults.rho_max)))
    raise ScenarioFormatError(f"{where}: unknown phi kind {kind!r}")


def _parse_run(doc, where: str) -> RunParams:
    if not isinstance(doc, dict):
        raise ScenarioFormatError(f"{where}: expected object")
    defaults = RunParams()
    allowed = {"n_particles", "t_final", "dt", "snapshot_every", "min_gap",
               "stop_when_quiet"}
    _require_keys(doc, allowed, set(), where)
    return RunParams(
        n_particles=int(doc.get("n_particles", defaults.n_particles)),
        t_final=float(doc.get("t_final", defaults.t_final)),
        dt=float(doc.get("dt", defaults.dt)),
        snapshot_every=float(doc.get("snapshot_every", defaults.snapshot_every)),
        min_gap=float(doc.get("min_gap", defaults.min_gap)),
        stop_when_quiet=bool(doc.get("stop_when_quiet", defaults.stop_when_quiet)),
    )


def parse_scenario(doc: dict) -> Scenario:
    """Build a Scenario from a parsed JSON document (no validation)."""
    if not isinstance(doc, dict):
        raise ScenarioFormatError("top level: expected object")
    allowed = {"attitude", "agents", "interaction_radius", "diffusion_enabled",
               "phi", "network_dim", "run", "seed", "position_box",
               "mass_jitter", "invert_network_velocity"}
    _require_keys(doc, allowed, {"attitude", "agents"}, "top level")
    box = doc.get("position_box", list(Scenario.__dataclass_fields__
                                       ["position_box"].default))
    if not (isinstance(box, (list, tuple)) and len(box) == 2):
        raise ScenarioFormatError("position_box: expected [lo, hi]")
    return Scenario(
        agents=_parse_agents(doc["agents"], "agents"),
        attitude=_parse_attitude(doc["attitude"], "attitude"),
        interaction_radius=_parse_radius(doc.get("interaction_radius", "infinite"),
                                         "interaction_radius"),
        diffusion_enabled=bool(doc.get("diffusion_enabled", True)),
        phi=_parse_phi(doc.get("phi", {"kind": "linear"}), "phi"),
        network_dim=int(doc.get("network_dim", 2)),
        run=_parse_run(doc.get("run", {}), "run"),
        seed=int(doc.get("seed", 0)),
        position_box=(float(box[0]), float(box[1])),
        mass_jitter=float(doc.get("mass_jitter", 0.0)),
        invert_network_velocity=bool(doc.get("invert_network_velocity", False)),
    )


def scenario_to_doc(scenario: Scenario) -> dict:
    """Inverse of parse_scenario; floats keep full precision."""
    agents = []
    for agent in scenario.agents:
        d = agent.density
        if isinstance(d, TruncatedGaussian):
            density = {"kind": "truncated_gaussian", "mean": d.mean,
                       "variance": d.variance}
        else:
            density = {"kind": "tabulated", "grid": list(d.grid),
                       "values": list(d.values)}
        agents.append({
            "mass": agent.mass,
            "density": density,
            "position": None if agent.position is None else list(agent.position),
        })
    rad = scenario.interaction_radius
    run = scenario.run
    return {
        "attitude": {"r_f": scenario.attitude.r_f, "r_a": scenario.attitude.r_a,
                     "r_r": scenario.attitude.r_r, "r_l": scenario.attitude.r_l},
        "agents": agents,
        "interaction_radius": "infinite" if math.isinf(rad) else rad,
        "diffusion_enabled": scenario.diffusion_enabled,
        "phi": ({"kind": "linear"} if scenario.phi.kind == "linear" else
                {"kind": "power", "exponent": scenario.phi.exponent,
                 "rho_max": scenario.phi.rho_max}),
        "network_dim": scenario.network_dim,
        "run": {"n_particles": run.n_particles, "t_final": run.t_final,
                "dt": run.dt, "snapshot_every": run.snapshot_every,
                "min_gap": run.min_gap, "stop_when_quiet": run.stop_when_quiet},
        "seed": scenario.seed,
        "position_box": list(scenario.position_box),
        "mass_jitter": scenario.mass_jitter,
        "invert_network_velocity": scenario.invert_network_velocity,
    }


def scenario_digest(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(blob.encode()).hexdigest()


def load_scenario(path) -> Scenario:
    """Read, parse and validate a scenario file.

    Raises ScenarioFormatError on malformed documents and ScenarioError
    (carrying the violation list) on invalid parameter values.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ScenarioFormatError(f"{path}: {e}") from e
    scenario = parse_scenario(doc)
    violations = validate(scenario)
    if violations:
        raise ScenarioError(violations)
    return scenario


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_doc(scenario), indent=2) + "\n")


@dataclass(frozen=True)
class RunManifest:
    """Reproducibility record of one run: digest + realized inputs + stats."""

    version: str
    scenario_digest: str
    seed: int
    scenario_doc: dict
    wall_clock_seconds: float
    integrator: dict
    times: tuple[float, ...]
    stopped_early: bool

    def to_doc(self) -> dict:
        return {
            "tool": "netopinion",
            "version": self.version,
            "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "scenario_digest": self.scenario_digest,
            "seed": self.seed,
            "scenario": self.scenario_doc,
            "wall_clock_seconds": self.wall_clock_seconds,
            "integrator": self.integrator,
            "times": list(self.times),
            "stopped_early": self.stopped_early,
        }


def build_manifest(traj: Trajectory, wall_clock_seconds: float = 0.0) -> RunManifest:
    doc = scenario_to_doc(traj.scenario)
    stats = traj.stats
    return RunManifest(
        version=__version__,
        scenario_digest=scenario_digest(doc),
        seed=traj.scenario.seed,
        scenario_doc=doc,
        wall_clock_seconds=wall_clock_seconds,
        integrator={"nominal_steps": stats.nominal_steps,
                    "substeps": stats.substeps,
                    "rejections": stats.rejections,
                    "max_subdivision": stats.max_subdivision},
        times=traj.times,
        stopped_early=traj.stopped_early,
    )


def load_manifest_scenario(path) -> Scenario:
    """Rebuild the realized scenario embedded in a manifest."""
    doc = json.loads(Path(path).read_text())
    return parse_scenario(doc["scenario"])


def write_snapshots(traj: Trajectory, out_dir, bins: int = 20,
                    wall_clock_seconds: float = 0.0) -> list[Path]:
    """Write per-snapshot particle/node CSVs, metrics.csv and manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for t, state in zip(traj.times, traj.states):
        tag = _fmt_time(t)
        p = out / f"particles_t{tag}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["agent", "k", "x"])
            for i in range(state.n_agents):
                for k in range(state.n_particles + 1):
                    w.writerow([i, k, repr(float(state.x[i, k]))])
        written.append(p)
        p = out / f"nodes_t{tag}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["agent", "dim", "value"])
            for i in range(state.n_agents):
                for dim in range(state.a.shape[1]):
                    w.writerow([i, dim, repr(float(state.a[i, dim]))])
        written.append(p)
    records = [compute_metrics(s, traj.scenario.interaction_radius,
                               traj.states[0], bins) for s in traj.states]
    m = traj.states[0].n_agents
    p = out / "metrics.csv"
    with p.open("w", newline="") as fh:
        w = csv.writer(fh)
        header = (["t", "n_clusters", "cluster_opinion_spread",
                   "polarization_index", "bimodality_gap"]
                  + [f"mean_{i}" for i in range(m)]
                  + [f"tv_{i}" for i in range(m)]
                  + [f"w1_init_{i}" for i in range(m)]
                  + [f"hist_{b}" for b in range(bins)])
        w.writerow(header)
        for rec in records:
            w.writerow([repr(float(rec.t)), rec.n_clusters,
                        repr(float(rec.cluster_opinion_spread)),
                        repr(float(rec.polarization_index)),
                        repr(float(rec.bimodality_gap))]
                       + [repr(float(v)) for v in rec.mean_opinions]
                       + [repr(float(v)) for v in rec.total_variation]
                       + [repr(float(v)) for v in rec.w1_to_initial]
                       + [int(c) for c in rec.histogram_counts])
    written.append(p)
    p = out / "manifest.json"
    p.write_text(json.dumps(build_manifest(traj, wall_clock_seconds).to_doc(),
                            indent=2) + "\n")
    written.append(p)
    return written


def write_plot_data(traj: Trajectory, out_dir, bins: int = 20) -> list[Path]:
    """Plot-ready CSVs for the initial and final snapshots.

    density curves (agent, x_left, x_right, rho), mean-opinion histograms
    (bin_left, bin_right, count; exactly `bins` rows), node scatter with a
    mean-opinion color column, and the radius-graph edge list.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    rho_loc = traj.scenario.interaction_radius
    for label, state in (("initial", traj.states[0]), ("final", traj.states[-1])):
        tag = f"{label}_t{_fmt_time(state.t)}"
        p = out / f"density_{tag}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["agent", "x_left", "x_right", "rho"])
            for i in range(state.n_agents):
                x = state.x[i]
                rho = state.sigma_n[i] / np.diff(x)
                for k in range(x.size - 1):
                    w.writerow([i, repr(float(x[k])), repr(float(x[k + 1])),
                                repr(float(rho[k]))])
        written.append(p)
        counts, edges = np.histogram(mean_opinions(state), bins=bins,
                                     range=(-1.0, 1.0))
        p = out / f"hist_{label}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_left", "bin_right", "count"])
            for b in range(bins):
                w.writerow([repr(float(edges[b])), repr(float(edges[b + 1])),
                            int(counts[b])])
        written.append(p)
        means = mean_opinions(state)
        p = out / f"nodes_scatter_{tag}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            dim = state.a.shape[1]
            w.writerow(["agent"] + [f"a{d}" for d in range(dim)] + ["mean_opinion"])
            for i in range(state.n_agents):
                w.writerow([i] + [repr(float(state.a[i, d])) for d in range(dim)]
                           + [repr(float(means[i]))])
        written.append(p)
        p = out / f"edges_{tag}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j"])
            for i in range(state.n_agents):
                d = np.linalg.norm(state.a[i + 1:] - state.a[i], axis=1)
                for off in np.nonzero(d <= rho_loc)[0]:
                    w.writerow([i, i + 1 + int(off)])
        written.append(p)
    return written
