"""Tests for scenario files, snapshot persistence, and run manifests."""

import csv
import json
import math
from importlib import resources

import numpy as np
import pytest

from netopinion import (
    ATTITUDE_PRESETS,
    AgentInit,
    AttitudeParams,
    PhiSpec,
    RunParams,
    Scenario,
    ScenarioError,
    TabulatedDensity,
    TruncatedGaussian,
    sample_initial_conditions,
    simulate,
)
from netopinion.io import (
    ScenarioFormatError,
    load_manifest_scenario,
    load_scenario,
    parse_scenario,
    save_scenario,
    scenario_digest,
    scenario_to_doc,
    write_plot_data,
    write_snapshots,
)

MINIMAL_DOC = {"attitude": "black", "agents": {"count": 3}}


def tiny_traj(n_agents=3, seed=5, **kw):
    run = kw.pop("run", RunParams(n_particles=8, t_final=0.05, dt=1e-3,
                                  snapshot_every=0.025))
    radius = kw.pop("interaction_radius", 5.0)
    scn = Scenario(agents=tuple(AgentInit() for _ in range(n_agents)),
                   attitude=ATTITUDE_PRESETS["black"],
                   interaction_radius=radius, run=run, seed=seed, **kw)
    return simulate(sample_initial_conditions(scn, scn.seed))


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# ---------------------------------------------------------------------------
# Scenario parsing


def test_minimal_doc_fills_defaults():
    scn = parse_scenario(MINIMAL_DOC)
    assert scn == Scenario(agents=tuple(AgentInit() for _ in range(3)),
                           attitude=ATTITUDE_PRESETS["black"])
    assert scn.run.n_particles == 100
    assert scn.run.dt == 1e-3
    assert math.isinf(scn.interaction_radius)
    assert scn.diffusion_enabled and scn.phi == PhiSpec()


def test_unknown_top_level_key_rejected():
    with pytest.raises(ScenarioFormatError, match=r"top level.*extra"):
        parse_scenario({**MINIMAL_DOC, "extra": 1})


def test_missing_required_key_rejected():
    with pytest.raises(ScenarioFormatError, match="agents"):
        parse_scenario({"attitude": "black"})


def test_unknown_nested_keys_name_their_path():
    doc = {**MINIMAL_DOC, "run": {"steps": 3}}
    with pytest.raises(ScenarioFormatError, match="run"):
        parse_scenario(doc)
    doc = {"attitude": "black", "agents": [{"mass": 1.0, "odd": 2}]}
    with pytest.raises(ScenarioFormatError, match=r"agents\[0\]"):
        parse_scenario(doc)
    doc = {"attitude": "black",
           "agents": [{"density": {"kind": "truncated_gaussian", "bad": 1}}]}
    with pytest.raises(ScenarioFormatError, match=r"agents\[0\]\.density"):
        parse_scenario(doc)


def test_attitude_presets_and_custom_breakpoints():
    scn = parse_scenario({**MINIMAL_DOC, "attitude": "blue"})
    assert scn.attitude == ATTITUDE_PRESETS["blue"]
    custom = {"r_f": 0.1, "r_a": 0.2, "r_r": 0.3, "r_l": 0.4}
    scn = parse_scenario({**MINIMAL_DOC, "attitude": custom})
    assert scn.attitude == AttitudeParams(0.1, 0.2, 0.3, 0.4)
    with pytest.raises(ScenarioFormatError, match="teal"):
        parse_scenario({**MINIMAL_DOC, "attitude": "teal"})
    with pytest.raises(ScenarioFormatError, match="r_l"):
        parse_scenario({**MINIMAL_DOC,
                        "attitude": {"r_f": 0.1, "r_a": 0.2, "r_r": 0.3}})


def test_interaction_radius_strings():
    for word in ("infinite", "inf"):
        scn = parse_scenario({**MINIMAL_DOC, "interaction_radius": word})
        assert math.isinf(scn.interaction_radius)
    scn = parse_scenario({**MINIMAL_DOC, "interaction_radius": 2.5})
    assert scn.interaction_radius == 2.5
    with pytest.raises(ScenarioFormatError, match="wide"):
        parse_scenario({**MINIMAL_DOC, "interaction_radius": "wide"})


def test_agent_count_template():
    scn = parse_scenario({"attitude": "red",
                          "agents": {"count": 4, "mass": 2.5}})
    assert scn.n_agents == 4
    assert all(a == AgentInit(mass=2.5) for a in scn.agents)
    assert all(a.density == TruncatedGaussian(None, None) for a in scn.agents)
    scn = parse_scenario({"attitude": "red", "agents": {"count": 2}})
    assert all(a.mass == 1.0 for a in scn.agents)


def test_phi_parsing():
    scn = parse_scenario({**MINIMAL_DOC,
                          "phi": {"kind": "power", "exponent": 3, "rho_max": 50}})
    assert scn.phi == PhiSpec("power", 3.0, 50.0)
    scn = parse_scenario({**MINIMAL_DOC, "phi": {"kind": "power"}})
    assert scn.phi == PhiSpec("power", 2.0, 10.0)
    with pytest.raises(ScenarioFormatError, match="cubic"):
        parse_scenario({**MINIMAL_DOC, "phi": {"kind": "cubic"}})


def test_load_scenario_rejects_invalid_values(tmp_path):
    doc = {**MINIMAL_DOC,
           "attitude": {"r_f": 0.4, "r_a": 0.3, "r_r": 0.5, "r_l": 0.6}}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ScenarioError) as err:
        load_scenario(path)
    assert any(v.code == "attitude_radii_not_increasing"
               for v in err.value.violations)


def test_load_scenario_rejects_malformed_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("not json {")
    with pytest.raises(ScenarioFormatError, match="broken.json"):
        load_scenario(path)


def test_bundled_scenario_loads():
    path = resources.files("netopinion") / "data" / "black_r5.json"
    scn = load_scenario(str(path))
    assert scn.n_agents == 40
    assert scn.attitude == ATTITUDE_PRESETS["black"]
    assert scn.interaction_radius == 5.0
    assert scn.seed == 12


# ---------------------------------------------------------------------------
# Round trips and digests


def full_scenario():
    agents = (
        AgentInit(mass=1.5, density=TruncatedGaussian(0.2, 0.3),
                  position=(0.0, 1.0, 2.0)),
        AgentInit(mass=0.5,
                  density=TabulatedDensity((-1.0, 0.0, 1.0), (1.0, 2.0, 1.0)),
                  position=(3.0, 4.0, 5.0)),
    )
    return Scenario(agents=agents, attitude=AttitudeParams(0.1, 0.2, 0.3, 0.4),
                    interaction_radius=3.0, diffusion_enabled=False,
                    phi=PhiSpec("power", 2.0, 25.0), network_dim=3,
                    run=RunParams(16, 0.5, 5e-4, 0.25, 1e-10, True),
                    seed=7, position_box=(-2.0, 6.0), mass_jitter=0.1,
                    invert_network_velocity=True)


def test_save_load_round_trip(tmp_path):
    scn = full_scenario()
    path = tmp_path / "scn.json"
    save_scenario(scn, path)
    assert load_scenario(path) == scn


def test_scenario_doc_spells_out_infinite_radius():
    doc = scenario_to_doc(parse_scenario(MINIMAL_DOC))
    assert doc["interaction_radius"] == "infinite"


def test_digest_is_stable_and_sensitive():
    doc = scenario_to_doc(full_scenario())
    d = scenario_digest(doc)
    assert d.startswith("sha256:")
    assert scenario_digest(json.loads(json.dumps(doc))) == d
    assert scenario_digest({**doc, "seed": doc["seed"] + 1}) != d


# ---------------------------------------------------------------------------
# Snapshot output


def test_write_snapshots_file_set_and_round_trip(tmp_path):
    traj = tiny_traj()
    files = write_snapshots(traj, tmp_path)
    expected = {"metrics.csv", "manifest.json"}
    for t in traj.times:
        expected |= {f"particles_t{t:.9g}.csv", f"nodes_t{t:.9g}.csv"}
    assert {p.name for p in files} == expected

    final = traj.states[-1]
    tag = f"{traj.times[-1]:.9g}"
    header, rows = read_csv(tmp_path / f"particles_t{tag}.csv")
    assert header == ["agent", "k", "x"]
    x = np.full_like(final.x, np.nan)
    for i, k, v in rows:
        x[int(i), int(k)] = float(v)
    assert np.array_equal(x, final.x)

    header, rows = read_csv(tmp_path / f"nodes_t{tag}.csv")
    assert header == ["agent", "dim", "value"]
    a = np.full_like(final.a, np.nan)
    for i, d, v in rows:
        a[int(i), int(d)] = float(v)
    assert np.array_equal(a, final.a)


def test_metrics_csv_one_row_per_snapshot(tmp_path):
    traj = tiny_traj()
    write_snapshots(traj, tmp_path, bins=10)
    header, rows = read_csv(tmp_path / "metrics.csv")
    m = traj.states[0].n_agents
    assert len(header) == 5 + 3 * m + 10
    assert header[:2] == ["t", "n_clusters"]
    assert len(rows) == len(traj.times)
    assert [float(r[0]) for r in rows] == list(traj.times)
    for row in rows:
        for cell in row:
            float(cell)  # every cell is a plain number


def test_manifest_contents_and_exact_replay(tmp_path):
    traj = tiny_traj()
    write_snapshots(traj, tmp_path, wall_clock_seconds=1.25)
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert doc["tool"] == "netopinion"
    assert doc["scenario_digest"].startswith("sha256:")
    assert doc["seed"] == traj.scenario.seed
    assert doc["times"] == list(traj.times)
    assert doc["stopped_early"] is False
    assert doc["wall_clock_seconds"] == 1.25
    assert set(doc["integrator"]) == {"nominal_steps", "substeps",
                                      "rejections", "max_subdivision"}

    replayed = simulate(load_manifest_scenario(tmp_path / "manifest.json"))
    assert replayed.times == traj.times
    assert np.array_equal(replayed.states[-1].x, traj.states[-1].x)
    assert np.array_equal(replayed.states[-1].a, traj.states[-1].a)


# ---------------------------------------------------------------------------
# Plot data


def test_write_plot_data_files_and_contents(tmp_path):
    traj = tiny_traj(n_agents=4)
    files = write_plot_data(traj, tmp_path, bins=10)
    t0 = f"{traj.times[0]:.9g}"
    t1 = f"{traj.times[-1]:.9g}"
    expected = set()
    for label, tag in (("initial", t0), ("final", t1)):
        expected |= {f"density_{label}_t{tag}.csv", f"hist_{label}.csv",
                     f"nodes_scatter_{label}_t{tag}.csv",
                     f"edges_{label}_t{tag}.csv"}
    assert {p.name for p in files} == expected

    state = traj.states[0]
    m, n = state.n_agents, state.n_particles
    header, rows = read_csv(tmp_path / f"density_initial_t{t0}.csv")
    assert header == ["agent", "x_left", "x_right", "rho"]
    assert len(rows) == m * n
    i, xl, xr, rho = rows[0]
    gap = float(xr) - float(xl)
    assert float(rho) == pytest.approx(state.sigma_n[int(i)] / gap, rel=1e-12)

    header, rows = read_csv(tmp_path / "hist_initial.csv")
    assert len(rows) == 10
    assert float(rows[0][0]) == -1.0 and float(rows[-1][1]) == 1.0

    header, rows = read_csv(tmp_path / f"nodes_scatter_initial_t{t0}.csv")
    assert header == ["agent", "a0", "a1", "mean_opinion"]
    assert len(rows) == m


def test_edge_list_matches_radius_graph(tmp_path):
    traj = tiny_traj(n_agents=6, interaction_radius=4.0)
    write_plot_data(traj, tmp_path)
    t0 = f"{traj.times[0]:.9g}"
    _, rows = read_csv(tmp_path / f"edges_initial_t{t0}.csv")
    got = {(int(i), int(j)) for i, j in rows}
    a = traj.states[0].a
    want = {(i, j) for i in range(6) for j in range(i + 1, 6)
            if np.linalg.norm(a[i] - a[j]) <= 4.0}
    assert got == want
