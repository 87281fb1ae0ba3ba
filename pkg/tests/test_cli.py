"""Tests for the command-line driver: run / sweep / converge / validate."""

import csv
import json
import shutil
import subprocess
import sys

import pytest

from netopinion.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main


def scenario_doc(**kw):
    doc = {"attitude": "black",
           "agents": {"count": 3},
           "interaction_radius": 5.0,
           "run": {"n_particles": 8, "t_final": 0.05, "dt": 1e-3,
                   "snapshot_every": 0.025},
           "seed": 4}
    doc.update(kw)
    return doc


def write_doc(tmp_path, name="scn.json", **kw):
    p = tmp_path / name
    p.write_text(json.dumps(scenario_doc(**kw)))
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# ---------------------------------------------------------------------------
# run


def test_run_writes_outputs(tmp_path):
    scn = write_doc(tmp_path)
    out = tmp_path / "out"
    assert main(["run", str(scn), str(out)]) == EXIT_OK
    for name in ("manifest.json", "metrics.csv", "particles_t0.csv",
                 "nodes_t0.csv", "particles_t0.05.csv", "hist_initial.csv",
                 "hist_final.csv"):
        assert (out / name).exists(), name


def test_run_missing_file_exits_invalid(tmp_path, capsys):
    rc = main(["run", str(tmp_path / "nope.json"), str(tmp_path / "out")])
    assert rc == EXIT_INVALID
    assert "not found" in capsys.readouterr().err


def test_run_invalid_scenario_exits_invalid(tmp_path, capsys):
    scn = write_doc(tmp_path, attitude={"r_f": 0.4, "r_a": 0.3,
                                        "r_r": 0.5, "r_l": 0.6})
    rc = main(["run", str(scn), str(tmp_path / "out")])
    assert rc == EXIT_INVALID
    assert "attitude_radii_not_increasing" in capsys.readouterr().err


def test_run_flag_overrides_land_in_manifest(tmp_path):
    scn = write_doc(tmp_path)
    out = tmp_path / "out"
    rc = main(["run", str(scn), str(out), "--seed", "9", "--radius", "2.0",
               "--no-diffusion", "--particles", "6", "--dt", "0.002"])
    assert rc == EXIT_OK
    doc = json.loads((out / "manifest.json").read_text())["scenario"]
    assert doc["seed"] == 9
    assert doc["interaction_radius"] == 2.0
    assert doc["diffusion_enabled"] is False
    assert doc["run"]["n_particles"] == 6
    assert doc["run"]["dt"] == 0.002


def test_run_out_flag_beats_positional(tmp_path):
    scn = write_doc(tmp_path)
    ignored = tmp_path / "ignored"
    real = tmp_path / "real"
    rc = main(["run", str(scn), str(ignored), "--out", str(real)])
    assert rc == EXIT_OK
    assert (real / "manifest.json").exists()
    assert not ignored.exists()


# ---------------------------------------------------------------------------
# validate


def test_validate_ok(tmp_path, capsys):
    scn = write_doc(tmp_path)
    assert main(["validate", str(scn)]) == EXIT_OK
    assert "scenario valid" in capsys.readouterr().out


def test_validate_reports_violations(tmp_path, capsys):
    scn = write_doc(tmp_path, mass_jitter=1.5)
    assert main(["validate", str(scn)]) == EXIT_INVALID
    assert "invalid_mass_jitter" in capsys.readouterr().out


def test_validate_malformed_json(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text("not json {")
    assert main(["validate", str(p)]) == EXIT_INVALID
    assert "error" in capsys.readouterr().err


def test_builtin_scenario_resolves_by_name():
    assert main(["validate", "black_r5.json"]) == EXIT_OK


# ---------------------------------------------------------------------------
# sweep


def test_sweep_grid_order_dedupe_and_manifests(tmp_path):
    spec = {"scenario": scenario_doc(),
            "axes": [{"path": "interaction_radius", "values": [2.0, 5.0, 2.0]},
                     {"path": "run.n_particles", "values": [6, 8]}],
            "seeds": [1, 1]}
    spec_path = tmp_path / "sweep.json"
    spec_path.write_text(json.dumps(spec))
    out = tmp_path / "sweep_out"
    assert main(["sweep", str(spec_path), str(out)]) == EXIT_OK

    header, rows = read_csv(out / "summary.csv")
    assert header[:4] == ["run", "interaction_radius", "run.n_particles", "seed"]
    assert [r[0] for r in rows] == [f"run_{i:04d}" for i in range(4)]
    got_cells = [(float(r[1]), int(r[2]), int(r[3])) for r in rows]
    assert got_cells == [(2.0, 6, 1), (2.0, 8, 1), (5.0, 6, 1), (5.0, 8, 1)]
    assert all(r[4] == "ok" for r in rows)

    for idx, (radius, n, seed) in enumerate(got_cells):
        doc = json.loads((out / f"run_{idx:04d}" / "manifest.json")
                         .read_text())["scenario"]
        assert doc["interaction_radius"] == radius
        assert doc["run"]["n_particles"] == n
        assert doc["seed"] == seed


def test_sweep_base_file_relative_to_spec(tmp_path):
    write_doc(tmp_path, name="base.json")
    spec = {"base": "base.json",
            "axes": [{"path": "seed", "values": [3]}]}
    spec_path = tmp_path / "sweep.json"
    spec_path.write_text(json.dumps(spec))
    out = tmp_path / "sweep_out"
    assert main(["sweep", str(spec_path), str(out)]) == EXIT_OK
    _, rows = read_csv(out / "summary.csv")
    assert len(rows) == 1


def test_sweep_failed_run_lands_in_summary_and_exit_code(tmp_path):
    spec = {"scenario": scenario_doc(),
            "axes": [{"path": "run.min_gap", "values": [1e-12, 0.5]}]}
    spec_path = tmp_path / "sweep.json"
    spec_path.write_text(json.dumps(spec))
    out = tmp_path / "sweep_out"
    assert main(["sweep", str(spec_path), str(out)]) == EXIT_RUNTIME
    _, rows = read_csv(out / "summary.csv")
    status = {float(r[1]): r[3] for r in rows}
    assert status[1e-12] == "ok"
    assert status[0.5] == "error"
    bad = next(r for r in rows if r[3] == "error")
    assert "StepCollapseError" in bad[4]


def test_sweep_bad_specs_exit_invalid(tmp_path, capsys):
    cases = [
        {"scenario": scenario_doc(), "unknown": 1},
        {"scenario": scenario_doc(), "base": "x.json"},
        {},
        {"scenario": scenario_doc(), "axes": [{"path": "seed"}]},
    ]
    for i, spec in enumerate(cases):
        p = tmp_path / f"spec_{i}.json"
        p.write_text(json.dumps(spec))
        assert main(["sweep", str(p), str(tmp_path / f"out_{i}")]) == EXIT_INVALID
    capsys.readouterr()


# ---------------------------------------------------------------------------
# converge


def test_converge_writes_tables(tmp_path, capsys):
    scn = write_doc(tmp_path)
    out = tmp_path / "conv"
    rc = main(["converge", str(scn), str(out), "--particles", "6,12"])
    assert rc == EXIT_OK
    assert "N     6 vs    12" in capsys.readouterr().out
    assert (out / "n_6" / "manifest.json").exists()
    assert (out / "n_12" / "manifest.json").exists()

    header, rows = read_csv(out / "convergence.csv")
    assert header == ["n_coarse", "n_fine", "agent", "w1_final", "node_dist"]
    assert len(rows) == 3  # one N pair x three agents
    for r in rows:
        assert float(r[3]) >= 0.0 and float(r[4]) >= 0.0

    header, rows = read_csv(out / "empirical_gap.csv")
    assert header == ["n", "agent", "gap", "bound"]
    assert len(rows) == 6  # two N values x three agents
    for r in rows:
        gap, bound = float(r[2]), float(r[3])
        assert gap <= bound + 1e-12


def test_converge_same_seed_same_initial_density(tmp_path):
    scn = write_doc(tmp_path)
    out = tmp_path / "conv"
    assert main(["converge", str(scn), str(out), "--particles", "6,12"]) == EXIT_OK
    doc6 = json.loads((out / "n_6" / "manifest.json").read_text())["scenario"]
    doc12 = json.loads((out / "n_12" / "manifest.json").read_text())["scenario"]
    assert doc6["agents"] == doc12["agents"]
    assert doc6["run"]["n_particles"] == 6
    assert doc12["run"]["n_particles"] == 12


def test_converge_rejects_bad_particle_lists(tmp_path, capsys):
    scn = write_doc(tmp_path)
    for bad in ("12,6", "8", "8,8", "a,b"):
        rc = main(["converge", str(scn), str(tmp_path / "o"),
                   "--particles", bad])
        assert rc == EXIT_INVALID, bad
    capsys.readouterr()


# ---------------------------------------------------------------------------
# console entry point


def test_console_script_is_installed(tmp_path):
    exe = shutil.which("netopinion")
    if exe is None:
        pytest.skip("netopinion script not on PATH")
    scn = write_doc(tmp_path)
    proc = subprocess.run([exe, "validate", str(scn)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "scenario valid" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "netopinion.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "run" in proc.stdout and "sweep" in proc.stdout
