"""Configuration merging, validation, output files and exit codes of the command-line tool."""

from __future__ import annotations

import csv
import json
import math
import subprocess
import sys

import pytest

from klshell import cli, solver
from klshell.benchmarks import fit_slope

SMALL = ["--case", "extruded_arc", "--p", "2", "--n", "2,3,4", "--errors", "l2", "--probe"]


def test_defaults():
    cfg = cli.parse_config([])
    assert cfg == cli.RunConfig()
    assert cfg.cases == ["extruded_arc"] and cfg.orders == [2, 3] and cfg.meshes == [2, 4, 8, 16]


def test_config_file_and_flag_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("case = scordelis_lo, hemisphere_navier  # two cases\np = 3\nn = 4,8\nprobe = yes\n"
                    "export-vtk = false\nthreads = 2\n")
    cfg = cli.parse_config(["--config", str(path), "--p", "2,4", "--no-timing"])
    assert cfg.cases == ["scordelis_lo", "hemisphere_navier"]
    assert cfg.orders == [2, 4] and cfg.meshes == [4, 8]
    assert cfg.probe is True and cfg.export_vtk is False and cfg.threads == 2 and cfg.timing is False


@pytest.mark.parametrize("argv", [
    ["--case", "dome"],
    ["--n", "4,2"],
    ["--n", "0,2"],
    ["--n", "two"],
    ["--p", "0"],
    ["--p", "11"],
    ["--case", "scordelis_lo", "--errors", "l2"],
    ["--errors", "energy,stress"],
    ["--quad", "0"],
    ["--quad", "many"],
    ["--threads", "0"],
])
def test_invalid_values_exit_with_status_2(argv, tmp_path, capsys):
    assert cli.main(argv + ["--out", str(tmp_path)]) == 2
    assert "klshell: error:" in capsys.readouterr().err
    assert not (tmp_path / "summary.json").exists()


def test_invalid_config_files(tmp_path):
    bad_key = tmp_path / "a.cfg"
    bad_key.write_text("mesh = 4\n")
    bad_bool = tmp_path / "b.cfg"
    bad_bool.write_text("probe = maybe\n")
    for path in (bad_key, bad_bool, tmp_path / "missing.cfg"):
        assert cli.main(["--config", str(path)]) == 2


def test_argparse_choices_are_enforced():
    with pytest.raises(SystemExit) as exc:
        cli.main(["--geometry", "spline"])
    assert exc.value.code == 2


def _run(tmp_path, name, extra=()):
    out = tmp_path / name
    status = cli.main(SMALL + ["--out", str(out), "--no-timing", *extra])
    return status, out


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    return _run(tmp_path_factory.mktemp("cli"), "a")


def test_output_files(small_run):
    status, out = small_run
    assert status == 0
    with open(out / "convergence_extruded_arc_p2.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["n_elem", "h", "dofs_condensed", "dofs_uncondensed", "l2_u", "l2_m", "l2_n", "l2_q",
                             "probe", "probe_error", "wall_time_s", "status"]
    assert [r["n_elem"] for r in rows] == ["2", "3", "4"]
    assert all(r["status"] == "ok" and r["wall_time_s"] == "" for r in rows)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["timing"] is False
    entry = summary["cases"]["extruded_arc"]["2"]
    assert entry["failures"] == {} and set(entry["probe"]) == {"2", "3", "4"}
    # slopes in the summary are reproducible from the CSV columns
    h = [float(r["h"]) for r in rows]
    for col, slope in entry["slopes"].items():
        assert math.isclose(slope, fit_slope(h, [float(r[col]) for r in rows]), rel_tol=0, abs_tol=1e-12)
    assert "probe" not in entry["slopes"]


def test_no_timing_output_is_byte_identical(small_run, tmp_path):
    _, first = small_run
    status, second = _run(tmp_path, "b")
    assert status == 0
    for name in ("convergence_extruded_arc_p2.csv", "summary.json"):
        a, b = (first / name).read_bytes(), (second / name).read_bytes()
        if name == "summary.json":
            a, b = (json.loads(x)["cases"] for x in (a, b))
        assert a == b


def test_worker_processes_give_identical_tables(small_run, tmp_path):
    _, first = small_run
    status, second = _run(tmp_path, "c", ["--threads", "2"])
    assert status == 0
    name = "convergence_extruded_arc_p2.csv"
    assert (first / name).read_bytes() == (second / name).read_bytes()


def test_vtk_files_are_written(tmp_path):
    out = tmp_path / "vtk"
    assert cli.main(["--case", "scordelis_lo", "--p", "2", "--n", "2", "--export-vtk", "--out", str(out)]) == 0
    assert (out / "scordelis_lo_p2_n2.vtk").stat().st_size > 0


def test_failed_runs_are_recorded_and_exit_with_status_1(tmp_path, monkeypatch, capsys):
    def broken(*args, **kwargs):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(solver, "solve_shell", broken)
    out = tmp_path / "fail"
    assert cli.main(["--case", "scordelis_lo", "--p", "2", "--n", "2,4", "--out", str(out)]) == 1
    assert "some runs failed" in capsys.readouterr().err
    rows = list(csv.DictReader(open(out / "convergence_scordelis_lo_p2.csv", newline="")))
    assert all("solver exploded" in r["status"] for r in rows)
    failures = json.loads((out / "summary.json").read_text())["cases"]["scordelis_lo"]["2"]["failures"]
    assert set(failures) == {"2", "4"}


def test_module_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "klshell", "--help"], capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert "--precision" in res.stdout and "--no-timing" in res.stdout
