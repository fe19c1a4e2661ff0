import csv
import json
import re
import subprocess
import sys

import pytest

from compcbf.cli import main

SMALL = """\
name: small
team: {n: 2, max_accel: 1.0, max_speed: 0.3, d_s: 0.15, d_c: 0.6}
initial:
  positions: [[-0.5, 0.0], [0.5, 0.02]]
waypoints:
  paths:
    - [[0.5, 0.0]]
    - [[-0.5, 0.0]]
certificate: {kind: %s}
alpha: {power: 2}
gains: {k_p: 1.5, k_d: 2.0}
sim: {duration: 2.0}
%s"""


def scenario(tmp_path, kind="safety", extra="", name="small.yaml"):
    f = tmp_path / name
    f.write_text(SMALL % (kind, extra))
    return str(f)


NUM = re.compile(r"^-?\d")


def _sig_digits(text):
    mant = text.lstrip("-").split("e")[0].replace(".", "").lstrip("0")
    return len(mant)


def test_run_writes_table_and_summary(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", scenario(tmp_path, extra="expect: {waypoints: fail}\n"), "--out", str(out)])
    assert code == 0
    printed = capsys.readouterr().out
    assert "scenario small" in printed and printed.strip().endswith("PASS")
    with open(out / "trajectory.csv") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    assert header[:4] == ["step", "t", "p1_x", "p1_y"]
    assert header[-3:] == ["active_branches", "wp1", "wp2"]
    assert len(header) == 2 + 4 * 4 + 2 + 1 + 5 + 2
    assert len(rows) == 101 + 1
    assert all(len(r) == len(header) for r in rows)
    for r in rows[1:]:
        for cell in r[1:header.index("B") + 2]:
            if NUM.match(cell) and "." in cell:
                assert _sig_digits(cell) <= 9
    assert any(_sig_digits(c) == 9 for r in rows[1:] for c in r[1:4] if NUM.match(c))
    summary = json.loads((out / "summary.json").read_text())
    assert summary["schema"] == "compcbf.summary/1"
    assert summary["scenario"] == "small" and summary["steps"] == 100
    assert set(summary["properties"]) == {"safety", "connectivity", "invariance", "speed_bound",
                                          "waypoints", "graph_switching", "filter_health"}
    assert summary["properties"]["connectivity"]["status"] == "n/a"
    assert summary["properties"]["safety"]["status"] == "pass"
    assert summary["properties"]["waypoints"]["status"] == "expected-fail"
    assert summary["metrics"]["min_pair_distance"] >= 0.15


def test_property_failure_exit_code(tmp_path, capsys):
    # the robots cannot swap in two seconds
    assert main(["run", scenario(tmp_path)]) == 1
    assert capsys.readouterr().out.strip().endswith("FAIL")


def test_expected_failure_that_passes_is_a_failure(tmp_path):
    path = scenario(tmp_path, extra="expect: {safety: fail, waypoints: fail}\n")
    assert main(["run", path, "--quiet"]) == 1


def test_baseline_collision_expected(tmp_path):
    path = scenario(tmp_path, kind="none", extra="expect: {safety: fail, waypoints: fail}\n")
    assert main(["run", path, "--quiet"]) == 0


def test_configuration_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text((SMALL % ("safety", "")).replace("alpha:", "alpah:"))
    assert main(["run", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "alpah" in err and "line 10" in err
    assert main(["run", str(tmp_path / "nope.yaml")]) == 2
    assert main(["run", "contradictory"]) == 2
    assert "B12" in capsys.readouterr().err
    assert main(["check", scenario(tmp_path, kind="none")]) == 2
    assert main(["check", "exp1_safety", "--samples", "0"]) == 2


def test_quiet_prints_nothing(tmp_path, capsys):
    main(["run", scenario(tmp_path), "--quiet"])
    assert capsys.readouterr().out == ""


def test_seed_override_only_changes_check_sampling(tmp_path):
    path = scenario(tmp_path)
    main(["run", path, "--quiet", "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["run", path, "--quiet", "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()
    assert json.loads((tmp_path / "b" / "summary.json").read_text())["seed"] == 2
    main(["check", path, "--quiet", "--samples", "20", "--out", str(tmp_path / "c"), "--seed", "1"])
    main(["check", path, "--quiet", "--samples", "20", "--out", str(tmp_path / "d"), "--seed", "2"])
    c = json.loads((tmp_path / "c" / "check.json").read_text())
    d = json.loads((tmp_path / "d" / "check.json").read_text())
    assert c["seed"] == 1 and d["seed"] == 2 and c["worst_margin"] != d["worst_margin"]


def test_check_command(tmp_path, capsys):
    out = tmp_path / "chk"
    assert main(["check", scenario(tmp_path), "--samples", "200", "--out", str(out)]) == 0
    rep = json.loads((out / "check.json").read_text())
    assert rep["schema"] == "compcbf.check/1"
    assert rep["checked"] == 200 and rep["feasible_fraction"] == 1.0 and rep["valid"]
    assert capsys.readouterr().out.strip().endswith("PASS")


def test_check_contradictory_lists_counterexamples(capsys):
    assert main(["check", "contradictory"]) == 1
    out = capsys.readouterr().out
    assert "counterexample" in out and "B12" in out and out.strip().endswith("FAIL")


def test_selftest_quick(tmp_path, capsys):
    assert main(["selftest", "--quick", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "kernel backend" in out and out.strip().endswith("PASS")
    data = json.loads((tmp_path / "selftest.json").read_text())
    assert data["passed"] and len(data["suites"]) == 7


def test_sweep(tmp_path, capsys):
    folder = tmp_path / "scn"
    folder.mkdir()
    scenario(folder, extra="expect: {waypoints: fail}\n", name="a.yaml")
    (folder / "b.yaml").write_text((SMALL % ("safety", "expect: {waypoints: fail}\n")).replace("name: small", "name: other"))
    out = tmp_path / "out"
    assert main(["sweep", str(folder), "--out", str(out), "--workers", "2"]) == 0
    assert (out / "small" / "trajectory.csv").is_file() and (out / "other" / "summary.json").is_file()
    (folder / "c.yaml").write_text("team: [")
    assert main(["sweep", str(folder), "--quiet"]) == 2
    assert main(["sweep", str(tmp_path / "missing")]) == 2


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "compcbf", "run", scenario(tmp_path), "--quiet"],
                         capture_output=True, text=True)
    assert res.returncode == 1 and res.stdout == ""
    res = subprocess.run([sys.executable, "-m", "compcbf", "bogus"], capture_output=True, text=True)
    assert res.returncode == 2
