"""Run reports, the trajectory table and the summary document."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .scenario import PROPERTIES, Scenario
from .sim import SummaryMetrics, TrajectoryLog

SUMMARY_SCHEMA = "compcbf.summary/1"
CHECK_SCHEMA = "compcbf.check/1"

PASS = "pass"
FAIL = "fail"
EXPECTED_FAIL = "expected-fail"
NOT_APPLICABLE = "n/a"


def fmt(x) -> str:
    """Numbers with 9 significant digits; integers and text unchanged."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".9g")
    return str(x)


def _json_value(x):
    if isinstance(x, dict):
        return {str(k): _json_value(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_value(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return float(format(x, ".9g")) if math.isfinite(x) else format(x)
    return x


def write_json(path, data):
    Path(path).write_text(json.dumps(_json_value(data), indent=2) + "\n")


# ---------------------------------------------------------------------------
# trajectory table


def trajectory_columns(log: TrajectoryLog):
    """Column names, in order; fixed for a given robot count."""
    n = log.n_robots
    robots = range(1, n + 1)
    cols = ["step", "t"]
    cols += [f"p{i}_{a}" for i in robots for a in "xy"]
    cols += [f"v{i}_{a}" for i in robots for a in "xy"]
    cols += [f"unom{i}_{a}" for i in robots for a in "xy"]
    cols += [f"u{i}_{a}" for i in robots for a in "xy"]
    cols += ["logB", "B"]
    cols += [f"d{i + 1}_{j + 1}" for i, j in log.pairs]
    cols += ["qp_status", "qp_iterations", "emergency", "graph_index", "active_branches"]
    cols += [f"wp{i}" for i in robots]
    return cols


def _branches(masks):
    return "|".join("".join("1" if b else "0" for b in m) for m in masks)


def trajectory_rows(log: TrajectoryLog):
    for k in range(len(log)):
        row = [k, log.t[k]]
        row += list(log.positions[k].ravel()) + list(log.velocities[k].ravel())
        row += list(log.u_nominal[k]) + list(log.u[k])
        row += [log.log_b[k], log.b[k]] + list(log.distances[k])
        row += [log.qp_status[k], log.qp_iterations[k], log.emergency[k],
                log.graph_index[k] + 1 if log.graph_index[k] >= 0 else 0,
                _branches(log.active_branches[k])]
        row += list(log.waypoint_index[k] + 1)
        yield [fmt(x) for x in row]


def write_trajectory(log: TrajectoryLog, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_columns(log))
        w.writerows(trajectory_rows(log))


# ---------------------------------------------------------------------------
# properties


@dataclass
class Verdict:
    status: str
    detail: str = ""

    @property
    def failed(self) -> bool:
        return self.status == FAIL


def evaluate_properties(scn: Scenario, m: SummaryMetrics) -> dict:
    """Verdict for every property, judged against the scenario's expectations."""
    cfg = scn.config
    cert = cfg.certificate
    cond = m.conditions
    p = cfg.params
    actual = {}
    actual["safety"] = (cond["safety"], f"min pair distance {fmt(m.min_pair_distance)} (d_s {fmt(p.d_s)})")
    conn = {k: v for k, v in cond.items() if k.startswith(("edge ", "group ", "some graph"))}
    if conn:
        bad = [k for k, v in conn.items() if not v]
        actual["connectivity"] = (not bad, "violated: " + ", ".join(bad) if bad else "held: " + ", ".join(conn))
    if "invariance" in cond:
        actual["invariance"] = (cond["invariance"], f"min B {fmt(m.min_b)}")
    actual["speed_bound"] = (cond["speed bound"], f"max speed {fmt(m.max_speed)} (limit {fmt(p.max_speed)})")
    want = scn.expect.get("waypoints_visited", [len(path) for path in cfg.plan.paths])
    actual["waypoints"] = (m.waypoints_visited == list(want),
                           f"visited {m.waypoints_visited}, expected {list(want)}")
    if "min_graph_switches" in scn.expect:
        need = scn.expect["min_graph_switches"]
        actual["graph_switching"] = (m.graph_switches >= need, f"{m.graph_switches} switches, need {need}")
    if cert.kind != "none":
        actual["filter_health"] = (m.emergency_steps == 0, f"{m.emergency_steps} emergency stops")

    out = {}
    for name in PROPERTIES:
        if name not in actual:
            out[name] = Verdict(NOT_APPLICABLE)
            continue
        ok, detail = actual[name]
        if scn.expect.get(name) == "fail":
            out[name] = Verdict(EXPECTED_FAIL, detail) if not ok else Verdict(FAIL, detail + "; expected to fail")
        else:
            out[name] = Verdict(PASS if ok else FAIL, detail)
    return out


@dataclass
class RunReport:
    scenario: str
    seed: int
    steps: int
    metrics: SummaryMetrics
    properties: dict
    artifacts: dict = field(default_factory=dict)
    elapsed: float = math.nan

    @property
    def passed(self) -> bool:
        return not any(v.failed for v in self.properties.values())

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def to_dict(self):
        return {
            "schema": SUMMARY_SCHEMA,
            "scenario": self.scenario,
            "seed": self.seed,
            "steps": self.steps,
            "passed": self.passed,
            "properties": {k: {"status": v.status, "detail": v.detail} for k, v in self.properties.items()},
            "metrics": self.metrics.to_dict(),
            "artifacts": dict(self.artifacts),
        }

    def lines(self):
        yield f"scenario {self.scenario}: {self.steps} steps, seed {self.seed}"
        for name, v in self.properties.items():
            yield f"  {name:<16} {v.status:<14} {v.detail}"
        yield "PASS" if self.passed else "FAIL"
