"""Scenario files: YAML documents describing one simulated experiment.

Layout::

    name: exp1_safety            # optional, defaults to the file stem
    description: free text       # optional
    team:        {n, max_accel, max_speed, d_s, d_c}
    initial:     {positions: [[x, y], ...], velocities: [[vx, vy], ...]}
    waypoints:   {paths: [[[x, y], ...], ...], arrival_radius, hold_final}
    certificate: {kind: none|safety|static|dynamic, edges, or_groups, graphs}
    alpha:       {gain, power}
    gains:       {k_p, k_d}
    sim:         {dt, duration, seed}
    check:       {arena: [x0, x1, y0, y1], samples}
    expect:      {safety: pass|fail, ..., waypoints_visited: [...], min_graph_switches}

Robot numbers in edges are 1-based.  Unknown keys are errors; every error
carries the dotted field path and the line number in the file.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .barrier_core import ClassKappa
from .certificates import CertificateSpec, TeamParams
from .controller import ControllerGains, WaypointPlan
from .errors import CompCBFError, ConfigurationError
from .sim import DEFAULT_DT, SimConfig
from .state import EnsembleState

PROPERTIES = ("safety", "connectivity", "invariance", "speed_bound", "waypoints",
              "graph_switching", "filter_health")

EXP2_CERTIFICATE = CertificateSpec("static", edges=[(2, 3)],
                                   or_groups=[[(1, 2), (1, 3)], [(2, 4), (3, 4)]])


def exp2_tree(params: TeamParams):
    """``B12 B13 B14 B23 B24 B34 * Bbar23 * (Bbar12 + Bbar13) * (Bbar24 + Bbar34)``."""
    return EXP2_CERTIFICATE.build(params)


# (required, allowed) keys per section
_SCHEMA = {
    None: ({"team", "initial", "waypoints", "certificate"},
           {"name", "description", "alpha", "gains", "sim", "check", "expect"}),
    "team": ({"n", "max_accel", "max_speed", "d_s", "d_c"}, set()),
    "initial": ({"positions"}, {"velocities"}),
    "waypoints": ({"paths"}, {"arrival_radius", "hold_final"}),
    "certificate": ({"kind"}, {"edges", "or_groups", "graphs"}),
    "alpha": (set(), {"gain", "power"}),
    "gains": (set(), {"k_p", "k_d"}),
    "sim": (set(), {"dt", "duration", "seed"}),
    "check": (set(), {"arena", "samples"}),
    "expect": (set(), set(PROPERTIES) | {"waypoints_visited", "min_graph_switches"}),
}


@dataclass
class Scenario:
    name: str
    config: SimConfig
    description: str = ""
    arena: tuple | None = None
    samples: int = 1000
    expect: dict = field(default_factory=dict)
    source: str | None = None

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, config=replace(self.config, seed=int(seed)))

    def check_arena(self):
        """Sampling box for validity audits; by default the bounding box of the
        initial positions and waypoints padded by ``d_c / 2``."""
        if self.arena is not None:
            return self.arena
        pts = np.vstack([self.config.initial.positions, *self.config.plan.paths])
        pad = 0.5 * self.config.params.d_c
        lo, hi = pts.min(axis=0) - pad, pts.max(axis=0) + pad
        return (float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))


class _Doc:
    """Plain data plus the source line of every node, keyed by field path."""

    def __init__(self, root):
        self.lines = {}
        self.data = self._convert(root, ())

    def _convert(self, node, path):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for k, v in node.value:
                key = yaml.safe_load(yaml.serialize(k)) if not isinstance(k, yaml.ScalarNode) else k.value
                if key in out:
                    raise ConfigurationError(f"duplicate key {key!r}", _dotted(path + (key,)),
                                             k.start_mark.line + 1)
                self.lines[path + (key,)] = k.start_mark.line + 1
                out[key] = self._convert(v, path + (key,))
                self.lines[path + (key,)] = k.start_mark.line + 1
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._convert(v, path + (i,)) for i, v in enumerate(node.value)]
        return yaml.safe_load(yaml.serialize(node))

    def line(self, path):
        while path not in self.lines and path:
            path = path[:-1]
        return self.lines.get(path)


def _dotted(path):
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


class _Reader:
    def __init__(self, doc: _Doc):
        self.doc = doc

    def fail(self, message, path):
        raise ConfigurationError(message, _dotted(path), self.doc.line(tuple(path)))

    def section(self, data, path):
        if not isinstance(data, dict):
            self.fail("expected a mapping", path)
        required, optional = _SCHEMA[path[-1] if path else None]
        for key in data:
            if key not in required | optional:
                self.fail(f"unknown key {key!r}", path + (key,))
        for key in sorted(required - set(data)):
            self.fail(f"missing required key {key!r}", path + (key,))
        return data

    def number(self, data, path, default=None, positive=False, integer=False, minimum=None):
        value = data.get(path[-1], default)
        if value is None:
            self.fail("missing value", path)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(f"expected a number, got {value!r}", path)
        if integer and int(value) != value:
            self.fail(f"expected an integer, got {value!r}", path)
        if not math.isfinite(value):
            self.fail("value must be finite", path)
        if positive and not value > 0:
            self.fail(f"must be positive, got {value}", path)
        if minimum is not None and value < minimum:
            self.fail(f"must be at least {minimum}, got {value}", path)
        return int(value) if integer else float(value)

    def points(self, value, path, count=None):
        try:
            arr = np.array(value, dtype=float)
        except (TypeError, ValueError):
            self.fail("expected a list of [x, y] pairs", path)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
            self.fail("expected a non-empty list of [x, y] pairs", path)
        if not np.all(np.isfinite(arr)):
            self.fail("coordinates must be finite", path)
        if count is not None and arr.shape[0] != count:
            self.fail(f"expected {count} entries, got {arr.shape[0]}", path)
        return arr

    def edges(self, value, path, n):
        if not isinstance(value, list):
            self.fail("expected a list of [i, j] robot pairs", path)
        out = []
        for k, e in enumerate(value):
            p = path + (k,)
            if not (isinstance(e, list) and len(e) == 2 and all(isinstance(x, int) and not isinstance(x, bool) for x in e)):
                self.fail("edge must be a pair of robot numbers", p)
            if not all(1 <= x <= n for x in e) or e[0] == e[1]:
                self.fail(f"edge {e} must join two distinct robots in 1..{n}", p)
            out.append(tuple(e))
        if len({tuple(sorted(e)) for e in out}) != len(out):
            self.fail("duplicate edge", path)
        return out


def parse_scenario(text: str, name: str | None = None, source: str | None = None) -> Scenario:
    """Parse scenario YAML into a :class:`Scenario`; raises :class:`ConfigurationError`."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigurationError(f"malformed YAML: {getattr(exc, 'problem', exc)}", None,
                                 mark.line + 1 if mark else None) from None
    if root is None:
        raise ConfigurationError("empty scenario file", None, 1)
    doc = _Doc(root)
    rd = _Reader(doc)
    top = rd.section(doc.data, ())

    team = rd.section(top["team"], ("team",))
    n = rd.number(team, ("team", "n"), integer=True, minimum=2)
    pvals = [rd.number(team, ("team", k), positive=True) for k in ("max_accel", "max_speed", "d_s", "d_c")]
    params = TeamParams(n, *pvals)

    init = rd.section(top["initial"], ("initial",))
    pos = rd.points(init["positions"], ("initial", "positions"), n)
    vel = rd.points(init.get("velocities", [[0.0, 0.0]] * n), ("initial", "velocities"), n)
    speed = np.linalg.norm(vel, axis=1)
    if np.any(speed > params.max_speed):
        rd.fail(f"robot {int(np.argmax(speed)) + 1} starts faster than max_speed", ("initial", "velocities"))
    initial = EnsembleState(pos, vel)

    wp = rd.section(top["waypoints"], ("waypoints",))
    paths_raw = wp["paths"]
    if not isinstance(paths_raw, list) or len(paths_raw) != n:
        rd.fail(f"expected one waypoint list per robot ({n})", ("waypoints", "paths"))
    paths = [rd.points(p, ("waypoints", "paths", i)) for i, p in enumerate(paths_raw)]
    radius = rd.number(wp, ("waypoints", "arrival_radius"), 0.05, positive=True)
    hold = wp.get("hold_final", True)
    if not isinstance(hold, bool):
        rd.fail("expected true or false", ("waypoints", "hold_final"))
    plan = WaypointPlan(tuple(paths), radius, hold)

    cert = rd.section(top["certificate"], ("certificate",))
    kind = cert["kind"]
    if kind not in ("none", "safety", "static", "dynamic"):
        rd.fail(f"kind must be none, safety, static or dynamic, got {kind!r}", ("certificate", "kind"))
    for key in ("edges", "or_groups"):
        if key in cert and kind != "static":
            rd.fail(f"{key} only applies to static certificates", ("certificate", key))
    if "graphs" in cert and kind != "dynamic":
        rd.fail("graphs only applies to dynamic certificates", ("certificate", "graphs"))
    edges = rd.edges(cert.get("edges", []), ("certificate", "edges"), n)
    groups = cert.get("or_groups", [])
    if not isinstance(groups, list):
        rd.fail("expected a list of edge lists", ("certificate", "or_groups"))
    groups = [rd.edges(g, ("certificate", "or_groups", i), n) for i, g in enumerate(groups)]
    for i, g in enumerate(groups):
        if not g:
            rd.fail("OR group is empty", ("certificate", "or_groups", i))
    graphs = cert.get("graphs", [])
    if not isinstance(graphs, list):
        rd.fail("expected a list of graphs", ("certificate", "graphs"))
    graphs = [rd.edges(g, ("certificate", "graphs", i), n) for i, g in enumerate(graphs)]
    if kind == "dynamic" and not graphs:
        rd.fail("dynamic certificate needs at least one graph", ("certificate",))
    for i, g in enumerate(graphs):
        if not g:
            rd.fail("allowable graph has no edges", ("certificate", "graphs", i))
    spec = CertificateSpec(kind, tuple(edges), tuple(groups), tuple(graphs))

    alpha_d = rd.section(top.get("alpha", {}), ("alpha",))
    alpha = ClassKappa(rd.number(alpha_d, ("alpha", "power"), 1, integer=True, minimum=1),
                       rd.number(alpha_d, ("alpha", "gain"), 1.0, positive=True))
    gains_d = rd.section(top.get("gains", {}), ("gains",))
    gains = ControllerGains(rd.number(gains_d, ("gains", "k_p"), 1.0, positive=True),
                            rd.number(gains_d, ("gains", "k_d"), 2.0, positive=True))
    sim_d = rd.section(top.get("sim", {}), ("sim",))
    dt = rd.number(sim_d, ("sim", "dt"), DEFAULT_DT, positive=True)
    duration = rd.number(sim_d, ("sim", "duration"), 10.0, minimum=0.0)
    seed = rd.number(sim_d, ("sim", "seed"), 0, integer=True, minimum=0)

    check = rd.section(top.get("check", {}), ("check",))
    arena = None
    if "arena" in check:
        a = check["arena"]
        if not (isinstance(a, list) and len(a) == 4
                and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in a)):
            rd.fail("arena must be [x0, x1, y0, y1]", ("check", "arena"))
        if not (a[0] < a[1] and a[2] < a[3]):
            rd.fail("arena must satisfy x0 < x1 and y0 < y1", ("check", "arena"))
        arena = tuple(float(x) for x in a)
    samples = rd.number(check, ("check", "samples"), 1000, integer=True, minimum=1)

    expect = _read_expect(rd, rd.section(top.get("expect", {}), ("expect",)), plan)

    desc = top.get("description", "")
    scn_name = top.get("name", name or "scenario")
    for key, value in (("name", scn_name), ("description", desc)):
        if not isinstance(value, str):
            rd.fail("expected text", (key,))
    try:
        config = SimConfig(params, plan, initial, spec, alpha, gains, dt, duration, seed)
    except CompCBFError as exc:
        raise ConfigurationError(str(exc)) from None
    return Scenario(scn_name, config, desc, arena, samples, expect, source)


def _read_expect(rd, data, plan):
    out = {}
    for key in PROPERTIES:
        if key in data:
            if data[key] not in ("pass", "fail"):
                rd.fail("expected outcome must be 'pass' or 'fail'", ("expect", key))
            out[key] = data[key]
    if "waypoints_visited" in data:
        v = data["waypoints_visited"]
        if not (isinstance(v, list) and len(v) == plan.n_robots and all(isinstance(x, int) for x in v)):
            rd.fail(f"expected {plan.n_robots} integer counts", ("expect", "waypoints_visited"))
        for i, (x, p) in enumerate(zip(v, plan.paths)):
            if not 0 <= x <= len(p):
                rd.fail(f"robot {i + 1} has {len(p)} waypoints", ("expect", "waypoints_visited", i))
        out["waypoints_visited"] = list(v)
    if "min_graph_switches" in data:
        out["min_graph_switches"] = rd.number(data, ("expect", "min_graph_switches"), integer=True, minimum=0)
    return out


def scenario_to_dict(scn: Scenario) -> dict:
    """Plain-data form; ``parse_scenario(dump_scenario(s))`` reproduces ``s``."""
    cfg = scn.config
    p = cfg.params
    cert = {"kind": cfg.certificate.kind}
    if cfg.certificate.edges:
        cert["edges"] = [list(e) for e in cfg.certificate.edges]
    if cfg.certificate.or_groups:
        cert["or_groups"] = [[list(e) for e in g] for g in cfg.certificate.or_groups]
    if cfg.certificate.graphs:
        cert["graphs"] = [[list(e) for e in g] for g in cfg.certificate.graphs]
    out = {
        "name": scn.name,
        "description": scn.description,
        "team": {"n": p.n_robots, "max_accel": p.max_accel, "max_speed": p.max_speed,
                 "d_s": p.d_s, "d_c": p.d_c},
        "initial": {"positions": cfg.initial.positions.tolist(),
                    "velocities": cfg.initial.velocities.tolist()},
        "waypoints": {"paths": [path.tolist() for path in cfg.plan.paths],
                      "arrival_radius": cfg.plan.arrival_radius,
                      "hold_final": cfg.plan.hold_final},
        "certificate": cert,
        "alpha": {"gain": cfg.alpha.gain, "power": cfg.alpha.power},
        "gains": {"k_p": cfg.gains.k_p, "k_d": cfg.gains.k_d},
        "sim": {"dt": cfg.dt, "duration": cfg.duration, "seed": cfg.seed},
        "check": {"samples": scn.samples},
        "expect": dict(scn.expect),
    }
    if scn.arena is not None:
        out["check"]["arena"] = list(scn.arena)
    return out


def dump_scenario(scn: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(scn), sort_keys=False, default_flow_style=None)


def bundled_scenarios():
    """Names of the scenarios shipped with the package."""
    folder = resources.files("compcbf") / "scenarios"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".yaml"))


def load_scenario(ref) -> Scenario:
    """Load a scenario from a file path, or a bundled scenario by name."""
    path = Path(ref)
    if path.is_file():
        text = path.read_text()
        return parse_scenario(text, name=path.stem, source=str(path))
    if str(ref) in bundled_scenarios():
        res = resources.files("compcbf") / "scenarios" / f"{ref}.yaml"
        return parse_scenario(res.read_text(), name=str(ref), source=f"bundled:{ref}")
    raise ConfigurationError(f"no scenario file or bundled scenario named {str(ref)!r}")
