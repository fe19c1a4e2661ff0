import numpy as np
import pytest

from compcbf.errors import ConfigurationError
from compcbf.scenario import bundled_scenarios, dump_scenario, load_scenario, parse_scenario

MINIMAL = """\
team: {n: 2, max_accel: 1.0, max_speed: 0.2, d_s: 0.15, d_c: 0.6}
initial:
  positions: [[0.0, 0.0], [0.4, 0.0]]
waypoints:
  paths:
    - [[0.0, 0.2]]
    - [[0.4, 0.2]]
certificate:
  kind: safety
"""

BUNDLED = ["contradictory", "dynamic_switch", "exp1_baseline", "exp1_safety",
           "exp2_safety_connectivity"]


def test_bundled_names():
    assert bundled_scenarios() == BUNDLED


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_scenarios_parse_and_round_trip(name):
    scn = load_scenario(name)
    assert scn.name == name and scn.source == f"bundled:{name}"
    again = parse_scenario(dump_scenario(scn))
    assert _same_config(again.config, scn.config)
    assert again.expect == scn.expect and again.arena == scn.arena and again.samples == scn.samples
    assert dump_scenario(again) == dump_scenario(scn)


def _same_config(a, b):
    return (a.params == b.params and a.certificate == b.certificate and a.alpha == b.alpha
            and a.gains == b.gains and (a.dt, a.duration, a.seed) == (b.dt, b.duration, b.seed)
            and np.array_equal(a.initial.as_vector(), b.initial.as_vector())
            and all(np.array_equal(p, q) for p, q in zip(a.plan.paths, b.plan.paths))
            and a.plan.arrival_radius == b.plan.arrival_radius)


def test_minimal_defaults():
    scn = parse_scenario(MINIMAL)
    cfg = scn.config
    assert scn.name == "scenario"
    assert cfg.dt == 0.02 and cfg.duration == 10.0 and cfg.seed == 0
    assert cfg.alpha.power == 1 and cfg.gains.k_p == 1.0
    assert not np.any(cfg.initial.velocities)
    assert scn.samples == 1000
    # arena defaults to the bounding box of positions and waypoints plus d_c / 2
    assert scn.check_arena() == pytest.approx((-0.3, 0.7, -0.3, 0.5))


def test_load_from_path(tmp_path):
    f = tmp_path / "mine.yaml"
    f.write_text(MINIMAL)
    scn = load_scenario(f)
    assert scn.name == "mine" and scn.source == str(f)
    with pytest.raises(ConfigurationError):
        load_scenario(tmp_path / "missing.yaml")


def test_with_seed():
    scn = load_scenario("exp1_safety")
    assert scn.with_seed(42).config.seed == 42 and scn.config.seed != 42


def _error(text):
    with pytest.raises(ConfigurationError) as err:
        parse_scenario(text)
    return err.value


def test_unknown_key_reports_field_and_line():
    err = _error(MINIMAL.replace("  kind: safety\n", "  kind: safety\n  colour: red\n"))
    assert err.field == "certificate.colour" and err.line == 10
    assert "colour" in str(err) and "line 10" in str(err)


def test_unknown_top_level_key():
    assert _error(MINIMAL + "extra: 1\n").field == "extra"


def test_missing_section():
    err = _error(MINIMAL.replace("certificate:\n  kind: safety\n", ""))
    assert err.field == "certificate"


@pytest.mark.parametrize("old, new, field", [
    ("[[0.0, 0.0], [0.4, 0.0]]", "[[0.0, 0.0]]", "initial.positions"),
    ("    - [[0.4, 0.2]]\n", "", "waypoints.paths"),
    ("n: 2", "n: 1", "team.n"),
    ("n: 2", "n: two", "team.n"),
    ("d_s: 0.15", "d_s: -0.15", "team.d_s"),
    ("kind: safety", "kind: magic", "certificate.kind"),
    ("kind: safety", "kind: static\n  edges: [[1, 3]]", "certificate.edges[0]"),
    ("kind: safety", "kind: safety\n  edges: [[1, 2]]", "certificate.edges"),
    ("kind: safety", "kind: dynamic", "certificate"),
])
def test_field_errors(old, new, field):
    err = _error(MINIMAL.replace(old, new))
    assert err.field is not None and err.field.startswith(field)
    assert err.line is not None


def test_initial_speed_above_limit():
    text = MINIMAL.replace("  positions: [[0.0, 0.0], [0.4, 0.0]]\n",
                           "  positions: [[0.0, 0.0], [0.4, 0.0]]\n  velocities: [[0.3, 0.0], [0, 0]]\n")
    assert _error(text).field == "initial.velocities"


def test_malformed_yaml_reports_line():
    err = _error("team: {n: 2\ninitial: [")
    assert err.line is not None and "malformed" in str(err)
    assert _error("").line == 1


def test_bad_expectations():
    assert _error(MINIMAL + "expect: {safety: maybe}\n").field == "expect.safety"
    assert _error(MINIMAL + "expect: {waypoints_visited: [1]}\n").field == "expect.waypoints_visited"
    assert _error(MINIMAL + "expect: {waypoints_visited: [1, 2]}\n").field == "expect.waypoints_visited[1]"


def test_bad_arena():
    assert _error(MINIMAL + "check: {arena: [1, 0, 0, 1]}\n").field == "check.arena"
    assert _error(MINIMAL + "check: {arena: [0, 1]}\n").field == "check.arena"
