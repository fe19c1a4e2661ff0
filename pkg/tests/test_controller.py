import numpy as np
import pytest

from compcbf.barrier_core import ClassKappa, eval_constraint, membership
from compcbf.certificates import CertificateSpec, TeamParams, UniformStateSampler, build_safety_certificate
from compcbf.controller import (
    ControllerGains,
    WaypointPlan,
    WaypointTracker,
    emergency_stop,
    nominal_control,
    safe_control,
)
from compcbf.errors import InputError
from compcbf.qp import FEAS_TOL
from compcbf.scenario import exp2_tree
from compcbf.state import EnsembleState

from conftest import two_robots

P2 = TeamParams(2, 2.0, 1.0, 0.15, 0.6)
G = ControllerGains(k_p=1.0, k_d=2.0)


def _plan(*targets):
    return WaypointPlan([[t] for t in targets])


@pytest.mark.parametrize("p, w, v, expected", [
    ((1, 1), (1, 1), (0, 0), (0, 0)),
    ((0, 0), (1, 0), (0, 0), (1, 0)),
    ((2, 0), (1, 0), (1, 0), (-2, 0)),  # -3 clamped to -2
])
def test_nominal_control_examples(p, w, v, expected):
    s = EnsembleState([p, (5, 5)], [v, (0, 0)])
    u = nominal_control(s, _plan(w, (5, 5)), G, P2)
    np.testing.assert_allclose(u[:2], expected)
    np.testing.assert_allclose(u[2:], 0.0)


def test_plan_and_gain_validation():
    with pytest.raises(InputError):
        WaypointPlan([[(0, 0)], []])
    with pytest.raises(InputError):
        WaypointPlan([[(0, 0)]], arrival_radius=0.0)
    with pytest.raises(InputError):
        WaypointPlan([[(0, 0, 0)]])
    with pytest.raises(InputError):
        ControllerGains(0.0, 1.0)
    plan = WaypointPlan([[(0, 0), (1, 1)], [(2, 2)]])
    assert plan.n_robots == 2 and plan.total_waypoints == 3
    with pytest.raises(ValueError):
        plan.paths[0][0, 0] = 9.0


def test_tracker_advances_monotonically():
    plan = WaypointPlan([[(0, 0), (1, 0), (2, 0)], [(5, 5)]], arrival_radius=0.1)
    tr = WaypointTracker(plan)
    far = (5, 0)
    # standing on waypoint 3 does not count before 1 and 2
    tr.update(EnsembleState.at_rest([(2, 0), far]))
    assert tr.index.tolist() == [0, 0] and tr.visited.tolist() == [0, 0]
    tr.update(EnsembleState.at_rest([(0.05, 0), far]))
    assert tr.index.tolist() == [1, 0] and tr.visited.tolist() == [1, 0]
    tr.update(EnsembleState.at_rest([(1, 0), (5, 5)]))
    assert tr.index.tolist() == [2, 0] and tr.visited.tolist() == [2, 1]
    tr.update(EnsembleState.at_rest([(2, 0), (5, 5)]))
    assert tr.index.tolist() == [2, 0] and tr.visited.tolist() == [3, 1]
    assert tr.finished().tolist() == [True, True]
    np.testing.assert_array_equal(tr.targets(), [(2, 0), (5, 5)])
    # leaving the last waypoint keeps the count
    tr.update(EnsembleState.at_rest([(9, 9), (9, 9)]))
    assert tr.visited.tolist() == [3, 1]


def test_finished_robot_brakes_without_hold():
    plan = WaypointPlan([[(0, 0)], [(5, 5)]], hold_final=False)
    tr = WaypointTracker(plan)
    s = EnsembleState([(0, 0), (0, 0)], [(0.3, 0), (0, 0)])
    u = nominal_control(s, plan, G, P2, tr)
    np.testing.assert_allclose(u[:2], [-0.6, 0.0])


def test_emergency_stop_is_clamped_damping():
    s = EnsembleState([(0, 0), (1, 0)], [(0.5, -2.0), (0, 0)])
    np.testing.assert_allclose(emergency_stop(s, G, P2), [-1.0, 2.0, 0, 0])


def test_far_apart_robots_are_not_modified(rng):
    tree = build_safety_certificate(P2)
    s = two_robots((-1, 0), (1, 0), (0.1, 0), (0, 0.1))
    for _ in range(50):
        u_hat = rng.uniform(-1, 1, 4)
        u, info = safe_control(s, u_hat, tree, ClassKappa(), P2)
        assert u is u_hat and not info.modified and not info.emergency


def test_head_on_approach_is_braked_symmetrically():
    params = TeamParams(2, 1.0, 1.0, 0.15, 0.6)
    tree = build_safety_certificate(params)
    # closing at 0.8 m/s, 0.32 m apart: h = 2 sqrt(0.17) - 0.8 ~ 0.0246
    s = two_robots((-0.16, 0), (0.16, 0), (0.4, 0), (-0.4, 0))
    u_hat = np.array([1.0, 0.0, -1.0, 0.0])
    u, info = safe_control(s, u_hat, tree, ClassKappa(), params)
    con = eval_constraint(tree, s, ClassKappa())
    assert info.modified and not info.emergency
    assert con(u) >= -FEAS_TOL
    assert u[0] < 0 < u[2]  # both decelerate
    assert u[0] == pytest.approx(-u[2], abs=1e-12)
    assert u[1] == pytest.approx(0, abs=1e-12) and u[3] == pytest.approx(0, abs=1e-12)


def test_exp2_filter_optimality_probe():
    params = TeamParams(4, 1.0, 0.2, 0.15, 0.6)
    tree = exp2_tree(params)
    sampler = UniformStateSampler(params, (-0.5, 0.5, -0.5, 0.5), seed=11, tree=tree)
    rng = np.random.default_rng(5)
    probes_done = 0
    for _ in range(10):
        s = sampler()
        assert membership(tree, s)
        u_hat = rng.uniform(-3, 3, 8)
        u, info = safe_control(s, u_hat, tree, ClassKappa(2), params)
        assert not info.emergency
        con = eval_constraint(tree, s, ClassKappa(2))
        assert con(u) >= -FEAS_TOL and np.all(np.abs(u) <= 1.0)
        cand = rng.uniform(-1, 1, (10000, 8))
        feas = cand[cand @ con.coeff + con.offset >= 0]
        probes_done += len(feas)
        dist = np.linalg.norm(u - u_hat)
        assert np.all(np.linalg.norm(feas - u_hat, axis=1) >= dist - 1e-12)
    assert probes_done > 10000


def test_translation_equivariance(rng):
    params = TeamParams(3, 1.0, 0.2, 0.15, 0.6)
    tree = CertificateSpec("static", edges=[(1, 2), (2, 3)]).build(params)
    pos = np.array([[0, 0], [0.3, 0.05], [0.5, 0.3]])
    vel = np.array([[0.1, 0.05], [-0.1, 0], [0.15, 0.1]])
    wps = [[(1, 1)], [(-1, 0)], [(0.2, -0.8)]]
    shift = np.array([3.7, -12.25])
    a = EnsembleState(pos, vel)
    b = EnsembleState(pos + shift, vel)
    gains = ControllerGains(1.5, 2.0)
    ua = nominal_control(a, WaypointPlan(wps), gains, params)
    ub = nominal_control(b, WaypointPlan([[np.add(w, shift) for w in p] for p in wps]), gains, params)
    np.testing.assert_allclose(ua, ub, atol=1e-12)
    sa, _ = safe_control(a, ua, tree, ClassKappa(2), params)
    sb, _ = safe_control(b, ub, tree, ClassKappa(2), params)
    np.testing.assert_allclose(sa, sb, atol=1e-9)


def test_emergency_stop_outside_set():
    tree = build_safety_certificate(P2)
    s = two_robots((0, 0), (0.1, 0), (0.3, 0), (0, 0))
    u, info = safe_control(s, np.ones(4), tree, ClassKappa(), P2, gains=G)
    assert info.emergency and info.status == "outside-set"
    np.testing.assert_allclose(u, emergency_stop(s, G, P2))


def test_emergency_stop_when_admissible_set_is_empty():
    params = TeamParams(2, 1.0, 0.2, 0.15, 0.6)
    tree = CertificateSpec("static", edges=[(1, 2)]).build(params)
    s = two_robots((0, 0), (0.59, 0), (-0.0987, 0.1), (0.0987, -0.1))
    u, info = safe_control(s, np.zeros(4), tree, ClassKappa(2), params, gains=G)
    assert info.emergency and info.status == "infeasible"
    np.testing.assert_allclose(u, emergency_stop(s, G, params))


def test_safe_control_rejects_bad_nominal():
    with pytest.raises(InputError):
        safe_control(two_robots((0, 0), (1, 0)), np.zeros(3), build_safety_certificate(P2),
                     ClassKappa(), P2)
