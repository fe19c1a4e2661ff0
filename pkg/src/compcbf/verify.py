"""Independent numerical oracles and the self-test suites built on them.

Nothing here calls the code paths it checks: gradients are compared with
central finite differences of values, the QP solver with an exhaustive grid
search, and set compositions with boolean truth tables over atom signs.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .barrier_core import (
    ClassKappa,
    compose_and,
    compose_or,
    eval_constraint,
    eval_value,
    membership,
)
from .certificates import (
    ConnectivityPairAtom,
    SafetyPairAtom,
    TeamParams,
    UniformStateSampler,
    build_static_certificate,
    ConnectivityGraph,
    connectivity_h,
    safety_h,
)
from .qp import KKT_TOL, QpProblem, QpSolver
from .state import EnsembleState

FD_STEP = 1e-6
GRAD_RTOL = 1e-5
GRID_STEP = 0.01
GRID_GAP_TOL = 1e-3


# ---------------------------------------------------------------------------
# finite differences


def central_difference(fun, x, step=FD_STEP):
    """Central-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = step
        out[k] = (fun(x + e) - fun(x - e)) / (2.0 * step)
    return out


def relative_error(approx, exact, floor=1.0):
    """``max |approx - exact| / max(|exact|_inf, floor)``."""
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    scale = max(float(np.max(np.abs(exact), initial=0.0)), floor)
    return float(np.max(np.abs(approx - exact), initial=0.0) / scale)


def atom_gradient_error(h_fun, state, i, j, params):
    """Relative error of an analytic pair gradient against central differences."""
    _, grad = h_fun(state, i, j, params)
    fd = central_difference(lambda x: h_fun(EnsembleState.from_vector(x), i, j, params)[0],
                            state.as_vector())
    return relative_error(grad, fd)


def constraint_errors(tree, state, alpha=ClassKappa()):
    """Errors of the normalized constraint against differences of ``log B``.

    With double-integrator dynamics ``L_g B / B`` is the velocity block of
    ``grad log B`` and ``L_f B / B`` is ``grad log B`` contracted with ``(v, 0)``.
    """
    con = eval_constraint(tree, state, alpha)
    x0 = state.as_vector()
    n2 = 2 * state.n_robots

    def logb(x):
        return eval_value(tree, EnsembleState.from_vector(x)).log_value

    g = central_difference(logb, x0)
    drift = float(g[:n2] @ state.velocities.ravel())
    err_a = relative_error(con.coeff, g[n2:])
    err_c = relative_error([con.offset - alpha.ratio_from_log(logb(x0))], [drift])
    return err_a, err_c


# ---------------------------------------------------------------------------
# grid oracle for small QPs


def grid_qp_oracle(problem: QpProblem, step=GRID_STEP):
    """Exact minimum of ``||u - u_hat||^2`` over the feasible points of a grid.

    The grid covers the box with spacing ``step``.  The last coordinate enters
    every constraint linearly, so for each point of the leading coordinates
    the feasible grid values of the last one form an interval and the best
    of them is the grid value nearest ``u_hat[-1]`` inside it.  This gives the
    same answer as enumerating the full grid.  Returns ``(value, point)`` or
    ``(inf, None)`` when no grid point is feasible.
    """
    lo, hi = problem.lower, problem.upper
    m = problem.dim
    axes = [lo[k] + step * np.arange(int(math.floor((hi[k] - lo[k]) / step + 1e-9)) + 1)
            for k in range(m)]
    lead = np.array(np.meshgrid(*axes[:-1], indexing="ij")).reshape(m - 1, -1).T
    last = axes[-1]
    a, c = problem.a, problem.c
    rest = lead @ a[:, :-1].T + c  # (P, k)
    lo_idx = np.zeros(len(lead))
    hi_idx = np.full(len(lead), float(len(last) - 1))
    for k in range(a.shape[0]):
        coef = a[k, -1]
        # need coef * last[idx] + rest >= 0
        if coef > 0:
            bound = (-rest[:, k] / coef - last[0]) / step
            lo_idx = np.maximum(lo_idx, np.ceil(bound - 1e-9))
        elif coef < 0:
            bound = (-rest[:, k] / coef - last[0]) / step
            hi_idx = np.minimum(hi_idx, np.floor(bound + 1e-9))
        else:
            bad = rest[:, k] < 0
            hi_idx[bad] = -1.0
    target = np.clip(np.round((problem.nominal[-1] - last[0]) / step), lo_idx, hi_idx)
    best_val, best_pt = math.inf, None
    ok = lo_idx <= hi_idx
    # rounding at interval edges may admit a marginally infeasible point; check exactly
    for shift in (0.0, -1.0, 1.0):
        idx = np.clip(target + shift, lo_idx, hi_idx)
        pts = np.column_stack([lead, last[0] + step * idx])
        feas = ok & np.all(pts @ a.T + c >= 0.0, axis=1)
        if not np.any(feas):
            continue
        vals = np.sum((pts - problem.nominal) ** 2, axis=1)
        vals[~feas] = np.inf
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val, best_pt = float(vals[k]), pts[k]
    return best_val, best_pt


def random_qp(rng, dim=4, n_ineq=3, bound=0.3, spread=0.03):
    """Random small-correction problem on the box ``[-bound, bound]^dim``.

    Constraints are random halfspaces whose boundaries pass near an anchor
    point inside the box; the nominal is the anchor plus Gaussian noise of
    scale ``spread``, so the correction is small, as in a safety filter.
    """
    anchor = rng.uniform(-0.6 * bound, 0.6 * bound, dim)
    rows = []
    for _ in range(n_ineq):
        a = rng.normal(size=dim)
        a /= np.linalg.norm(a)
        offset = rng.uniform(0.0, spread)
        rows.append((a, -float(a @ anchor) + offset))
    nominal = anchor + rng.normal(scale=spread, size=dim)
    return QpProblem.with_box(nominal, rows, bound)


# ---------------------------------------------------------------------------
# self-test suites


@dataclass
class SuiteResult:
    name: str
    metric: str
    value: float
    tolerance: float
    passed: bool


def _in_set_states(tree, params, count, seed, arena):
    sampler = UniformStateSampler(params, arena=arena, seed=seed, tree=tree)
    out = []
    while len(out) < count:
        s = sampler()
        if membership(tree, s):
            out.append(s)
    return out


def gradient_suite(count=100, seed=0):
    params = TeamParams(4, 1.0, 0.5, 0.15, 0.6)
    graph = ConnectivityGraph(4, {(1, 2), (2, 3), (3, 4)})
    tree = build_static_certificate(params, graph)
    worst_atom = worst_con = 0.0
    for state in _in_set_states(tree, params, count, seed, (-0.4, 0.4, -0.4, 0.4)):
        for i, j in params.pairs():
            worst_atom = max(worst_atom, atom_gradient_error(safety_h, state, i, j, params))
        for a, b in graph.sorted_edges():
            worst_atom = max(worst_atom, atom_gradient_error(connectivity_h, state, a - 1, b - 1, params))
        worst_con = max(worst_con, *constraint_errors(tree, state))
    return [
        SuiteResult("atom gradients", "max rel. error", worst_atom, GRAD_RTOL, worst_atom < GRAD_RTOL),
        SuiteResult("constraint coefficients", "max rel. error", worst_con, GRAD_RTOL, worst_con < GRAD_RTOL),
    ]


def qp_suite(count=100, seed=0):
    rng = np.random.default_rng(seed)
    worst_gap = worst_kkt = 0.0
    slack_total = slack_ok = 0
    agree = True
    for _ in range(count):
        prob = random_qp(rng)
        sol = QpSolver().solve(prob)
        grid_val, _ = grid_qp_oracle(prob)
        if sol.optimal:
            worst_kkt = max(worst_kkt, sol.kkt_residual)
            if math.isfinite(grid_val):
                worst_gap = max(worst_gap, grid_val - prob.objective(sol.u))
                agree &= prob.objective(sol.u) <= grid_val + 1e-6
        else:
            agree &= not math.isfinite(grid_val)
        feasible_hat = QpProblem(np.clip(prob.nominal, prob.lower, prob.upper), prob.a,
                                 prob.c, prob.lower, prob.upper)
        if np.all(feasible_hat.slacks(feasible_hat.nominal) >= 0):
            slack_total += 1
            slack_ok += bool(np.array_equal(QpSolver().solve(feasible_hat).u, feasible_hat.nominal))
    idem = slack_ok / slack_total if slack_total else 1.0
    return [
        SuiteResult("QP vs grid oracle", "max objective gap", worst_gap, GRID_GAP_TOL,
                    worst_gap < GRID_GAP_TOL and agree),
        SuiteResult("QP KKT residual", "max residual", worst_kkt, KKT_TOL, worst_kkt < KKT_TOL),
        SuiteResult("QP idempotence", "fraction unchanged", idem, 1.0, idem == 1.0),
    ]


def random_two_level_tree(rng, atoms):
    """Random root operator over 2-4 random children, each an operator over 1-4 atoms."""
    children = []
    for _ in range(int(rng.integers(2, 5))):
        picks = rng.choice(len(atoms), size=int(rng.integers(1, 5)), replace=False)
        members = [atoms[k] for k in picks]
        children.append(compose_and(members) if rng.random() < 0.5 else compose_or(members))
    root = compose_and(children) if rng.random() < 0.5 else compose_or(children)
    return root


def composition_suite(count=1000, seed=0):
    """Membership of AND/OR nodes against boolean evaluation of their children."""
    rng = np.random.default_rng(seed)
    params = TeamParams(4, 1.0, 0.5, 0.15, 0.6)
    atoms = [SafetyPairAtom(i, j, params) for i, j in params.pairs()] + \
        [ConnectivityPairAtom(i, j, params) for i, j in params.pairs()]
    sampler = UniformStateSampler(params, arena=(-0.35, 0.35, -0.35, 0.35), seed=seed)
    agree = 0
    for _ in range(count):
        state = sampler()
        tree = random_two_level_tree(rng, atoms)
        ok = True
        child_members = []
        for child in tree.children:
            leaves = [membership(leaf, state) for leaf in child.children]
            expect = all(leaves) if type(child).__name__ == "Product" else any(leaves)
            got = membership(child, state)
            ok &= got == expect
            child_members.append(got)
        expect = all(child_members) if type(tree).__name__ == "Product" else any(child_members)
        ok &= membership(tree, state) == expect
        agree += ok
    frac = agree / count
    return [SuiteResult("set composition truth table", "agreement", frac, 1.0, frac == 1.0)]


def truth_table_exp2(params=None):
    """Check the experiment-2 tree against its prose conditions on all 2^5 patterns.

    Connectivity atoms are switched on or off by placing robots; safety atoms
    are held positive.  Returns the number of disagreeing patterns.
    """
    from .scenario import exp2_tree

    params = params or TeamParams(4, 1.0, 0.5, 0.15, 0.6)
    tree = exp2_tree(params)
    keys = ["Bbar23", "Bbar12", "Bbar13", "Bbar24", "Bbar34"]
    mismatches = 0
    for bits in itertools.product([False, True], repeat=5):
        on = dict(zip(keys, bits))
        expect = on["Bbar23"] and (on["Bbar12"] or on["Bbar13"]) and (on["Bbar24"] or on["Bbar34"])
        values = {k: (1.0 if v else 0.0) for k, v in on.items()}
        got = _tree_value_with_overrides(tree, values) > 0
        mismatches += got != expect
    return mismatches


def _tree_value_with_overrides(tree, values):
    from .barrier_core import Atom, Product

    def rec(node):
        if isinstance(node, Atom):
            return values.get(node.atom.key, 1.0)
        vals = [rec(c) for c in node.children]
        return math.prod(vals) if isinstance(node, Product) else sum(vals)

    return rec(tree)


def run_selftest(quick=False):
    n = 20 if quick else 100
    results = gradient_suite(count=n) + qp_suite(count=n) + composition_suite(count=10 * n)
    mism = truth_table_exp2()
    results.append(SuiteResult("exp2 truth table", "mismatched patterns", mism, 0, mism == 0))
    return results
