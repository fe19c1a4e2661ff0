"""Safety and connectivity barrier certificates for double-integrator teams.

Robot indices are 0-based in the Python API; atom keys and graph edges use
1-based robot numbers (``B12`` is the safety atom between robots 0 and 1).
Pair directions follow ``dp = p_i - p_j`` and ``dv = v_i - v_j``.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .barrier_core import (
    AtomTerms,
    BarrierAtom,
    ClassKappa,
    compose_and,
    compose_or,
    eval_constraint,
    evaluate_atoms,
    eval_value,
    failing_atoms,
)
from .errors import DegenerateStateError, InputError
from .state import EnsembleState

log = logging.getLogger(__name__)

DOMAIN_TOL = 1e-12


@dataclass(frozen=True)
class TeamParams:
    """Physical limits of the team.

    ``max_accel`` is the braking authority used inside the pair barriers and
    the per-coordinate bound on each robot's acceleration command.
    """

    n_robots: int
    max_accel: float
    max_speed: float
    d_s: float
    d_c: float

    def __post_init__(self):
        if int(self.n_robots) != self.n_robots or self.n_robots < 2:
            raise InputError(f"need at least two robots, got {self.n_robots}")
        for name in ("max_accel", "max_speed", "d_s", "d_c"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InputError(f"{name} must be positive and finite, got {value}")

    @property
    def distances_ordered(self) -> bool:
        """Whether ``d_s < d_c``; otherwise no pair can be both safe and connected."""
        return self.d_s < self.d_c

    def pairs(self):
        return list(itertools.combinations(range(self.n_robots), 2))


class PairAtom(BarrierAtom):
    """Pairwise braking barrier between robots ``i < j``."""

    kind = None
    prefix = ""

    def __init__(self, i, j, params: TeamParams):
        if not (0 <= i < j < params.n_robots):
            raise InputError(f"pair indices must satisfy 0 <= i < j < N, got ({i}, {j})")
        self.i = int(i)
        self.j = int(j)
        self.params = params
        self.key = f"{self.prefix}{i + 1}{j + 1}" if params.n_robots < 10 else f"{self.prefix}{i + 1}_{j + 1}"

    def terms(self, state):
        return self.batch_terms([self], state)[0]

    @classmethod
    def batch_terms(cls, atoms, state):
        # atoms may mix kinds and parameter sets; group by params for the kernel
        out = [None] * len(atoms)
        groups = {}
        for idx, atom in enumerate(atoms):
            groups.setdefault(atom.params, []).append(idx)
        for params, idxs in groups.items():
            sel = [atoms[k] for k in idxs]
            rows = _pair_rows(state, params, [a.i for a in sel], [a.j for a in sel],
                              [a.kind for a in sel])
            for k, row in zip(idxs, rows):
                out[k] = row
        return out


class SafetyPairAtom(PairAtom):
    """``h = 2 sqrt(a (|dp| - D_s)) + dp.dv / |dp|``; vanishes once braking cannot avoid ``D_s``."""

    kind = _kernels.SAFETY
    prefix = "B"


class ConnectivityPairAtom(PairAtom):
    """``h = 2 sqrt(a (D_c - |dp|)) - dp.dv / |dp|``; vanishes once braking cannot keep ``D_c``."""

    kind = _kernels.CONNECTIVITY
    prefix = "Bbar"


def _pair_rows(state, params, first, second, kinds):
    n = state.n_robots
    first = np.asarray(first, dtype=np.intp)
    second = np.asarray(second, dtype=np.intp)
    h, gdp, gdv, _ = _kernels.pair_terms(
        state.positions, state.velocities, first, second, np.asarray(kinds, dtype=np.int_),
        params.max_accel, params.d_s, params.d_c, DOMAIN_TOL)
    h, gdp, gdv = np.asarray(h), np.asarray(gdp), np.asarray(gdv)
    bad = np.flatnonzero(np.isnan(h))
    if bad.size:
        i, j = first[bad[0]], second[bad[0]]
        raise DegenerateStateError(f"robots {i + 1} and {j + 1} are coincident")
    m = h.size
    rows = np.arange(m)[:, None]
    xy = np.arange(2)
    grad = np.zeros((m, 4 * n))
    grad[rows, 2 * first[:, None] + xy] = gdp
    grad[rows, 2 * second[:, None] + xy] = -gdp
    grad[rows, 2 * n + 2 * first[:, None] + xy] = gdv
    grad[rows, 2 * n + 2 * second[:, None] + xy] = -gdv
    grad.setflags(write=False)
    vel = state.velocities
    lf = np.einsum("ij,ij->i", gdp, vel[first] - vel[second])
    return [AtomTerms(float(h[k]), grad[k], float(lf[k]), grad[k, 2 * n:]) for k in range(m)]


def _pair_h(kind, state, i, j, params):
    if i == j:
        raise InputError("pair indices must differ")
    if state.n_robots != params.n_robots:
        raise InputError("state and params disagree on the robot count")
    if np.array_equal(state.positions[i], state.positions[j]):
        raise DegenerateStateError(f"robots {i + 1} and {j + 1} are coincident")
    row = _pair_rows(state, params, [i], [j], [kind])[0]
    return row.h, row.gradient


def safety_h(state: EnsembleState, i: int, j: int, params: TeamParams):
    """Pairwise safety barrier ``h_ij`` and its gradient over the full state.

    Returns ``-inf`` with a zero gradient when ``|dp| < D_s``.
    """
    return _pair_h(_kernels.SAFETY, state, i, j, params)


def connectivity_h(state: EnsembleState, i: int, j: int, params: TeamParams):
    """Pairwise connectivity barrier and its gradient; ``-inf`` when ``|dp| > D_c``."""
    return _pair_h(_kernels.CONNECTIVITY, state, i, j, params)


# ---------------------------------------------------------------------------
# graphs


@dataclass(frozen=True)
class ConnectivityGraph:
    """Required communication edges, as 1-based unordered robot pairs."""

    n_robots: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        edges = []
        for e in self.edges:
            a, b = (int(x) for x in e)
            if a == b:
                raise InputError(f"self-loop ({a}, {b}) in connectivity graph")
            if not (1 <= a <= self.n_robots and 1 <= b <= self.n_robots):
                raise InputError(f"edge ({a}, {b}) outside 1..{self.n_robots}")
            edges.append((min(a, b), max(a, b)))
        if len(set(edges)) != len(edges):
            raise InputError("duplicate edge in connectivity graph")
        object.__setattr__(self, "edges", frozenset(edges))

    def sorted_edges(self):
        return sorted(self.edges)


@dataclass(frozen=True)
class AllowableGraphSet:
    """Graphs any one of which keeps the team acceptably connected."""

    graphs: tuple

    def __post_init__(self):
        graphs = tuple(self.graphs)
        if not graphs:
            raise InputError("allowable graph set is empty")
        if len({g.n_robots for g in graphs}) != 1:
            raise InputError("allowable graphs must share the vertex set")
        object.__setattr__(self, "graphs", graphs)

    def __len__(self):
        return len(self.graphs)

    def __iter__(self):
        return iter(self.graphs)


def connectivity_atom(params, edge):
    a, b = sorted(edge)
    return ConnectivityPairAtom(a - 1, b - 1, params)


def build_safety_certificate(params: TeamParams):
    """AND of every pairwise safety atom."""
    return compose_and([SafetyPairAtom(i, j, params) for i, j in params.pairs()])


def build_static_certificate(params: TeamParams, graph: ConnectivityGraph):
    """AND of every safety atom and one connectivity atom per required edge."""
    if graph.n_robots != params.n_robots:
        raise InputError("graph and params disagree on the robot count")
    safety = [SafetyPairAtom(i, j, params) for i, j in params.pairs()]
    return compose_and(safety + [connectivity_atom(params, e) for e in graph.sorted_edges()])


def build_dynamic_certificate(params: TeamParams, graphs: AllowableGraphSet):
    """Safety atoms AND the OR over graphs of the AND over each graph's edges."""
    branches = []
    for k, graph in enumerate(graphs):
        if graph.n_robots != params.n_robots:
            raise InputError("graph and params disagree on the robot count")
        if not graph.edges:
            raise InputError(f"allowable graph {k + 1} has no edges")
        branches.append(compose_and([connectivity_atom(params, e) for e in graph.sorted_edges()]))
    safety = [SafetyPairAtom(i, j, params) for i, j in params.pairs()]
    return compose_and(safety + [compose_or(branches)])


# ---------------------------------------------------------------------------
# validity audit


class UniformStateSampler:
    """Uniform positions in an arena box and velocities in the speed ball.

    With ``tree`` set, draws are rejection-sampled until they lie in the
    tree's set; after ``max_tries`` failures the last candidate is returned
    as-is so the caller can count it as skipped.
    """

    def __init__(self, params: TeamParams, arena=(-1.0, 1.0, -1.0, 1.0), seed=0,
                 tree=None, max_tries=2000):
        self.params = params
        self.arena = tuple(float(a) for a in arena)
        self.rng = np.random.default_rng(seed)
        self.tree = tree
        self.max_tries = max_tries

    def draw(self) -> EnsembleState:
        n = self.params.n_robots
        x0, x1, y0, y1 = self.arena
        pos = np.column_stack([self.rng.uniform(x0, x1, n), self.rng.uniform(y0, y1, n)])
        radius = self.params.max_speed * np.sqrt(self.rng.uniform(0.0, 1.0, n))
        angle = self.rng.uniform(0.0, 2.0 * np.pi, n)
        vel = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
        return EnsembleState(pos, vel)

    def __call__(self) -> EnsembleState:
        state = self.draw()
        if self.tree is None:
            return state
        for _ in range(self.max_tries - 1):
            if eval_value(self.tree, state).inside:
                return state
            state = self.draw()
        return state


@dataclass
class ValidityReport:
    """Outcome of a sampled admissibility audit.

    ``margin`` is the largest achievable value of ``a . u + c`` over the
    control box; the admissible set is non-empty iff it is ``>= 0``.
    ``stopped_early`` means no in-set state was found and sampling was
    abandoned; the certified set is then most likely empty.
    """

    drawn: int
    skipped: int
    checked: int
    feasible: int
    worst_margin: float
    counterexamples: list
    stopped_early: bool = False

    @property
    def feasible_fraction(self) -> float:
        return self.feasible / self.checked if self.checked else float("nan")

    @property
    def valid(self) -> bool:
        return self.checked > 0 and self.feasible == self.checked

    def to_dict(self):
        return {
            "drawn": self.drawn,
            "skipped": self.skipped,
            "checked": self.checked,
            "feasible": self.feasible,
            "feasible_fraction": self.feasible_fraction,
            "worst_margin": self.worst_margin,
            "valid": self.valid,
            "stopped_early": self.stopped_early,
            "counterexamples": self.counterexamples,
        }


def box_margin(constraint, max_accel) -> float:
    """Maximum of ``a . u + c`` over ``|u_k| <= max_accel``."""
    return float(np.sum(np.abs(constraint.coeff)) * max_accel + constraint.offset)


def _sample_record(k, state, **extra):
    return {"sample": k, **extra, "positions": state.positions.tolist(),
            "velocities": state.velocities.tolist()}


def check_validity(tree, params: TeamParams, alpha: ClassKappa, sampler, count: int,
                   max_counterexamples=20, give_up=10) -> ValidityReport:
    """Sample states and check that the admissible control set is non-empty.

    Out-of-set draws are skipped.  If the first ``give_up`` draws are all
    out of set, sampling stops and the draws are reported as
    counterexamples together with the atoms that vanish there.
    """
    skipped = checked = feasible = 0
    worst = math.inf
    counter = []
    outside = []
    drawn = 0
    stopped = False
    for k in range(count):
        state = sampler()
        drawn += 1
        terms = evaluate_atoms(tree, state)
        if not eval_value(tree, state, terms=terms).inside:
            skipped += 1
            if len(outside) < max_counterexamples:
                zero = list(failing_atoms(tree, state, terms=terms))
                outside.append(_sample_record(k, state, reason="outside-set", zero_atoms=zero))
            if checked == 0 and skipped >= give_up:
                stopped = True
                break
            continue
        checked += 1
        margin = box_margin(eval_constraint(tree, state, alpha, terms=terms), params.max_accel)
        worst = min(worst, margin)
        if margin >= 0.0:
            feasible += 1
        elif len(counter) < max_counterexamples:
            counter.append(_sample_record(k, state, reason="empty-admissible-set", margin=margin))
    if skipped:
        log.warning("check_validity: %d of %d samples were outside the set and skipped",
                    skipped, drawn)
    if checked == 0:
        counter = outside
    return ValidityReport(drawn, skipped, checked, feasible, worst, counter, stopped)


# ---------------------------------------------------------------------------
# declarative certificate description


CERTIFICATE_KINDS = ("none", "safety", "static", "dynamic")


def _edge(e):
    a, b = (int(x) for x in e)
    return (min(a, b), max(a, b))


@dataclass(frozen=True)
class CertificateSpec:
    """Which certificate a run uses.

    ``static``: all safety atoms, one connectivity atom per entry of
    ``edges``, and for each entry of ``or_groups`` the OR of its edges'
    connectivity atoms.  ``dynamic``: all safety atoms and the OR over
    ``graphs`` of each graph's edge conjunction.
    """

    kind: str = "safety"
    edges: tuple = ()
    or_groups: tuple = ()
    graphs: tuple = ()

    def __post_init__(self):
        if self.kind not in CERTIFICATE_KINDS:
            raise InputError(f"unknown certificate kind {self.kind!r}")
        object.__setattr__(self, "edges", tuple(_edge(e) for e in self.edges))
        groups = tuple(tuple(_edge(e) for e in g) for g in self.or_groups)
        if any(not g for g in groups):
            raise InputError("empty OR group")
        object.__setattr__(self, "or_groups", groups)
        object.__setattr__(self, "graphs", tuple(tuple(_edge(e) for e in g) for g in self.graphs))
        if self.kind != "static" and (self.edges or self.or_groups):
            raise InputError("edges and or_groups only apply to static certificates")
        if self.kind != "dynamic" and self.graphs:
            raise InputError("graphs only apply to dynamic certificates")
        if self.kind == "dynamic" and not self.graphs:
            raise InputError("dynamic certificate needs at least one graph")

    def build(self, params: TeamParams):
        """The barrier tree, or ``None`` for an unfiltered run."""
        if self.kind == "none":
            return None
        if self.kind == "safety":
            return build_safety_certificate(params)
        if self.kind == "dynamic":
            graphs = AllowableGraphSet(tuple(ConnectivityGraph(params.n_robots, g) for g in self.graphs))
            return build_dynamic_certificate(params, graphs)
        ConnectivityGraph(params.n_robots, self.edges)  # validates indices
        for g in self.or_groups:
            ConnectivityGraph(params.n_robots, g)
        parts = [SafetyPairAtom(i, j, params) for i, j in params.pairs()]
        parts += [connectivity_atom(params, e) for e in self.edges]
        parts += [compose_or([connectivity_atom(params, e) for e in g]) for g in self.or_groups]
        return compose_and(parts)

    def required_edges(self):
        """Every edge whose distance the certificate constrains, sorted."""
        edges = set(self.edges)
        for g in self.or_groups + self.graphs:
            edges.update(g)
        return sorted(edges)
