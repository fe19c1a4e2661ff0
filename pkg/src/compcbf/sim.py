"""Deterministic simulation of a filtered double-integrator team."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .barrier_core import ClassKappa, eval_value, evaluate_atoms, failing_atoms
from .certificates import CertificateSpec, TeamParams
from .controller import (
    ControllerGains,
    WaypointPlan,
    WaypointTracker,
    nominal_control,
    safe_control,
)
from .errors import ConfigurationError, InputError
from .qp import QpSolver
from .state import EnsembleState

INIT_MARGIN = 1e-6
DEFAULT_DT = 0.02
_SHRINK = np.nextafter(1.0, 0.0)


def speed_of(v):
    """Euclidean norm over the last axis; the one used for the speed cap."""
    v = np.asarray(v)
    return np.hypot(v[..., 0], v[..., 1])


def step(state: EnsembleState, u, dt: float, params: TeamParams) -> EnsembleState:
    """Exact zero-order-hold update, then each robot's speed is capped at ``max_speed``."""
    if not (dt > 0 and math.isfinite(dt)):
        raise InputError(f"dt must be positive, got {dt}")
    u = np.asarray(u, dtype=float).reshape(state.n_robots, 2)
    if not np.all(np.isfinite(u)):
        raise InputError("control must be finite")
    p, v = state.positions, state.velocities
    p_next = p + v * dt + 0.5 * u * dt * dt
    v_next = v + u * dt
    speed = speed_of(v_next)
    for i in np.flatnonzero(speed > params.max_speed):
        v_next[i] = v_next[i] / speed[i] * params.max_speed
        # the rescaled norm can round one ulp above the cap
        while speed_of(v_next[i]) > params.max_speed:
            v_next[i] *= _SHRINK
    return EnsembleState(p_next, v_next, state.t + dt)


def pair_distances(positions) -> np.ndarray:
    """Distances for pairs ``(0,1), (0,2), ..., (N-2,N-1)``."""
    p = np.asarray(positions)
    i, j = np.triu_indices(p.shape[0], k=1)
    return np.linalg.norm(p[i] - p[j], axis=1)


@dataclass(frozen=True)
class SimConfig:
    params: TeamParams
    plan: WaypointPlan
    initial: EnsembleState
    certificate: CertificateSpec = CertificateSpec()
    alpha: ClassKappa = ClassKappa()
    gains: ControllerGains = ControllerGains()
    dt: float = DEFAULT_DT
    duration: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InputError(f"dt must be positive, got {self.dt}")
        if not (self.duration >= 0 and math.isfinite(self.duration)):
            raise InputError(f"duration must be non-negative, got {self.duration}")
        n = self.params.n_robots
        if self.plan.n_robots != n or self.initial.n_robots != n:
            raise InputError("plan, initial state and team disagree on the robot count")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.duration / self.dt + 1e-9))


@dataclass
class TrajectoryLog:
    """One record per logged time: the initial state and the state after each step.

    The control columns hold the command computed at that record's state
    (the one applied over the following step).  ``log_b`` and ``b`` are
    ``nan`` for unfiltered runs; ``graph_index`` is -1 where no allowable
    graph is satisfied and for non-dynamic certificates.
    """

    n_robots: int
    pairs: list
    t: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    u_nominal: np.ndarray
    u: np.ndarray
    log_b: np.ndarray
    b: np.ndarray
    distances: np.ndarray
    qp_status: list
    qp_iterations: np.ndarray
    emergency: np.ndarray
    active_branches: list
    graph_index: np.ndarray
    waypoint_index: np.ndarray
    waypoints_visited: np.ndarray

    def __len__(self):
        return self.t.size

    @property
    def n_steps(self) -> int:
        return self.t.size - 1


def satisfied_graph(distances, pairs, graphs, d_c) -> int:
    """Lowest index of a graph whose edges are all shorter than ``d_c``, or -1."""
    lookup = {(i + 1, j + 1): k for k, (i, j) in enumerate(pairs)}
    for g, edges in enumerate(graphs):
        if all(distances[lookup[e]] < d_c for e in edges):
            return g
    return -1


def run(config: SimConfig) -> TrajectoryLog:
    """Closed-loop run: nominal control, barrier filter, exact step."""
    params = config.params
    n = params.n_robots
    tree = config.certificate.build(params)
    state = config.initial
    if tree is not None:
        terms = evaluate_atoms(tree, state)
        if not eval_value(tree, state, terms=terms, margin=INIT_MARGIN).inside:
            atoms = failing_atoms(tree, state, margin=INIT_MARGIN, terms=terms)
            raise ConfigurationError("initial state is outside the certified set: " + ", ".join(atoms),
                                     field="initial")
    pairs = params.pairs()
    graphs = config.certificate.graphs
    steps = config.n_steps
    rows = steps + 1
    t = np.zeros(rows)
    pos = np.zeros((rows, n, 2))
    vel = np.zeros((rows, n, 2))
    u_nom = np.zeros((rows, 2 * n))
    u_out = np.zeros((rows, 2 * n))
    log_b = np.full(rows, np.nan)
    b = np.full(rows, np.nan)
    dist = np.zeros((rows, len(pairs)))
    status = []
    iters = np.zeros(rows, dtype=int)
    emergency = np.zeros(rows, dtype=bool)
    branches = []
    graph_index = np.full(rows, -1, dtype=int)
    wp_index = np.zeros((rows, n), dtype=int)

    tracker = WaypointTracker(config.plan)
    solver = QpSolver()
    for k in range(rows):
        u_hat = nominal_control(state, config.plan, config.gains, params, tracker)
        t[k] = state.t
        pos[k] = state.positions
        vel[k] = state.velocities
        dist[k] = pair_distances(state.positions)
        wp_index[k] = tracker.index
        u_nom[k] = u_hat
        if tree is None:
            u = u_hat
            status.append("unfiltered")
            branches.append(())
        else:
            ev = eval_value(tree, state)
            log_b[k], b[k] = ev.log_value, ev.value
            branches.append(ev.active_branches)
            u, info = safe_control(state, u_hat, tree, config.alpha, params, solver, config.gains)
            status.append(info.status)
            iters[k] = info.iterations
            emergency[k] = info.emergency
        if graphs:
            graph_index[k] = satisfied_graph(dist[k], pairs, graphs, params.d_c)
        u_out[k] = u
        if k < steps:
            nxt = step(state, u, config.dt, params)
            # time from the step count so long runs do not accumulate round-off
            state = EnsembleState(nxt.positions, nxt.velocities, (k + 1) * config.dt)
    return TrajectoryLog(n, pairs, t, pos, vel, u_nom, u_out, log_b, b, dist, status, iters,
                         emergency, branches, graph_index, wp_index, tracker.visited.copy())


@dataclass
class SummaryMetrics:
    min_pair_distance: float
    min_pair: tuple
    min_pair_time: float
    edge_max_distance: dict
    group_max_min_distance: dict
    min_b: float
    invariant: bool
    waypoints_visited: list
    waypoints_total: int
    max_speed: float
    emergency_steps: int
    graph_switches: int
    graph_indices_seen: list
    conditions: dict = field(default_factory=dict)

    def to_dict(self):
        return dict(self.__dict__)


def _edge_key(e):
    return f"{e[0]}{e[1]}"


def metrics(log: TrajectoryLog, config: SimConfig) -> SummaryMetrics:
    """Safety, connectivity and progress figures of a finished run.

    ``conditions`` maps each property the certificate is meant to enforce to
    whether it held at every logged step.
    """
    if len(log) == 0:
        raise InputError("empty trajectory log")
    params = config.params
    cert = config.certificate
    lookup = {(i + 1, j + 1): k for k, (i, j) in enumerate(log.pairs)}
    per_step_min = log.distances.min(axis=1)
    k = int(np.argmin(per_step_min))
    pair = log.pairs[int(np.argmin(log.distances[k]))]
    edges = cert.required_edges()
    edge_max = {_edge_key(e): float(log.distances[:, lookup[e]].max()) for e in edges}
    group_max = {}
    for g in cert.or_groups:
        cols = log.distances[:, [lookup[e] for e in g]]
        group_max["|".join(_edge_key(e) for e in g)] = float(cols.min(axis=1).max())
    speeds = speed_of(log.velocities)
    filtered = cert.kind != "none"
    min_b = float(np.min(log.b)) if filtered else math.nan
    invariant = bool(np.all(log.log_b > -math.inf)) if filtered else False
    idx = log.graph_index
    switches = int(np.count_nonzero(idx[1:] != idx[:-1])) if cert.graphs else 0

    cond = {"safety": bool(per_step_min.min() >= params.d_s)}
    for e in cert.edges:
        cond[f"edge {_edge_key(e)}"] = bool(edge_max[_edge_key(e)] < params.d_c)
    for name, value in group_max.items():
        cond[f"group {name}"] = bool(value < params.d_c)
    if cert.graphs:
        cond["some graph"] = bool(np.all(idx >= 0))
    if filtered:
        cond["invariance"] = invariant
    cond["speed bound"] = bool(speeds.max() <= params.max_speed)

    return SummaryMetrics(
        min_pair_distance=float(per_step_min[k]),
        min_pair=(pair[0] + 1, pair[1] + 1),
        min_pair_time=float(log.t[k]),
        edge_max_distance=edge_max,
        group_max_min_distance=group_max,
        min_b=min_b,
        invariant=invariant,
        waypoints_visited=[int(v) for v in log.waypoints_visited],
        waypoints_total=config.plan.total_waypoints,
        max_speed=float(speeds.max()),
        emergency_steps=int(log.emergency.sum()),
        graph_switches=switches,
        graph_indices_seen=sorted({int(g) for g in idx}) if cert.graphs else [],
        conditions=cond,
    )
