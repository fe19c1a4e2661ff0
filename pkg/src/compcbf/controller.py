"""Waypoint controller and the minimally invasive barrier filter around it."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .barrier_core import ClassKappa, eval_constraint
from .certificates import TeamParams
from .errors import InputError, InvarianceViolatedError
from .qp import FEAS_TOL, QpProblem, QpSolver, QpStatus
from .state import EnsembleState

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WaypointPlan:
    """Ordered waypoints for each robot.

    With ``hold_final`` a robot keeps tracking its last waypoint after
    reaching it; otherwise it only damps its velocity.
    """

    paths: tuple
    arrival_radius: float = 0.05
    hold_final: bool = True

    def __post_init__(self):
        paths = []
        for k, path in enumerate(self.paths):
            arr = np.array(path, dtype=float)
            if arr.size and (arr.ndim != 2 or arr.shape[1] != 2):
                raise InputError(f"robot {k + 1}: waypoints must be (x, y) pairs")
            arr = arr.reshape(-1, 2)
            if arr.shape[0] == 0:
                raise InputError(f"robot {k + 1} has no waypoints")
            if not np.all(np.isfinite(arr)):
                raise InputError(f"robot {k + 1} has non-finite waypoints")
            arr.setflags(write=False)
            paths.append(arr)
        if not paths:
            raise InputError("plan has no robots")
        if not (math.isfinite(self.arrival_radius) and self.arrival_radius > 0):
            raise InputError("arrival radius must be positive")
        object.__setattr__(self, "paths", tuple(paths))

    @property
    def n_robots(self) -> int:
        return len(self.paths)

    @property
    def total_waypoints(self) -> int:
        return sum(len(p) for p in self.paths)


@dataclass(frozen=True)
class ControllerGains:
    k_p: float = 1.0
    k_d: float = 2.0

    def __post_init__(self):
        if not (self.k_p > 0 and self.k_d > 0):
            raise InputError("controller gains must be positive")


class WaypointTracker:
    """Per-robot waypoint index; advances monotonically, never skips."""

    def __init__(self, plan: WaypointPlan):
        self.plan = plan
        self.index = np.zeros(plan.n_robots, dtype=int)
        self.visited = np.zeros(plan.n_robots, dtype=int)

    def update(self, state: EnsembleState):
        r = self.plan.arrival_radius
        for i, path in enumerate(self.plan.paths):
            k = self.index[i]
            if self.visited[i] > k:  # final waypoint already reached
                continue
            if np.linalg.norm(state.positions[i] - path[k]) < r:
                self.visited[i] = k + 1
                if k + 1 < len(path):
                    self.index[i] = k + 1

    def targets(self) -> np.ndarray:
        return np.array([path[k] for path, k in zip(self.plan.paths, self.index)])

    def finished(self) -> np.ndarray:
        return self.visited == np.array([len(p) for p in self.plan.paths])


def _clamp(u, bound):
    return np.clip(u, -bound, bound)


def nominal_control(state: EnsembleState, plan: WaypointPlan, gains: ControllerGains,
                    params: TeamParams, tracker: WaypointTracker | None = None) -> np.ndarray:
    """PD go-to-goal command toward each robot's current waypoint.

    When ``tracker`` is given it is advanced first; without one every robot
    heads for its first waypoint.  Returns the stacked ``2N`` command,
    clamped per coordinate to ``+-max_accel``.
    """
    if plan.n_robots != state.n_robots:
        raise InputError("plan and state disagree on the robot count")
    if tracker is not None:
        tracker.update(state)
        targets = tracker.targets()
        done = tracker.finished()
    else:
        targets = np.array([p[0] for p in plan.paths])
        done = np.zeros(plan.n_robots, dtype=bool)
    u = -gains.k_p * (state.positions - targets) - gains.k_d * state.velocities
    if not plan.hold_final:
        u[done] = -gains.k_d * state.velocities[done]
    return _clamp(u.ravel(), params.max_accel)


def emergency_stop(state: EnsembleState, gains: ControllerGains, params: TeamParams):
    return _clamp(-gains.k_d * state.velocities.ravel(), params.max_accel)


@dataclass
class FilterInfo:
    """What the filter did at one step."""

    status: str
    iterations: int = 0
    emergency: bool = False
    constraint: float = math.nan  # a . u + c at the returned control
    kkt_residual: float = 0.0
    modified: bool = False


def safe_control(state: EnsembleState, u_hat, tree, alpha: ClassKappa, params: TeamParams,
                 solver: QpSolver | None = None, gains: ControllerGains | None = None):
    """Closest control to ``u_hat`` that keeps the composite barrier invariant.

    The QP carries the single composite constraint and the box
    ``|u_k| <= max_accel``.  When the QP fails, or the state has already
    left the set, the emergency stop ``clamp(-k_d v)`` is returned and
    ``info.emergency`` is set.
    """
    u_hat = np.asarray(u_hat, dtype=float)
    if u_hat.shape != (2 * state.n_robots,):
        raise InputError(f"nominal control must have length {2 * state.n_robots}")
    solver = solver or QpSolver()
    gains = gains or ControllerGains()
    try:
        con = eval_constraint(tree, state, alpha)
    except InvarianceViolatedError as exc:
        log.warning("t=%.9g: %s; emergency stop", state.t, exc)
        return emergency_stop(state, gains, params), FilterInfo("outside-set", emergency=True)
    bound = params.max_accel
    if np.all(np.abs(u_hat) <= bound) and con(u_hat) >= 0.0:
        return u_hat, FilterInfo(QpStatus.OPTIMAL.value, 0, False, con(u_hat))
    problem = QpProblem(u_hat, con.coeff[None, :], [con.offset], -bound, bound)
    sol = solver.solve(problem)
    if not sol.optimal or con(sol.u) < -FEAS_TOL:
        log.warning("t=%.9g: filter QP %s; emergency stop", state.t, sol.status.value)
        u = emergency_stop(state, gains, params)
        return u, FilterInfo(sol.status.value, sol.iterations, True, con(u))
    return sol.u, FilterInfo(sol.status.value, sol.iterations, False, con(sol.u),
                             sol.kkt_residual, not np.array_equal(sol.u, u_hat))
