"""Dense QP for the minimally invasive correction.

Solves ``min ||u - u_hat||^2`` subject to ``a_k . u + c_k >= 0`` and a box
``lo <= u <= hi``.  The identity Hessian makes this a Euclidean projection
onto a polytope; it is solved with a dual active-set method (Goldfarb and
Idnani) started from ``u_hat``, which needs no feasible starting point and
returns an infeasibility certificate when the polytope is empty.

Problems with exactly one inequality, the case produced by a composite
barrier, go through the compiled halfspace-and-box projection kernel.

Constraint ids: inequalities are ``0..k-1``, lower bounds ``k..k+m-1`` and
upper bounds ``k+m..k+2m-1``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InputError

FEAS_TOL = 1e-8
KKT_TOL = 1e-8
_EPS = 1e-14


class QpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration-limit"


@dataclass(frozen=True)
class QpProblem:
    nominal: np.ndarray
    a: np.ndarray  # (k, m)
    c: np.ndarray  # (k,)
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        u = np.array(self.nominal, dtype=float).ravel()
        m = u.size
        a = np.array(self.a, dtype=float).reshape(-1, m)
        c = np.array(self.c, dtype=float).ravel()
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (m,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (m,)).copy()
        if c.size != a.shape[0]:
            raise InputError(f"{a.shape[0]} constraint rows but {c.size} offsets")
        for arr in (u, a, c, lo, hi):
            if not np.all(np.isfinite(arr)):
                raise InputError("QP data must be finite")
        if np.any(lo >= hi):
            raise InputError("box lower bounds must be below upper bounds")
        for name, arr in (("nominal", u), ("a", a), ("c", c), ("lower", lo), ("upper", hi)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def with_box(cls, nominal, inequalities=(), bound=1.0):
        """Build from ``(a, c)`` pairs and a symmetric box ``|u_k| <= bound``."""
        nominal = np.asarray(nominal, dtype=float)
        m = nominal.size
        rows = [np.asarray(a, dtype=float) for a, _ in inequalities]
        a = np.array(rows).reshape(-1, m) if rows else np.zeros((0, m))
        return cls(nominal, a, [c for _, c in inequalities], -bound, bound)

    @property
    def dim(self) -> int:
        return self.nominal.size

    @property
    def n_ineq(self) -> int:
        return self.c.size

    def constraint_matrix(self):
        """All constraints as ``N u >= b`` rows, in id order."""
        m = self.dim
        eye = np.eye(m)
        n = np.vstack([self.a, eye, -eye])
        b = np.concatenate([-self.c, self.lower, -self.upper])
        return n, b

    def objective(self, u) -> float:
        d = np.asarray(u, dtype=float) - self.nominal
        return float(d @ d)

    def slacks(self, u):
        n, b = self.constraint_matrix()
        return n @ np.asarray(u, dtype=float) - b


@dataclass
class QpSolution:
    u: np.ndarray
    status: QpStatus
    kkt_residual: float
    iterations: int
    active_set: tuple
    multipliers: np.ndarray = field(repr=False, default=None)
    certificate: tuple = ()

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def kkt_residual(problem: QpProblem, u, multipliers) -> float:
    """Largest violation among stationarity, primal and dual feasibility, and
    complementary slackness, for the objective ``||u - u_hat||^2``."""
    u = np.asarray(u, dtype=float)
    lam = np.asarray(multipliers, dtype=float)
    if u.shape != (problem.dim,):
        raise InputError(f"u must have length {problem.dim}")
    n, b = problem.constraint_matrix()
    if lam.shape != (n.shape[0],):
        raise InputError(f"need {n.shape[0]} multipliers, got {lam.shape}")
    s = n @ u - b
    stat = 2.0 * (u - problem.nominal) - n.T @ lam
    parts = [
        np.max(np.abs(stat), initial=0.0),
        np.max(-s, initial=0.0),
        np.max(-lam, initial=0.0),
        np.max(np.abs(lam * s), initial=0.0),
    ]
    return float(max(0.0, *parts))


class QpSolver:
    """Active-set projection solver that remembers the last active set.

    A solver instance is single-owner: the warm start is mutable state.
    """

    def __init__(self, feas_tol=FEAS_TOL, max_iter=None):
        self.feas_tol = feas_tol
        self.max_iter = max_iter
        self._warm = None

    def reset(self):
        self._warm = None

    def solve(self, problem: QpProblem) -> QpSolution:
        n, b = problem.constraint_matrix()
        u_hat = problem.nominal
        if np.all(n @ u_hat - b >= 0.0):
            sol = self._finish(problem, u_hat.copy(), [], np.zeros(0), 0)
        elif problem.n_ineq == 1:
            sol = self._single(problem)
        else:
            sol = self._try_warm(problem, n, b) or self._dual_active_set(problem, n, b)
        if sol.optimal:
            self._warm = (problem.n_ineq, problem.dim, sol.active_set)
        return sol

    def _single(self, problem):
        a, c = problem.a[0], float(problem.c[0])
        lo, hi = problem.lower, problem.upper
        u, mu, feasible = _kernels.project_halfspace_box(problem.nominal, a, c, lo, hi)
        u = np.asarray(u, dtype=float)
        if not feasible:
            m = problem.dim
            cert = (0,) + tuple(1 + k if a[k] < 0 else 1 + m + k for k in range(m) if a[k] != 0)
            return QpSolution(u, QpStatus.INFEASIBLE, np.inf, 1, (), None, cert)
        m = problem.dim
        lam = np.zeros(1 + 2 * m)
        lam[0] = 2.0 * mu
        grad = 2.0 * (u - problem.nominal) - lam[0] * a
        at_lo = (u <= lo) & (grad > 0.0)
        at_hi = (u >= hi) & (grad < 0.0)
        lam[1:1 + m] = np.where(at_lo, grad, 0.0)
        lam[1 + m:] = np.where(at_hi, -grad, 0.0)
        active = ([0] if mu > 0.0 else []) + [1 + k for k in np.flatnonzero(at_lo)] \
            + [1 + m + k for k in np.flatnonzero(at_hi)]
        return self._report(problem, u, sorted(active), lam, 1)

    def _try_warm(self, problem, n, b):
        if self._warm is None or self._warm[:2] != (problem.n_ineq, problem.dim):
            return None
        active = list(self._warm[2])
        if not active:
            return None
        u, lam_act = _project_on_active(problem.nominal, n, b, active)
        if lam_act is None or np.any(lam_act < 0.0):
            return None
        if np.any(n @ u - b < -self.feas_tol):
            return None
        return self._finish(problem, u, active, lam_act, 1)

    def _dual_active_set(self, problem, n, b):
        m = problem.dim
        max_iter = 100 * m if self.max_iter is None else self.max_iter
        x = problem.nominal.copy()
        active = []
        lam = np.zeros(0)
        it = 0
        while True:
            s = n @ x - b
            p = int(np.argmin(s))
            if s[p] >= -self.feas_tol:
                return self._finish(problem, x, active, lam, it)
            lam_plus = np.append(lam, 0.0)
            while True:
                it += 1
                if it > max_iter:
                    return self._finish(problem, x, active, lam_plus[:-1], it, QpStatus.ITERATION_LIMIT)
                np_ = n[p]
                if active:
                    na = n[active]
                    r = np.linalg.solve(na @ na.T, na @ np_)
                    z = np_ - na.T @ r
                else:
                    r = np.zeros(0)
                    z = np_
                t1, k = np.inf, -1
                for j, rj in enumerate(r):
                    if rj > _EPS and lam_plus[j] / rj < t1:
                        t1, k = lam_plus[j] / rj, j
                zn = float(z @ np_)
                sp = float(np_ @ x - b[p])
                t2 = -sp / zn if zn > _EPS * max(1.0, np_ @ np_) else np.inf
                if not np.isfinite(t1) and not np.isfinite(t2):
                    cert = tuple(sorted(active + [p]))
                    sol = QpSolution(x, QpStatus.INFEASIBLE, np.inf, it, tuple(sorted(active)),
                                     None, cert)
                    return sol
                if not np.isfinite(t2):
                    lam_plus[:-1] -= t1 * r
                    lam_plus[-1] += t1
                    del active[k]
                    lam_plus = np.delete(lam_plus, k)
                    continue
                t = min(t1, t2)
                x = x + t * z
                lam_plus[:-1] -= t * r
                lam_plus[-1] += t
                if t2 <= t1:
                    active.append(p)
                    lam = lam_plus
                    break
                del active[k]
                lam_plus = np.delete(lam_plus, k)

    def _finish(self, problem, x, active, lam_act, it, status=QpStatus.OPTIMAL):
        """Clip into the box and convert internal multipliers (of ``||.||^2/2``)."""
        x = np.clip(x, problem.lower, problem.upper)
        full = np.zeros(problem.n_ineq + 2 * problem.dim)
        for cid, val in zip(active, lam_act):
            full[cid] = 2.0 * val
        return self._report(problem, x, sorted(active), full, it, status)

    def _report(self, problem, u, active, lam, it, status=QpStatus.OPTIMAL):
        res = kkt_residual(problem, u, lam)
        if status is QpStatus.OPTIMAL and res > KKT_TOL * max(1.0, float(np.abs(lam).max(initial=0.0))):
            # stationarity lost to round-off: re-derive multipliers on the active set
            n, b = problem.constraint_matrix()
            if active:
                _, lam_act = _project_on_active(problem.nominal, n, b, active)
                if lam_act is not None:
                    lam = np.zeros_like(lam)
                    lam[active] = 2.0 * lam_act
                    res = kkt_residual(problem, u, lam)
        return QpSolution(u, status, res, it, tuple(int(a) for a in active), lam)


def _project_on_active(u_hat, n, b, active):
    """Projection of ``u_hat`` onto the equality set of ``active`` constraints."""
    na = n[active]
    try:
        lam = np.linalg.solve(na @ na.T, b[active] - na @ u_hat)
    except np.linalg.LinAlgError:
        return u_hat, None
    return u_hat + na.T @ lam, lam


def solve(problem: QpProblem, solver: QpSolver | None = None) -> QpSolution:
    """Solve ``problem`` with a fresh solver unless one is given."""
    return (solver or QpSolver()).solve(problem)
