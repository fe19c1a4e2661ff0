"""Ensemble state of a team of planar double-integrator robots.

The flat state vector is ``x = (p_1, ..., p_N, v_1, ..., v_N)`` with each block
2-dimensional, so robot ``i`` owns position entries ``2i, 2i+1`` and velocity
entries ``2N+2i, 2N+2i+1``.  Controls are accelerations laid out as
``u = (u_1, ..., u_N)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError


def _frozen(arr):
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EnsembleState:
    """Positions (N, 2) in m, velocities (N, 2) in m/s, time in s."""

    positions: np.ndarray
    velocities: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        p = _frozen(self.positions)
        v = _frozen(self.velocities)
        if p.ndim != 2 or p.shape[1] != 2:
            raise InputError(f"positions must have shape (N, 2), got {p.shape}")
        if v.shape != p.shape:
            raise InputError(f"velocities shape {v.shape} does not match positions {p.shape}")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v)) and np.isfinite(self.t)):
            raise InputError("state contains non-finite entries")
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "t", float(self.t))

    @property
    def n_robots(self) -> int:
        return self.positions.shape[0]

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.positions.ravel(), self.velocities.ravel()])

    @classmethod
    def from_vector(cls, x, t=0.0) -> "EnsembleState":
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size % 4:
            raise InputError(f"state vector length must be a multiple of 4, got {x.shape}")
        n = x.size // 4
        return cls(x[: 2 * n].reshape(n, 2), x[2 * n:].reshape(n, 2), t)

    @classmethod
    def at_rest(cls, positions, t=0.0) -> "EnsembleState":
        p = np.asarray(positions, dtype=float)
        return cls(p, np.zeros_like(p), t)


def drift(state: EnsembleState) -> np.ndarray:
    """Uncontrolled vector field f(x) = (v, 0) of the double integrator."""
    return np.concatenate([state.velocities.ravel(), np.zeros(2 * state.n_robots)])


def flow(state: EnsembleState, u) -> np.ndarray:
    """Closed-loop vector field f(x) + g(x) u."""
    u = np.asarray(u, dtype=float)
    return np.concatenate([state.velocities.ravel(), u])
