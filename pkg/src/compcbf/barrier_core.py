"""Composition trees of piecewise barrier functions.

A barrier atom wraps a smooth function ``h`` and exposes ``B = max(h, 0)``.
Atoms are combined by :class:`Product` nodes (logical AND, the set where every
child is positive) and :class:`Sum` nodes (logical OR, the set where at least
one child is positive).  Because every node value is non-negative, a tree is
positive exactly on the set described by the corresponding boolean formula.

For control synthesis a tree is turned into one affine inequality in the
control, ``a . u + c >= 0``, which encodes ``dB/dt + alpha(B) >= 0`` at the
current state.  Values are carried in log domain so that products of many
atoms neither underflow nor overflow.
"""
from __future__ import annotations

import abc
import math
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, InvarianceViolatedError
from .state import EnsembleState, drift

KINK_TOL = 1e-9
BRANCH_DROP_TOL = 1e-12
_LOG_DROP = math.log(BRANCH_DROP_TOL)

AtomTerms = namedtuple("AtomTerms", "h gradient drift control")
AtomTerms.__doc__ = """Raw value ``h``, full state gradient, ``L_f h`` and ``L_g h``."""


@dataclass(frozen=True)
class ClassKappa:
    """Class-K gain ``alpha(s) = gain * s**power``."""

    power: int = 1
    gain: float = 1.0

    def __post_init__(self):
        if int(self.power) != self.power or self.power < 1:
            raise InputError(f"power must be a positive integer, got {self.power}")
        if not self.gain > 0:
            raise InputError(f"gain must be positive, got {self.gain}")

    def __call__(self, s):
        return self.gain * s ** self.power

    def ratio_from_log(self, log_s: float) -> float:
        """``alpha(s) / s`` evaluated from ``log(s)`` without forming ``s``."""
        if self.power == 1:
            return float(self.gain)
        return float(self.gain * math.exp((self.power - 1) * log_s))


class BarrierAtom(abc.ABC):
    """A smooth function ``h`` of the ensemble state, used as ``max(h, 0)``.

    Subclasses implement :meth:`terms`.  ``key`` must identify the atom
    uniquely inside a tree; equal keys are treated as the same atom.
    """

    key: str

    @abc.abstractmethod
    def terms(self, state: EnsembleState) -> AtomTerms:
        """Return ``h`` and its derivatives at ``state``."""

    @classmethod
    def batch_terms(cls, atoms, state):
        """Evaluate several atoms of this class at once.

        Override for vectorised evaluation; the default loops.
        """
        return [atom.terms(state) for atom in atoms]

    def raw_value(self, state):
        return self.terms(state).h

    def value(self, state):
        return max(self.raw_value(state), 0.0)

    def gradient(self, state):
        return self.terms(state).gradient

    def drift_term(self, state):
        return self.terms(state).drift

    def control_row(self, state):
        return self.terms(state).control

    def __repr__(self):
        return f"<{type(self).__name__} {self.key}>"


def terms_from_gradient(h, grad, state):
    """Build :class:`AtomTerms` by contracting a gradient with the dynamics."""
    grad = np.asarray(grad, dtype=float)
    n2 = 2 * state.n_robots
    return AtomTerms(float(h), grad, float(grad @ drift(state)), grad[n2:].copy())


class BarrierTree:
    """Base class of composition-tree nodes."""

    def atoms(self):
        """Unique atoms in the tree in first-appearance order."""
        cached = self.__dict__.get("_atoms")
        if cached is None:
            seen = {}
            for atom in self._iter_atoms():
                seen.setdefault(atom.key, atom)
            cached = tuple(seen.values())
            object.__setattr__(self, "_atoms", cached)  # nodes are immutable
        return cached

    def atom_groups(self):
        """Atoms grouped by their batch evaluator, so each group is one call."""
        cached = self.__dict__.get("_groups")
        if cached is None:
            groups = {}
            for atom in self.atoms():
                groups.setdefault(type(atom).batch_terms.__func__, []).append(atom)
            cached = tuple(tuple(g) for g in groups.values())
            object.__setattr__(self, "_groups", cached)
        return cached

    def _iter_atoms(self):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Atom(BarrierTree):
    atom: BarrierAtom

    def _iter_atoms(self):
        yield self.atom

    def __str__(self):
        return self.atom.key


@dataclass(frozen=True, eq=False)
class Product(BarrierTree):
    children: tuple = field(default=())

    def __post_init__(self):
        _check_children(self, "Product")

    def _iter_atoms(self):
        for child in self.children:
            yield from child._iter_atoms()

    def __str__(self):
        return "*".join(str(c) for c in self.children)


@dataclass(frozen=True, eq=False)
class Sum(BarrierTree):
    children: tuple = field(default=())

    def __post_init__(self):
        _check_children(self, "Sum")

    def _iter_atoms(self):
        for child in self.children:
            yield from child._iter_atoms()

    def __str__(self):
        return "(" + " + ".join(str(c) for c in self.children) + ")"


def _check_children(node, name):
    children = tuple(as_tree(c) for c in node.children)
    if not children:
        raise InputError(f"{name} node needs at least one child")
    object.__setattr__(node, "children", children)


def as_tree(obj) -> BarrierTree:
    if isinstance(obj, BarrierTree):
        return obj
    if isinstance(obj, BarrierAtom):
        return Atom(obj)
    raise InputError(f"cannot build a barrier tree from {type(obj).__name__}")


def compose_and(trees) -> Product:
    """Intersection of the sets encoded by ``trees``."""
    trees = list(trees)
    if not trees:
        raise InputError("compose_and needs at least one tree")
    return Product(tuple(trees))


def compose_or(trees) -> Sum:
    """Union of the sets encoded by ``trees``."""
    trees = list(trees)
    if not trees:
        raise InputError("compose_or needs at least one tree")
    return Sum(tuple(trees))


def is_pure_product(tree: BarrierTree) -> bool:
    if isinstance(tree, Atom):
        return True
    if isinstance(tree, Sum):
        return False
    return all(is_pure_product(c) for c in tree.children)


# ---------------------------------------------------------------------------
# atom evaluation


def evaluate_atoms(tree: BarrierTree, state: EnsembleState) -> dict:
    """Evaluate every atom of ``tree`` once, batching atoms by class."""
    if not isinstance(state, EnsembleState):
        raise InputError("state must be an EnsembleState")
    out = {}
    for atoms in tree.atom_groups():
        for atom, terms in zip(atoms, type(atoms[0]).batch_terms(atoms, state)):
            if not np.isfinite(terms.h) and not terms.h == -np.inf:
                raise InputError(f"atom {atom.key} produced a non-finite value")
            out[atom.key] = terms
    return out


@dataclass(frozen=True)
class BarrierEvaluation:
    """Value of a tree at one state.

    ``per_atom`` holds ``(key, h, B)`` triples; ``active_branches`` holds one
    boolean tuple per Sum node (pre-order) marking children whose value
    exceeds the branch-drop tolerance.
    """

    value: float
    log_value: float
    per_atom: tuple
    active_branches: tuple

    @property
    def inside(self) -> bool:
        return self.log_value > -math.inf


def _log_pos(x):
    return math.log(x) if x > 0.0 else -math.inf


def _value_rec(node, terms, masks, margin):
    if isinstance(node, Atom):
        h = terms[node.atom.key].h
        b = h if h > margin else 0.0
        return b, _log_pos(b)
    if isinstance(node, Sum):
        slot = len(masks)
        masks.append(None)
    vals = [_value_rec(c, terms, masks, margin) for c in node.children]
    if isinstance(node, Product):
        logs = [lv for _, lv in vals]
        log_value = -math.inf if -math.inf in logs else math.fsum(logs)
        return math.prod(v for v, _ in vals), log_value
    masks[slot] = tuple(lv > _LOG_DROP for _, lv in vals)
    log_value = float(np.logaddexp.reduce([lv for _, lv in vals]))
    return math.fsum(v for v, _ in vals), log_value


def eval_value(tree: BarrierTree, state: EnsembleState, terms=None, margin=0.0) -> BarrierEvaluation:
    """Value, log-value and per-atom breakdown of ``tree`` at ``state``.

    ``margin`` treats atoms with ``h <= margin`` as zero, which gives a strict
    membership test when positive.
    """
    tree = as_tree(tree)
    if terms is None:
        terms = evaluate_atoms(tree, state)
    masks = []
    value, log_value = _value_rec(tree, terms, masks, margin)
    per_atom = tuple((a.key, terms[a.key].h, max(terms[a.key].h, 0.0)) for a in tree.atoms())
    return BarrierEvaluation(value, log_value, per_atom, tuple(masks))


def membership(tree: BarrierTree, state: EnsembleState, margin=0.0) -> bool:
    """True iff the tree is positive at ``state``."""
    return eval_value(tree, state, margin=margin).inside


def failing_atoms(tree: BarrierTree, state: EnsembleState, margin=0.0, terms=None):
    """Keys of the atoms that make ``tree`` vanish at ``state`` (empty if inside)."""
    tree = as_tree(tree)
    if terms is None:
        terms = evaluate_atoms(tree, state)

    def rec(node):
        if isinstance(node, Atom):
            return [] if terms[node.atom.key].h > margin else [node.atom.key]
        fails = [rec(c) for c in node.children]
        if isinstance(node, Product):
            return [k for f in fails for k in f]
        if any(not f for f in fails):
            return []
        return [k for f in fails for k in f]

    return tuple(dict.fromkeys(rec(tree)))


# ---------------------------------------------------------------------------
# B-derivative


def b_derivative(tree: BarrierTree, state: EnsembleState, direction, kink_tol=KINK_TOL) -> float:
    """One-sided directional derivative ``B'(x; q)`` of the tree.

    Each atom selects its active piece: the smooth ``h`` when ``h > kink_tol``,
    the zero piece when ``h < -kink_tol``, and ``max(dh, 0)`` on the kink.
    Interior nodes follow the product and sum rules.
    """
    tree = as_tree(tree)
    q = np.asarray(direction, dtype=float)
    if q.shape != (4 * state.n_robots,):
        raise InputError(f"direction must have length {4 * state.n_robots}")
    terms = evaluate_atoms(tree, state)

    def rec(node):
        if isinstance(node, Atom):
            t = terms[node.atom.key]
            if t.h < -kink_tol:
                return 0.0, 0.0
            dh = float(t.gradient @ q)
            if t.h > kink_tol:
                return t.h, dh
            return max(t.h, 0.0), max(dh, 0.0)
        parts = [rec(c) for c in node.children]
        if isinstance(node, Sum):
            return math.fsum(v for v, _ in parts), math.fsum(d for _, d in parts)
        value = math.prod(v for v, _ in parts)
        deriv = 0.0
        for k, (_, dk) in enumerate(parts):
            if dk != 0.0:
                deriv += dk * math.prod(v for j, (v, _) in enumerate(parts) if j != k)
        return value, deriv

    return rec(tree)[1]


# ---------------------------------------------------------------------------
# linear control constraint


@dataclass(frozen=True)
class LinearControlConstraint:
    """Affine condition ``coeff . u + offset >= 0`` on the ensemble control."""

    coeff: np.ndarray
    offset: float
    normalized: bool

    def __call__(self, u) -> float:
        return float(self.coeff @ np.asarray(u, dtype=float)) + self.offset

    def satisfied(self, u, tol=0.0) -> bool:
        return self(u) >= -tol


def _constraint_rec(node, terms, drop_log):
    """Return ``(log V, L_g V / V, L_f V / V)`` or ``None`` if the node is zero."""
    if isinstance(node, Atom):
        t = terms[node.atom.key]
        if not t.h > BRANCH_DROP_TOL:
            return None
        return math.log(t.h), t.control / t.h, t.drift / t.h
    parts = [_constraint_rec(c, terms, drop_log) for c in node.children]
    if isinstance(node, Product):
        if any(p is None for p in parts):
            return None
        log_v = math.fsum(p[0] for p in parts)
        return log_v, sum(p[1] for p in parts), math.fsum(p[2] for p in parts)
    live = [p for p in parts if p is not None and p[0] > drop_log]
    if not live:
        return None
    log_v = float(np.logaddexp.reduce([p[0] for p in live]))
    weights = [math.exp(p[0] - log_v) for p in live]
    row = sum(w * p[1] for w, p in zip(weights, live))
    return log_v, row, math.fsum(w * p[2] for w, p in zip(weights, live))


def eval_constraint(tree: BarrierTree, state: EnsembleState, alpha: ClassKappa = ClassKappa(),
                    normalize=True, terms=None) -> LinearControlConstraint:
    """Affine-in-control form of ``L_f B + L_g B u + alpha(B) >= 0``.

    Children of Sum nodes whose value does not exceed ``BRANCH_DROP_TOL`` are
    dropped.  With ``normalize`` the inequality is divided through by ``B``,
    which for a pure product gives ``a = sum(L_g h_k / h_k)`` and
    ``c = sum(L_f h_k / h_k) + alpha(B) / B``.

    Raises :class:`InvarianceViolatedError` when ``B`` vanishes at ``state``.
    """
    tree = as_tree(tree)
    if terms is None:
        terms = evaluate_atoms(tree, state)
    res = _constraint_rec(tree, terms, _LOG_DROP)
    if res is None:
        atoms = failing_atoms(tree, state, margin=BRANCH_DROP_TOL, terms=terms)
        raise InvarianceViolatedError(
            "state is outside the certified set; zero atoms: " + ", ".join(atoms), atoms)
    log_v, row, drift_ratio = res
    row = np.array(row, dtype=float)
    if normalize:
        return LinearControlConstraint(row, drift_ratio + alpha.ratio_from_log(log_v), True)
    value = math.exp(log_v)
    return LinearControlConstraint(row * value, drift_ratio * value + alpha(value), False)
