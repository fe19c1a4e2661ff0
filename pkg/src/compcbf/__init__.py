"""Composite piecewise barrier certificates for safe, connected robot teams.

Barrier atoms are combined with AND (product) and OR (sum) into one barrier
function whose positivity certifies the desired set; a single affine
constraint on the ensemble control then keeps the team inside it.
"""
from ._kernels import BACKEND
from .barrier_core import (
    Atom,
    BarrierAtom,
    BarrierEvaluation,
    ClassKappa,
    LinearControlConstraint,
    Product,
    Sum,
    b_derivative,
    compose_and,
    compose_or,
    eval_constraint,
    eval_value,
    membership,
)
from .certificates import (
    AllowableGraphSet,
    CertificateSpec,
    ConnectivityGraph,
    ConnectivityPairAtom,
    SafetyPairAtom,
    TeamParams,
    UniformStateSampler,
    ValidityReport,
    build_dynamic_certificate,
    build_safety_certificate,
    build_static_certificate,
    check_validity,
    connectivity_h,
    safety_h,
)
from .controller import ControllerGains, WaypointPlan, nominal_control, safe_control
from .errors import (
    CompCBFError,
    ConfigurationError,
    DegenerateStateError,
    InputError,
    InvarianceViolatedError,
)
from .qp import QpProblem, QpSolution, QpSolver, QpStatus, kkt_residual
from .scenario import Scenario, load_scenario, parse_scenario
from .sim import SimConfig, TrajectoryLog, metrics, run, step
from .state import EnsembleState

__version__ = "0.1.0"
