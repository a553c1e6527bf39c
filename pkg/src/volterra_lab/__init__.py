"""Numerical laboratory for the open Volterra lattice.

The lattice du_n/dt = u_n (u_{n+1} - u_{n-1}) is integrated in three
provably equivalent forms (direct, Lax commutator, double bracket), its
isospectral geometry is made computable (centralizer projection, normal
metric, orbit gradient), and every identity tying the forms together is
checkable by a seeded verification battery.
"""

from .core import (
    ConvergenceError,
    DimensionMismatchError,
    EigenDecomposition,
    NotSymmetricError,
    commutator,
    dense_matrix,
    expm_small,
    frobenius_inner,
    symmetric_eigen,
    trace_power,
)
from .geometry import (
    DegenerateSpectrumError,
    GradientFlowReport,
    OrbitContext,
    TangencyError,
    TangentVector,
    centralizer_project,
    directional_derivative,
    finite_difference_directional,
    gradient_flow_identity_check,
    normal_metric,
    orbit_context,
    orbit_gradient,
)
from .integrate import (
    FieldDomainError,
    IntegrationError,
    IntegratorConfig,
    InvariantSummary,
    PositivityAbortError,
    PropagationError,
    StepAttempt,
    StepUnderflowError,
    TrajectoryRecord,
    adaptive45_step,
    integrate,
    invariant_report,
    rk4_step,
)
from .lattice import (
    CALIBRATED_SIGN,
    FORMS,
    InternalConsistencyError,
    LatticeState,
    LaxMatrix,
    SignCalibration,
    build_A,
    build_K,
    calibrate_sign,
    double_bracket_field,
    lax_from_state,
    lax_rhs,
    objective_f,
    pushforward_rhs,
    state_from_lax,
    trace_objective,
    volterra_rhs,
)

__version__ = "0.1.0"

__all__ = [
    "CALIBRATED_SIGN",
    "ConvergenceError",
    "DegenerateSpectrumError",
    "DimensionMismatchError",
    "EigenDecomposition",
    "FORMS",
    "FieldDomainError",
    "GradientFlowReport",
    "IntegrationError",
    "IntegratorConfig",
    "InternalConsistencyError",
    "InvariantSummary",
    "LatticeState",
    "LaxMatrix",
    "NotSymmetricError",
    "OrbitContext",
    "PositivityAbortError",
    "PropagationError",
    "SignCalibration",
    "StepAttempt",
    "StepUnderflowError",
    "TangencyError",
    "TangentVector",
    "TrajectoryRecord",
    "adaptive45_step",
    "build_A",
    "build_K",
    "calibrate_sign",
    "centralizer_project",
    "commutator",
    "dense_matrix",
    "directional_derivative",
    "double_bracket_field",
    "expm_small",
    "finite_difference_directional",
    "frobenius_inner",
    "gradient_flow_identity_check",
    "integrate",
    "invariant_report",
    "lax_from_state",
    "lax_rhs",
    "normal_metric",
    "objective_f",
    "orbit_context",
    "orbit_gradient",
    "pushforward_rhs",
    "rk4_step",
    "state_from_lax",
    "symmetric_eigen",
    "trace_objective",
    "trace_power",
    "volterra_rhs",
    "__version__",
]
