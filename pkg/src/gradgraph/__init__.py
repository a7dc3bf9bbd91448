"""Numerical laboratory for gradient-graph geometry.

Grid calculus and a small-matrix Jacobi eigensolver, Lagrangian phase and
graph-metric fields with the volume functional and its exact discrete
gradient, rotation certification for semiconvex potentials, divergence-form
elliptic solves with Harnack / oscillation-decay measurements, and an
experiment harness behind the ``gradgraph`` CLI.
"""

from .eigen import eig_sym, eig_sym_batch, field_eigensystem
from .elliptic import (
    DecayReport,
    DivergenceFormOperator,
    RescaleReport,
    SolverConfig,
    assemble,
    assemble_coefficients,
    boundary_sign_pattern,
    graph_laplacian_residual,
    harnack_ratio,
    oscillation_decay,
    rescale_check,
    solve_dirichlet,
    stationary_residual,
)
from .errors import (
    ConfigurationError,
    ConvergenceError,
    FunctionalDomainError,
    GradGraphError,
    InvalidInputError,
    OutOfRangeError,
)
from .grid import (
    DomainMask,
    GridSpec,
    ScalarField,
    SymMatrixField,
    VectorField,
    dump_field,
    dumps_field,
    gradient,
    hessian,
    load_scalar_field,
    load_sym_matrix_field,
    load_vector_field,
)
from .minimize import DescentConfig, MinimizeResult, QuadraticFit, minimize_volume, quadratic_fit
from .phase import (
    FUNCTIONALS,
    LOGDET,
    PHASE,
    TRACE,
    HessianFunctional,
    MetricField,
    PhaseField,
    functional_field,
    induced_metric,
    metric_from_full,
    phase,
    phase_semiconvexity_bound,
    volume,
    volume_gradient,
)
from .rotation import (
    RotationCertificate,
    RotationParams,
    apply_rotation,
    certify,
    derive_params,
    estimate_semiconvexity,
    params_from_delta,
)

__version__ = "0.1.0"
