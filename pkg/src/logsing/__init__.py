"""Numerical experiments on the integrability of log|f| for real polynomials f.

Modules:
    poly        sparse polynomials, parsing, ray restrictions
    quadrature  dyadic level-shell sampling and convergence verdicts
    zeroset     zero-set sampling, distances, dimensions, monotonicity
    exponents   Łojasiewicz and singularity exponents
    cutoff      dyadic-cube partitions of unity and their bounds
    cli         the ``logsing`` command
"""
from .errors import (
    BadBracket,
    BudgetExhausted,
    DegenerateRay,
    DimensionMismatch,
    EmptyAfterBudget,
    FunctionVanishes,
    IdenticallyZeroSlice,
    InsufficientSample,
    InvalidRegion,
    LabError,
    PolynomialSyntaxError,
    PreconditionError,
)
from .fitting import ExponentFit, fit_line
from .poly import IDENTICALLY_ZERO, SparsePolynomial, evaluate, gradient, parse_polynomial, restrict_to_ray, vanishing_order
from .quadrature import (
    Budget,
    IntegralVerdict,
    Kind,
    ShellProfile,
    critical_exponent,
    integrate_abs_log,
    integrate_grad_log,
    radial_blowup_check,
    shell_decompose,
)
from .region import DEFAULT_SEED, Region
from .zeroset import (
    DimensionEstimate,
    ZeroSample,
    box_dimension,
    distance_to_zero,
    max_monotonicity_changes,
    monotonicity_breakpoints,
    neighborhood_volume_exponent,
    sample_zero_set,
)
from .exponents import (
    ExponentReport,
    exponent_inequality_report,
    loja_distance_exponent,
    loja_gradient_exponent,
    singularity_exponent,
)
from .cutoff import (
    CutoffPartition,
    DyadicCube,
    base_bump,
    build_partition,
    dyadic_cover,
    verify_derivative_bound,
    verify_flest,
)

__version__ = "0.1.0"
