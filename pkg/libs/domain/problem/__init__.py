from .expressions import (
    lyapunov_from_expressions,
    parse_kernel,
    parse_matrix,
    parse_scalar,
    parse_vector,
)
from .families import (
    PowerCap,
    RadialPower,
    check_example_constraints,
    constant_cost_problem,
    example_1_1_problem,
    expanding_drift_problem,
    mixed_constant_problem,
    modulated_factor,
    power_lyapunov,
    random_bounded_problem,
)
from .model import (
    COMPENSATOR_RADIUS,
    ConstantFactor,
    ControlProblem,
    KernelSpec,
    LyapunovData,
    MixedSpec,
)
from .validation import AssumptionCheck, ValidationReport, validate_problem

__all__ = [
    "COMPENSATOR_RADIUS",
    "AssumptionCheck",
    "ConstantFactor",
    "ControlProblem",
    "KernelSpec",
    "LyapunovData",
    "MixedSpec",
    "PowerCap",
    "RadialPower",
    "ValidationReport",
    "check_example_constraints",
    "constant_cost_problem",
    "example_1_1_problem",
    "expanding_drift_problem",
    "lyapunov_from_expressions",
    "mixed_constant_problem",
    "modulated_factor",
    "parse_kernel",
    "parse_matrix",
    "parse_scalar",
    "parse_vector",
    "power_lyapunov",
    "random_bounded_problem",
    "validate_problem",
]
