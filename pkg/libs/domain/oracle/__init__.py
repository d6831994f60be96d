from .dense import (
    MAX_NODES,
    DenseOracle,
    build_dense_oracle,
    contraction_factor,
    dense_apply,
    dense_fixed_point,
    dense_oracles,
)
from .reference import (
    ReferenceTest,
    cos_symbol_reference,
    finite_difference_gradient_error,
    finite_difference_hessian_error,
    fourier_symbol_value,
    fractional_laplacian_reference,
)

__all__ = [
    "MAX_NODES",
    "DenseOracle",
    "ReferenceTest",
    "build_dense_oracle",
    "contraction_factor",
    "cos_symbol_reference",
    "dense_apply",
    "dense_fixed_point",
    "dense_oracles",
    "finite_difference_gradient_error",
    "finite_difference_hessian_error",
    "fourier_symbol_value",
    "fractional_laplacian_reference",
]
