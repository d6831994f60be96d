from .assembly import (
    DiscreteOperator,
    apply,
    apply_all,
    apply_inf,
    apply_inf_anchored,
    assemble,
)
from .dump import grid_info, stencil_dump
from .pucci import pucci_extremal, second_differences
from .quadrature import (
    JumpQuadrature,
    build_quadrature,
    fractional_laplacian_constant,
    lattice_offsets,
    sphere_measure,
    tail_mass_closed_form,
)

__all__ = [
    "DiscreteOperator",
    "JumpQuadrature",
    "apply",
    "apply_all",
    "apply_inf",
    "apply_inf_anchored",
    "assemble",
    "build_quadrature",
    "fractional_laplacian_constant",
    "grid_info",
    "lattice_offsets",
    "pucci_extremal",
    "second_differences",
    "sphere_measure",
    "stencil_dump",
    "tail_mass_closed_form",
]
