from .model import ExteriorKind, ExteriorRule, Grid, build_grid, evaluate_extended, extend

__all__ = [
    "ExteriorKind",
    "ExteriorRule",
    "Grid",
    "build_grid",
    "evaluate_extended",
    "extend",
]
