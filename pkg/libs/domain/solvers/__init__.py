from .discounted import (
    BarrierReport,
    BarrierViolation,
    DiscountedSolution,
    RadiusStep,
    barrier_check,
    c_circ_of,
    check_barrier,
    effective_k0,
    solve_policy_iteration,
    sup_cost,
)
from .ergodic import (
    AlphaLevel,
    BarWReport,
    ErgodicCheck,
    ErgodicSettings,
    ErgodicSolution,
    ExteriorPolicy,
    GrowthReport,
    LambdaBound,
    Snapshot,
    check_bar_w_bound,
    check_lambda_alpha_bound,
    ergodic_operator,
    expand_domain,
    exterior_rule,
    growth_report,
    inner_change,
    normalize,
    uniqueness_probe,
    vanishing_discount,
    verify_ergodic_pair,
)
from .linear import DIRECT_NODE_LIMIT, AnchoredSolve, LinearMethod, solve_anchored

__all__ = [
    "DIRECT_NODE_LIMIT",
    "AlphaLevel",
    "AnchoredSolve",
    "BarWReport",
    "BarrierReport",
    "BarrierViolation",
    "DiscountedSolution",
    "ErgodicCheck",
    "ErgodicSettings",
    "ErgodicSolution",
    "ExteriorPolicy",
    "GrowthReport",
    "LambdaBound",
    "LinearMethod",
    "RadiusStep",
    "Snapshot",
    "barrier_check",
    "c_circ_of",
    "check_bar_w_bound",
    "check_barrier",
    "check_lambda_alpha_bound",
    "effective_k0",
    "ergodic_operator",
    "expand_domain",
    "exterior_rule",
    "growth_report",
    "inner_change",
    "normalize",
    "solve_anchored",
    "solve_policy_iteration",
    "sup_cost",
    "uniqueness_probe",
    "vanishing_discount",
    "verify_ergodic_pair",
]
