from __future__ import annotations

from domain.problem import (
    ControlProblem,
    KernelSpec,
    MixedSpec,
    constant_cost_problem,
    example_1_1_problem,
    expanding_drift_problem,
    lyapunov_from_expressions,
    mixed_constant_problem,
    parse_kernel,
    parse_matrix,
    parse_scalar,
    parse_vector,
    random_bounded_problem,
)

from apps.solver.settings import (
    ConstantCostConfig,
    Example11Config,
    ExpandingDriftConfig,
    ExpressionProblemConfig,
    MixedConstantConfig,
    ProblemConfig,
    RandomBoundedConfig,
)


def _from_expressions(cfg: ExpressionProblemConfig) -> ControlProblem:
    labels = tuple(cfg.controls)
    d = cfg.d
    drift = {tau: parse_vector(c.drift, d) for tau, c in cfg.controls.items()}
    cost = {tau: parse_scalar(c.cost, d) for tau, c in cfg.controls.items()}

    kernel = None
    first = cfg.controls[labels[0]]
    if first.kernel is not None:
        assert cfg.s is not None
        factors = {tau: parse_kernel(c.kernel or "0", d) for tau, c in cfg.controls.items()}
        kernel = KernelSpec(cfg.s, cfg.lambda_ell, cfg.Lambda_ell, factors)

    zeroth = None
    if any(c.zeroth is not None for c in cfg.controls.values()):
        zeroth = {tau: parse_scalar(c.zeroth or "0", d) for tau, c in cfg.controls.items()}

    mixed = None
    if first.diffusion is not None:
        diffusion = {tau: parse_matrix(c.diffusion or [], d) for tau, c in cfg.controls.items()}
        mixed = MixedSpec(diffusion=diffusion, lambda_ell=cfg.lambda_ell, Lambda_ell=cfg.Lambda_ell)

    lyap = None
    if cfg.lyapunov is not None:
        ly = cfg.lyapunov
        lyap = lyapunov_from_expressions(
            ly.V,
            ly.h,
            d,
            k0=ly.k0,
            mu=ly.mu,
            envelope_exponent=ly.envelope_exponent,
            growth_exponent=ly.growth_exponent,
        )
    return ControlProblem(
        controls=labels,
        d=d,
        drift=drift,
        cost=cost,
        kernel=kernel,
        zeroth=zeroth,
        mixed=mixed,
        lyapunov=lyap,
        name="expression",
        params={"d": d, "s": cfg.s, "controls": list(labels)},
    )


def build_problem(cfg: ProblemConfig) -> ControlProblem:
    """Instantiate the configured family. Raises the domain's own errors on bad parameters."""
    if isinstance(cfg, Example11Config):
        return example_1_1_problem(
            cfg.gamma,
            cfg.theta,
            cfg.d,
            cfg.s,
            family_size=cfg.family_size,
            modulation=cfg.modulation,
            cost_exponent=cfg.cost_exponent,
            k0=cfg.k0,
            k1=cfg.k1,
            outward=cfg.outward,
        )
    if isinstance(cfg, ConstantCostConfig):
        return constant_cost_problem(
            cfg.kappa, cfg.d, cfg.s, controls=cfg.controls, drift_scale=cfg.drift_scale
        )
    if isinstance(cfg, RandomBoundedConfig):
        return random_bounded_problem(cfg.seed, d=cfg.d, controls=cfg.controls, s=cfg.s)
    if isinstance(cfg, ExpandingDriftConfig):
        return expanding_drift_problem(
            cfg.c_circ,
            cfg.C0,
            cfg.gamma,
            cfg.d,
            cfg.s,
            zeroth_exponent=cfg.zeroth_exponent,
            kappa=cfg.kappa,
            k0=cfg.k0,
        )
    if isinstance(cfg, MixedConstantConfig):
        return mixed_constant_problem(
            cfg.kappa,
            cfg.d,
            diffusion=cfg.diffusion,
            levy_intensity=cfg.levy_intensity,
            drift_scale=cfg.drift_scale,
        )
    return _from_expressions(cfg)
