"""Fractional optimal control via a moment expansion of the Caputo derivative.

Typical use::

    from focsolve import Focp, build_augmented, Grid, transcribe, solve

    problem = Focp(alpha=0.5, M=1, N=1, a=0, b=1, x_a=0, x_b=1,
                   L="(u^2 - 4*x)^2", f="u + 2/gamma(2.5)*t^1.5")
    aug = build_augmented(problem, K=3)
    report = solve(transcribe(aug, Grid(100, 0.0, 1.0), mode="shooting"))
"""

from .diagnostics import PontryaginReport, hamiltonian, pontryagin_check
from .expr import Expr, compile_expr, diff_expr, eval_expr, parse_expr
from .focp import AugmentedSystem, DegenerateDenominatorError, Focp, build_augmented
from .fracops import (
    FractionalOrder,
    SampledFunction,
    caputo_l1,
    caputo_power,
    frac_binomial,
    gamma,
    rl_from_caputo,
    rl_series,
)
from .momentexp import (
    MomentScheme,
    MomentStates,
    approx_caputo,
    approx_rl,
    coefficients,
    error_bound,
    moment_states,
)
from .optim import SolveOptions, SolveReport, solve
from .transcribe import DiscreteNlp, Grid, Trajectory, discrete_objective, gradient, simulate, transcribe

__all__ = [
    "AugmentedSystem",
    "DegenerateDenominatorError",
    "DiscreteNlp",
    "Expr",
    "Focp",
    "FractionalOrder",
    "Grid",
    "MomentScheme",
    "MomentStates",
    "PontryaginReport",
    "SampledFunction",
    "SolveOptions",
    "SolveReport",
    "Trajectory",
    "approx_caputo",
    "approx_rl",
    "build_augmented",
    "caputo_l1",
    "caputo_power",
    "coefficients",
    "compile_expr",
    "diff_expr",
    "discrete_objective",
    "error_bound",
    "eval_expr",
    "frac_binomial",
    "gamma",
    "gradient",
    "hamiltonian",
    "moment_states",
    "parse_expr",
    "pontryagin_check",
    "rl_from_caputo",
    "rl_series",
    "simulate",
    "solve",
    "transcribe",
]
