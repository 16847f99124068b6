"""Augmented-Lagrangian solver with a limited-memory BFGS inner loop.

The merit function for multipliers ``lam`` and penalty ``rho`` is::

    phi(z) = f(z) + lam . c(z) + rho/2 |c(z)|^2

whose gradient is ``grad f + J^T (lam + rho c)``; the problem object only
has to provide ``evaluate(z) -> (f, c)`` and ``lagrangian_gradient(z, w)``.
Optional box bounds on the controls are enforced by projection inside the
line search.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = ["SolveOptions", "SolveReport", "InnerResult", "lbfgs", "solve"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolveOptions:
    outer_tol: float = 1e-8
    inner_tol: float = 1e-8
    max_outer: int = 50
    max_inner: int = 500
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    u_bounds: Optional[tuple[float, float]] = None
    memory: int = 10
    armijo: float = 1e-4

    def __post_init__(self) -> None:
        if not (self.outer_tol > 0 and self.inner_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.penalty_growth > 1.0:
            raise ValueError("penalty_growth must exceed 1")
        if self.penalty_init <= 0:
            raise ValueError("penalty_init must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be positive")
        if self.u_bounds is not None and not self.u_bounds[0] <= self.u_bounds[1]:
            raise ValueError("u_bounds must satisfy lower <= upper")


@dataclass
class SolveReport:
    trajectory: object
    objective: float
    max_constraint_violation: float
    inner_iterations: int
    outer_iterations: int
    converged: bool
    first_order_residual: float
    z: np.ndarray = field(repr=False)
    multipliers: np.ndarray = field(repr=False)
    penalty: float = 0.0
    message: str = ""


@dataclass
class InnerResult:
    z: np.ndarray
    value: float
    grad: np.ndarray
    iterations: int
    residual: float
    converged: bool


def _projected_residual(z, g, lo, hi) -> float:
    if lo is None:
        return float(np.max(np.abs(g))) if g.size else 0.0
    step = np.clip(z - g, lo, hi) - z
    return float(np.max(np.abs(step))) if g.size else 0.0


def lbfgs(
    fun,
    z0,
    *,
    tol=1e-8,
    max_iter=500,
    memory=10,
    armijo=1e-4,
    lower=None,
    upper=None,
    pairs=None,
    blocks=None,
):
    """Minimise ``fun(z) -> (value, gradient)`` with L-BFGS and Armijo backtracking.

    *lower*/*upper* are arrays (``-inf``/``inf`` entries allowed) applied by
    projection. Convergence is declared when the (projected) gradient
    infinity norm drops to *tol*. *pairs* optionally seeds the curvature
    memory with ``(S, Y)`` deques from an earlier run; they are updated in
    place. *blocks* labels variables with small integers; the initial
    inverse Hessian is then scaled per block (``s_b.y_b / y_b.y_b``) instead
    of by one scalar, which matters when blocks have very different
    curvature.
    """
    z = np.array(z0, dtype=float)
    if blocks is not None:
        labels = np.asarray(blocks)
        blocks = [np.flatnonzero(labels == b) for b in np.unique(labels)]
    if lower is not None:
        z = np.clip(z, lower, upper)
    f, g = fun(z)
    if not math.isfinite(f):
        raise FloatingPointError("non-finite objective at the starting point")
    if pairs is None:
        pairs = (deque(maxlen=memory), deque(maxlen=memory))
    S, Y = pairs
    it = 0
    res = _projected_residual(z, g, lower, upper)
    while res > tol and it < max_iter:
        d = _two_loop(g, S, Y, blocks)
        slope = float(g @ d)
        if not slope < 0.0:
            S.clear()
            Y.clear()
            d = -g
            slope = -float(g @ g)
        step = 1.0
        accepted = False
        for _ in range(60):
            z_new = z + step * d
            if lower is not None:
                z_new = np.clip(z_new, lower, upper)
            try:
                f_new, g_new = fun(z_new)
            except (FloatingPointError, ArithmeticError):
                step *= 0.5
                continue
            decrease = slope * step if lower is None else float(g @ (z_new - z))
            if not math.isfinite(f_new):
                step *= 0.5
                continue
            if f_new <= f + armijo * decrease:
                accepted = True
                break
            # near a minimiser f changes at rounding level; fall back on the
            # approximate Wolfe test, which only looks at the slope
            if f_new <= f + 1e-12 * abs(f) and float(g_new @ (z_new - z)) <= (2 * armijo - 1) * decrease:
                accepted = True
                break
            step *= 0.5
        it += 1
        if not accepted:
            if S:
                S.clear()
                Y.clear()
                continue
            break
        s = z_new - z
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.sqrt((s @ s) * (y @ y))):
            S.append(s)
            Y.append(y)
        z, f, g = z_new, f_new, g_new
        res = _projected_residual(z, g, lower, upper)
    return InnerResult(z, f, g, it, res, res <= tol)


def _initial_scale(s, y, blocks):
    if blocks is None:
        return float(s @ y) / float(y @ y)
    h = np.empty_like(s)
    fallback = float(s @ y) / float(y @ y)
    for idx in blocks:
        sy = float(s[idx] @ y[idx])
        yy = float(y[idx] @ y[idx])
        h[idx] = sy / yy if sy > 0.0 and yy > 0.0 else fallback
    return h


def _two_loop(g, S, Y, blocks=None):
    q = -g.copy()
    if not S:
        return q
    alphas = []
    rhos = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        q -= a * y
        alphas.append(a)
        rhos.append(rho)
    q *= _initial_scale(S[-1], Y[-1], blocks)
    for (s, y), a, rho in zip(zip(S, Y), reversed(alphas), reversed(rhos)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


def _bounds(nlp, opts: SolveOptions):
    if opts.u_bounds is None:
        return None, None
    lo = np.full(nlp.n_var, -np.inf)
    hi = np.full(nlp.n_var, np.inf)
    sl = nlp.control_slice()
    lo[sl], hi[sl] = opts.u_bounds
    return lo, hi


def solve(nlp, opts: SolveOptions | None = None, z0=None) -> SolveReport:
    """Solve ``min f(z) s.t. c(z) = 0`` for a transcribed program.

    Any object with ``n_var``, ``n_con``, ``evaluate`` and
    ``lagrangian_gradient`` can be solved; a ``solver_view()`` method, when
    present, supplies better-conditioned coordinates to iterate in. The
    reported ``first_order_residual`` is measured in those coordinates.
    Never raises on non-convergence; inspect ``report.converged``.
    """
    opts = opts or SolveOptions()
    problem = nlp
    view = nlp.solver_view() if hasattr(nlp, "solver_view") else nlp
    if z0 is None:
        z = view.initial_point() if hasattr(view, "initial_point") else np.zeros(view.n_var)
    elif view is nlp:
        z = np.asarray(z0, dtype=float).copy()
    else:
        z = view.from_z(z0)
    nlp = view
    lo, hi = _bounds(nlp, opts)
    blocks = nlp.variable_blocks() if hasattr(nlp, "variable_blocks") else None
    m = nlp.n_con
    lam = np.zeros(m)
    rho = opts.penalty_init

    def merit(zz):
        f, c = nlp.evaluate(zz)
        val = f + float(lam @ c) + 0.5 * rho * float(c @ c)
        grad = nlp.lagrangian_gradient(zz, lam + rho * c)
        return val, grad

    f0, c0 = nlp.evaluate(z)
    if not math.isfinite(f0):
        raise FloatingPointError("non-finite objective at the initial point")
    # the starting violation is not a reference for penalty growth
    viol = math.inf
    total_inner = 0
    outer = 0
    residual = math.inf
    converged = False
    # inner tolerance is loosened early and tightened as feasibility improves
    omega = max(opts.inner_tol, 1e-2) if m else opts.inner_tol
    # curvature pairs stay valid across multiplier updates at fixed penalty
    pairs = (deque(maxlen=opts.memory), deque(maxlen=opts.memory))

    for outer in range(1, opts.max_outer + 1):
        inner = lbfgs(
            merit,
            z,
            tol=omega,
            max_iter=opts.max_inner,
            memory=opts.memory,
            armijo=opts.armijo,
            lower=lo,
            upper=hi,
            pairs=pairs,
            blocks=blocks,
        )
        total_inner += inner.iterations
        z = inner.z
        f, c = nlp.evaluate(z)
        new_viol = float(np.max(np.abs(c))) if m else 0.0
        if m:
            lam = lam + rho * c
        g_lag = nlp.lagrangian_gradient(z, lam)
        residual = _projected_residual(z, g_lag, lo, hi)
        log.debug(
            "outer %d: f=%.3e viol=%.3e res=%.3e rho=%.1e inner=%d",
            outer, f, new_viol, residual, rho, inner.iterations,
        )
        if new_viol <= opts.outer_tol and residual <= opts.inner_tol:
            converged = True
            viol = new_viol
            break
        if m == 0:
            # nothing to update; the inner solver is all there is
            viol = new_viol
            if inner.converged or inner.iterations == 0:
                break
            continue
        if new_viol > 0.25 * viol and new_viol > opts.outer_tol:
            rho *= opts.penalty_growth
            pairs[0].clear()
            pairs[1].clear()
        viol = new_viol
        omega = max(opts.inner_tol, min(omega, 0.1 * max(viol, opts.inner_tol)))

    f, c = nlp.evaluate(z)
    viol = float(np.max(np.abs(c))) if m else 0.0
    converged = converged or (viol <= opts.outer_tol and residual <= opts.inner_tol)
    z_out = z if view is problem else view.to_z(z)
    return SolveReport(
        trajectory=nlp.unpack(z) if hasattr(nlp, "unpack") else None,
        objective=float(f),
        max_constraint_violation=viol,
        inner_iterations=total_inner,
        outer_iterations=outer,
        converged=converged,
        first_order_residual=residual,
        z=z_out,
        multipliers=lam,
        penalty=rho,
        message="converged" if converged else "iteration limit reached",
    )
