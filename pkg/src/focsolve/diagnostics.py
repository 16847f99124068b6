"""Pontryagin residuals of a direct (full-mode) solution.

Costate convention: with the scaled Euler defects
``c_i = (X_{i+1} - X_i - dt Phi_i) / dt`` and multipliers ``mu_i`` entering
the Lagrangian as ``f + mu . c``, the costate at node ``i + 1`` is

    lambda(t_{i+1}) = -mu_i / dt,        i = 0..n-1.

Stationarity is checked at node ``i`` with ``lambda(t_i)``; the discrete
optimality condition pairs ``u_i`` with ``lambda(t_{i+1})`` instead, so the
residual is ``O(dt)`` and shrinks as the grid is refined. The costate
equation is checked in the form paired with forward Euler,
``(lambda_{i+1} - lambda_i)/dt = -H_x(t_i, x_i, V_i, lambda_{i+1}, u_i)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .focp import AugmentedSystem
from .transcribe import Grid, Trajectory

__all__ = [
    "PontryaginReport",
    "ModeError",
    "COSTATE_CONVENTION",
    "hamiltonian",
    "hamiltonian_partials",
    "costates_from_multipliers",
    "pontryagin_check",
]

COSTATE_CONVENTION = "lambda(t_{i+1}) = -mu_i/dt for scaled defect multipliers mu_i"


class ModeError(ValueError):
    """Multipliers for the defect constraints are not available."""


@dataclass(frozen=True)
class PontryaginReport:
    """Residuals of the necessary conditions along a discrete solution.

    ``costates`` has shape ``(K, n)``: row 0 is ``lambda_1`` and row ``p - 1``
    is ``lambda_p``, at nodes ``1..n``. ``transversality`` holds ``lambda_p(b)``
    for ``p = 1..K``; the free-endpoint target is zero for all of them, the
    fixed-endpoint target only for ``p >= 2``.
    """

    stationarity_residual: float
    costate_defect: float
    transversality: np.ndarray
    free_endpoint: bool
    costates: np.ndarray = field(repr=False)
    convention: str = COSTATE_CONVENTION

    @property
    def lambda_1_b(self) -> float:
        return float(self.transversality[0])

    @property
    def transversality_residual(self) -> float:
        """Largest ``|lambda_p(b)|`` over the components whose target is zero."""
        vals = self.transversality if self.free_endpoint else self.transversality[1:]
        return float(np.max(np.abs(vals))) if vals.size else 0.0


def _split(aug: AugmentedSystem, lam):
    lam = np.asarray(lam, dtype=float)
    if lam.shape[0] != aug.K:
        raise ValueError(f"costate needs {aug.K} components, got {lam.shape[0]}")
    return lam[0], lam[1:]


def hamiltonian(aug: AugmentedSystem, t, x, V, lam, u):
    """``H = L + lambda_1 F + sum_p lambda_p (1-p)(t-a)^(p-2) x``.

    ``V`` and ``lam[1:]`` are indexed by ``p = 2..K`` along the first axis;
    trailing axes broadcast.
    """
    l1, lp = _split(aug, lam)
    V = np.asarray(V, dtype=float)
    out = aug.L(t, x, u) + l1 * aug.F(t, x, V, u) + np.sum(lp * aug.moment_rhs(t, x), axis=0)
    return float(out) if np.ndim(out) == 0 else out


def hamiltonian_partials(aug: AugmentedSystem, t, x, V, lam, u):
    """``(H_x, H_V, H_u)``; ``H_V`` has the shape of ``V``."""
    l1, lp = _split(aug, lam)
    _, Fx, FV, Fu = aug.F_and_partials(t, x, V, u)
    W = aug.moment_weights(t)
    Hx = aug.L_x(t, x, u) + l1 * Fx + np.sum(lp * W, axis=0)
    HV = l1 * FV
    Hu = aug.L_u(t, x, u) + l1 * Fu
    return Hx, HV, Hu


def costates_from_multipliers(aug: AugmentedSystem, grid: Grid, multipliers) -> np.ndarray:
    """Costates at nodes ``1..n`` (shape ``(K, n)``) from full-mode multipliers."""
    n, K = grid.n, aug.K
    mu = np.asarray(multipliers, dtype=float)
    if mu.ndim != 1 or mu.size < K * n:
        raise ModeError(
            f"need {K * n} defect multipliers (full-mode solve), got {mu.size}"
        )
    return -mu[: K * n].reshape(K, n) / grid.dt


def pontryagin_check(aug: AugmentedSystem, grid: Grid, report, multipliers=None) -> PontryaginReport:
    """Evaluate stationarity, costate and transversality residuals.

    *report* is a :class:`~focsolve.optim.SolveReport` (or anything with a
    ``trajectory``); *multipliers* default to ``report.multipliers``. The
    stationarity and costate residuals are taken over interior nodes
    ``1..n-1``, where both the state and the costate are available.
    """
    traj: Trajectory = report.trajectory
    if multipliers is None:
        multipliers = getattr(report, "multipliers", None)
    if multipliers is None:
        raise ModeError("no multipliers available; solve in full mode")
    lam = costates_from_multipliers(aug, grid, multipliers)
    n = grid.n
    if traj.x.shape != (n + 1,):
        raise ValueError("trajectory does not match the grid")

    # interior nodes 1..n-1; costate column j sits at node j + 1
    t = grid.nodes[1:n]
    x = traj.x[1:n]
    V = traj.V[:, 1:n]
    u = traj.u[1:n]
    _, _, Hu = hamiltonian_partials(aug, t, x, V, lam[:, :-1], u)
    Hu = np.broadcast_to(Hu, t.shape)
    stationarity = float(np.max(np.abs(Hu))) if t.size else 0.0

    Hx, HV, _ = hamiltonian_partials(aug, t, x, V, lam[:, 1:], u)

    dlam = (lam[:, 1:] - lam[:, :-1]) / grid.dt
    res = np.vstack([dlam[:1] + Hx, dlam[1:] + HV])
    costate_defect = float(np.max(np.abs(res))) if t.size else 0.0

    return PontryaginReport(
        stationarity_residual=stationarity,
        costate_defect=costate_defect,
        transversality=lam[:, -1].copy(),
        free_endpoint=not aug.focp.fixed_endpoint,
        costates=lam,
    )
