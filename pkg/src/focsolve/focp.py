r"""Fractional optimal control problems and their integer-order augmentation.

The problem is

.. math::

    \min \int_a^b L(t,x,u)\,dt \quad\text{s.t.}\quad
    M\dot x + N\,{}^C_aD_t^\alpha x = f(t,x,u),\quad x(a)=x_a,

with ``x(b)`` fixed or free. Replacing the Caputo derivative by the moment
expansion yields the system ``x' = F(t, x, V, u)``,
``V_p' = (1-p)(t-a)^(p-2) x`` with ``V_p(a) = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .expr import Expr, compile_expr, diff_expr, parse_expr
from .fracops import FractionalOrder, gamma
from .momentexp import MomentScheme, coefficients

__all__ = ["Focp", "AugmentedSystem", "DegenerateDenominatorError", "build_augmented"]


class DegenerateDenominatorError(ValueError):
    """``M + N B (t-a)^(1-alpha)`` vanishes inside the time interval."""

    def __init__(self, t: float, message: str | None = None):
        super().__init__(message or f"denominator M + N*B*(t-a)^(1-alpha) vanishes at t = {t:.12g}")
        self.t = t


def _as_expr(e: "Expr | str") -> Expr:
    return parse_expr(e) if isinstance(e, str) else e


@dataclass(frozen=True)
class Focp:
    """Data of a fractional optimal control problem.

    ``L`` and ``f`` may be given as expression text or as parsed trees.
    ``x_b=None`` leaves the terminal state free.
    """

    alpha: float
    M: float
    N: float
    a: float
    b: float
    x_a: float
    L: Expr
    f: Expr
    x_b: Optional[float] = None

    def __post_init__(self) -> None:
        order = FractionalOrder.for_solver(self.alpha)
        object.__setattr__(self, "alpha", order.alpha)
        object.__setattr__(self, "L", _as_expr(self.L))
        object.__setattr__(self, "f", _as_expr(self.f))
        for name in ("M", "N", "a", "b", "x_a"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.x_b is not None:
            object.__setattr__(self, "x_b", float(self.x_b))
        if self.M == 0.0 and self.N == 0.0:
            raise ValueError("(M, N) must not both be zero")
        if not self.b > self.a:
            raise ValueError(f"need b > a, got a={self.a}, b={self.b}")

    @property
    def fixed_endpoint(self) -> bool:
        return self.x_b is not None


@dataclass(frozen=True)
class AugmentedSystem:
    """Integer-order replacement of a :class:`Focp` with ``K`` moment terms.

    All evaluators broadcast over arrays. ``V`` arguments have shape
    ``(K - 1, ...)`` with row ``p - 2`` holding ``V_p``. At ``t = a`` the
    singular groups in ``F`` are taken jointly as zero, so
    ``F(a, x, V, u) = f(a, x, u) / M``.
    """

    scheme: MomentScheme
    focp: Focp
    _f: object = field(repr=False)
    _f_x: object = field(repr=False)
    _f_u: object = field(repr=False)
    _L: object = field(repr=False)
    _L_x: object = field(repr=False)
    _L_u: object = field(repr=False)

    @property
    def K(self) -> int:
        return self.scheme.K

    @property
    def state_dim(self) -> int:
        return self.scheme.K

    # -- building blocks ----------------------------------------------------

    def _s(self, t):
        return np.asarray(t, dtype=float) - self.focp.a

    def denominator(self, t):
        s = self._s(t)
        al = self.focp.alpha
        return self.focp.M + self.focp.N * self.scheme.B * np.maximum(s, 0.0) ** (1.0 - al)

    def _powers(self, s):
        """``s^-alpha`` and ``s^(1-p-alpha)`` with zeros where ``s == 0``."""
        al = self.focp.alpha
        p = self.scheme.powers.reshape((-1,) + (1,) * np.ndim(s))
        pos = s > 0.0
        safe = np.where(pos, s, 1.0)
        return np.where(pos, safe ** (-al), 0.0), np.where(pos, safe ** (1.0 - p - al), 0.0)

    def f(self, t, x, u):
        return self._f(t, x, u)

    def L(self, t, x, u):
        return self._L(t, x, u)

    def L_x(self, t, x, u):
        return self._L_x(t, x, u)

    def L_u(self, t, x, u):
        return self._L_u(t, x, u)

    def moment_rhs(self, t, x):
        """``(1-p)(t-a)^(p-2) x`` for ``p = 2..K`` (``0^0 = 1``)."""
        return self.moment_weights(t) * np.asarray(x, dtype=float)

    def moment_weights(self, t):
        """``(1-p)(t-a)^(p-2)``, i.e. the derivative of ``moment_rhs`` in ``x``."""
        s = self._s(t)
        p = self.scheme.powers.reshape((-1,) + (1,) * np.ndim(s))
        return (1.0 - p) * np.power(s, p - 2.0)

    # -- right-hand side and partials ---------------------------------------

    def F(self, t, x, V, u):
        """Right-hand side of the state equation."""
        return self.F_and_partials(t, x, V, u, partials=False)

    def F_and_partials(self, t, x, V, u, partials: bool = True):
        """Return ``F`` or ``(F, F_x, F_V, F_u)``; ``F_V`` has shape of ``V``."""
        P = self.focp
        sch = self.scheme
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        V = np.asarray(V, dtype=float)
        s = self._s(t)
        s_a, s_p = self._powers(s)
        C = np.asarray(sch.C).reshape((-1,) + (1,) * np.ndim(s))
        D = self.denominator(t)
        fval = self._f(t, x, u)
        num = (
            fval
            - P.N * sch.A * s_a * x
            + P.N * np.sum(C * s_p * V, axis=0)
            + P.N * P.x_a * s_a / gamma(1.0 - P.alpha)
        )
        Fv = num / D
        if not partials:
            return _scalar(Fv)
        Fx = (self._f_x(t, x, u) - P.N * sch.A * s_a) / D
        FV = P.N * C * s_p / D
        Fu = self._f_u(t, x, u) / D
        return _scalar(Fv), _scalar(Fx), FV, _scalar(Fu)

    def check_grid(self, nodes) -> None:
        """Raise if the denominator vanishes at any of *nodes*."""
        D = np.asarray(self.denominator(nodes))
        bad = np.flatnonzero(D == 0.0)
        if bad.size:
            t = float(np.asarray(nodes)[bad[0]])
            msg = None
            if t == self.focp.a and self.focp.M == 0.0:
                msg = "M = 0 makes the denominator vanish at t = a; use an offset grid"
            raise DegenerateDenominatorError(t, msg)


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


def _denominator_root(problem: Focp, B: float) -> float | None:
    """First ``t`` in ``(a, b]`` where ``M + N B (t-a)^(1-alpha)`` vanishes.

    The denominator is monotone in ``t``, so the root is unique when it exists.
    """
    NB = problem.N * B
    if NB == 0.0:
        return None
    r = -problem.M / NB
    if r <= 0.0:
        return None
    s = r ** (1.0 / (1.0 - problem.alpha))
    if s <= problem.b - problem.a:
        return problem.a + s
    return None


def build_augmented(problem: Focp, K: int) -> AugmentedSystem:
    """Replace the Caputo term of *problem* by the ``K``-term moment expansion."""
    scheme = coefficients(problem.alpha, K)
    root = _denominator_root(problem, scheme.B)
    if root is not None:
        raise DegenerateDenominatorError(root)
    return AugmentedSystem(
        scheme=scheme,
        focp=problem,
        _f=compile_expr(problem.f),
        _f_x=compile_expr(diff_expr(problem.f, "x")),
        _f_u=compile_expr(diff_expr(problem.f, "u")),
        _L=compile_expr(problem.L),
        _L_x=compile_expr(diff_expr(problem.L, "x")),
        _L_u=compile_expr(diff_expr(problem.L, "u")),
    )
