r"""Moment expansion of the fractional derivative.

For :math:`0<\alpha<1` and :math:`x\in C^2[a,b]` the left Riemann-Liouville
derivative is approximated by

.. math::

    {}_aD_t^\alpha x(t) \approx A(t-a)^{-\alpha}x(t) + B(t-a)^{1-\alpha}\dot x(t)
        - \sum_{p=2}^{K} C_p (t-a)^{1-p-\alpha} V_p(t),

where the moments solve :math:`\dot V_p = (1-p)(t-a)^{p-2}x`, :math:`V_p(a)=0`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fracops import FractionalOrder, SampledFunction, gamma, lgamma

__all__ = [
    "MomentScheme",
    "MomentStates",
    "coefficients",
    "moment_states",
    "approx_rl",
    "approx_caputo",
    "error_bound",
]


@dataclass(frozen=True)
class MomentScheme:
    """Coefficients ``A(alpha, K)``, ``B(alpha, K)`` and ``C_p`` for ``p = 2..K``."""

    alpha: FractionalOrder
    K: int
    A: float
    B: float
    C: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.K < 2:
            raise ValueError(f"K must be >= 2, got {self.K}")
        if len(self.C) != self.K - 1:
            raise ValueError("C must hold K - 1 entries (p = 2..K)")
        if not all(math.isfinite(v) for v in (self.A, self.B, *self.C)):
            raise ValueError("moment coefficients must be finite")

    def C_p(self, p: int) -> float:
        return self.C[p - 2]

    @property
    def powers(self) -> np.ndarray:
        """The moment indices ``p = 2..K`` as an array."""
        return np.arange(2, self.K + 1, dtype=float)


@dataclass(frozen=True)
class MomentStates:
    """Moments ``V_p(t_i)``; row ``p - 2`` holds ``V_p``."""

    grid: np.ndarray
    V: np.ndarray


def _ratio(p: int, al: float) -> float:
    # Gamma(p - 1 + alpha) / (p - 1)!, accumulated in log space
    val, _ = lgamma(p - 1.0 + al)
    return math.exp(val - math.lgamma(p))


def coefficients(alpha: "FractionalOrder | float", K: int) -> MomentScheme:
    """Finite-``K`` coefficients of the moment expansion."""
    order = alpha if isinstance(alpha, FractionalOrder) else FractionalOrder(alpha)
    al = order.alpha
    if not 0.0 < al < 1.0:
        raise ValueError(f"moment expansion requires 0 < alpha < 1, got {al}")
    K = int(K)
    if K < 2:
        raise ValueError(f"K must be >= 2, got {K}")

    g_a = gamma(al)
    g_am1 = gamma(al - 1.0)
    g_1ma = gamma(1.0 - al)
    g_2ma = gamma(2.0 - al)

    ratios = {p: _ratio(p, al) for p in range(1, K + 1)}
    A = (1.0 + sum(ratios[p] / g_a for p in range(2, K + 1))) / g_1ma
    # Gamma(p-1+alpha)/p! = ratios[p] / p
    B = (1.0 + sum(ratios[p] / (g_am1 * p) for p in range(1, K + 1))) / g_2ma
    C = tuple(ratios[p] / (g_2ma * g_am1) for p in range(2, K + 1))
    return MomentScheme(order, K, A, B, C)


def moment_states(x: SampledFunction, a: float, K: int, rule: str = "product") -> MomentStates:
    """Integrate ``V_p' = (1-p)(t-a)^(p-2) x`` from ``V_p(a) = 0`` on the grid of *x*.

    ``rule="product"`` (default) integrates the piecewise-linear interpolant
    of *x* exactly against the power weight, so affine inputs are reproduced
    to rounding and the error near ``t = a`` scales like the truncation bound.
    ``rule="trapezoid"`` applies the composite trapezoidal rule to the whole
    integrand. Both are second order on smooth inputs.
    """
    t = x.grid
    if t[0] != a:
        raise ValueError("grid must start at a")
    s = t - a
    p = np.arange(2, K + 1, dtype=float)[:, None]
    V = np.zeros((K - 1, t.size))
    if t.size == 1:
        return MomentStates(t.copy(), V)
    if rule == "trapezoid":
        rhs = (1.0 - p) * s[None, :] ** (p - 2.0) * x.values[None, :]
        incr = 0.5 * np.diff(t)[None, :] * (rhs[:, 1:] + rhs[:, :-1])
    elif rule == "product":
        # on [s0, s1]: x = c0 + c1*s, and (1-p) * int s^(p-2) (c0 + c1 s) ds
        s0, s1 = s[:-1], s[1:]
        c1 = np.diff(x.values) / np.diff(s)
        c0 = x.values[:-1] - c1 * s0
        m1 = (s1[None, :] ** (p - 1.0) - s0[None, :] ** (p - 1.0)) / (p - 1.0)
        m2 = (s1[None, :] ** p - s0[None, :] ** p) / p
        incr = (1.0 - p) * (c0[None, :] * m1 + c1[None, :] * m2)
    else:
        raise ValueError(f"unknown integration rule {rule!r}")
    V[:, 1:] = np.cumsum(incr, axis=1)
    return MomentStates(t.copy(), V)


def _expansion(scheme: MomentScheme, s: float, x: float, xdot: float, V: np.ndarray) -> float:
    al = scheme.alpha.alpha
    p = scheme.powers
    C = np.asarray(scheme.C)
    return (
        scheme.A * s ** (-al) * x
        + scheme.B * s ** (1.0 - al) * xdot
        - float(np.sum(C * s ** (1.0 - p - al) * V))
    )


def approx_rl(
    x: SampledFunction,
    xdot: SampledFunction,
    V: MomentStates,
    scheme: MomentScheme,
    j: int,
) -> float:
    """Truncated moment expansion of the Riemann-Liouville derivative at node *j*.

    The value at ``t = a`` is defined as 0.
    """
    a = x.a
    s = x.grid[j] - a
    if s == 0.0:
        return 0.0
    return _expansion(scheme, s, x.values[j], xdot.values[j], V.V[:, j])


def approx_caputo(
    x: SampledFunction,
    xdot: SampledFunction,
    V: MomentStates,
    scheme: MomentScheme,
    x_a: float,
    j: int,
) -> float:
    """Caputo counterpart of :func:`approx_rl` (subtracts the ``x(a)`` term)."""
    s = x.grid[j] - x.a
    if s == 0.0:
        return 0.0
    al = scheme.alpha.alpha
    return approx_rl(x, xdot, V, scheme, j) - x_a * s ** (-al) / gamma(1.0 - al)


def error_bound(alpha: "FractionalOrder | float", K: int, a: float, t, M2: float):
    """Truncation error bound of the ``K``-term expansion at time *t*.

    ``M2`` bounds ``|x''|`` on ``[a, t]``.
    """
    al = alpha.alpha if isinstance(alpha, FractionalOrder) else float(alpha)
    const = math.exp((1.0 - al) ** 2 + 1.0 - al) / (gamma(2.0 - al) * (1.0 - al) * K ** (1.0 - al))
    out = M2 * const * (np.asarray(t, dtype=float) - a) ** (2.0 - al)
    return float(out) if np.ndim(out) == 0 else out
