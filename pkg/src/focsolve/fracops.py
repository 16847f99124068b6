r"""Reference fractional operators and special functions.

Everything here is a pure function of its inputs. These routines serve two
purposes: they supply the gamma values used by the moment expansion, and they
act as independent oracles (closed-form power rule, L1 quadrature, truncated
power series) against which the expansion is tested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "FractionalOrder",
    "SampledFunction",
    "PoleError",
    "FracDomainError",
    "gamma",
    "lgamma",
    "frac_binomial",
    "caputo_power",
    "caputo_l1",
    "l1_error_bound",
    "rl_from_caputo",
    "rl_series",
]


class PoleError(ValueError):
    """Raised when the gamma function is evaluated at a pole."""


class FracDomainError(ValueError):
    """Raised when an operator is evaluated outside its domain."""


# Lanczos approximation, g = 7, nine terms (Godfrey's coefficients).
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _is_pole(x: float) -> bool:
    return x <= 0.0 and x == math.floor(x)


def _sin_pi(x: float) -> float:
    # exact argument reduction keeps relative accuracy near the poles
    k = round(x)
    r = x - k
    s = math.sin(math.pi * r)
    return -s if k % 2 else s


def _lanczos_sum(z: float) -> float:
    s = _LANCZOS_COEF[0]
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        s += c / (z + i)
    return s


def gamma(x: float) -> float:
    """Gamma function via the Lanczos approximation with reflection.

    Accurate to roughly 14 significant digits on [-20, 50].

    :raises PoleError: if *x* is zero or a negative integer.
    """
    x = float(x)
    if not math.isfinite(x):
        raise FracDomainError(f"gamma of non-finite argument {x!r}")
    if _is_pole(x):
        raise PoleError(f"gamma has a pole at {x!r}")
    if x < 0.5:
        return math.pi / (_sin_pi(x) * gamma(1.0 - x))
    if x == math.floor(x) and x <= 171:
        return float(math.factorial(int(x) - 1))
    z = x - 1.0
    t = z + _LANCZOS_G + 0.5
    if x > 140.0:
        return math.exp(lgamma(x)[0])
    # split the power to avoid overflow in t**(z+0.5)
    half = t ** (0.5 * (z + 0.5))
    return _SQRT_2PI * half * (half * math.exp(-t)) * _lanczos_sum(z)


def lgamma(x: float) -> tuple[float, int]:
    """Return ``(log|Gamma(x)|, sign(Gamma(x)))``."""
    x = float(x)
    if _is_pole(x):
        raise PoleError(f"gamma has a pole at {x!r}")
    if x < 0.5:
        s = _sin_pi(x)
        val, sgn = lgamma(1.0 - x)
        return (
            math.log(math.pi) - math.log(abs(s)) - val,
            sgn * (1 if s > 0 else -1),
        )
    z = x - 1.0
    t = z + _LANCZOS_G + 0.5
    return _LOG_SQRT_2PI + (z + 0.5) * math.log(t) - t + math.log(_lanczos_sum(z)), 1


@dataclass(frozen=True)
class FractionalOrder:
    """Order of a fractional operator.

    ``FractionalOrder(0.5)`` accepts any finite positive order; use
    :meth:`for_solver` where the order must lie in (0, 1).
    """

    alpha: float

    def __post_init__(self) -> None:
        a = float(self.alpha)
        if not math.isfinite(a) or a <= 0.0:
            raise FracDomainError(f"fractional order must be finite and > 0, got {self.alpha!r}")
        object.__setattr__(self, "alpha", a)

    @classmethod
    def for_solver(cls, alpha: float) -> "FractionalOrder":
        order = cls(alpha)
        if not 0.0 < order.alpha < 1.0:
            raise FracDomainError(f"solver requires 0 < alpha < 1, got {alpha!r}")
        return order

    @property
    def n(self) -> int:
        """Integer ``n`` with ``n - 1 < alpha <= n`` (Caputo convention)."""
        if self.alpha == math.floor(self.alpha):
            return int(self.alpha)
        return int(math.floor(self.alpha)) + 1

    def __float__(self) -> float:
        return self.alpha


def _alpha(alpha: "FractionalOrder | float") -> float:
    return alpha.alpha if isinstance(alpha, FractionalOrder) else float(alpha)


@dataclass(frozen=True)
class SampledFunction:
    """Values of a scalar function on a strictly increasing grid."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or values.shape != grid.shape:
            raise ValueError("grid and values must be 1-d arrays of equal length")
        if grid.size < 1:
            raise ValueError("grid must not be empty")
        if np.any(np.diff(grid) <= 0.0):
            raise ValueError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def a(self) -> float:
        return float(self.grid[0])

    @classmethod
    def from_callable(cls, func, grid) -> "SampledFunction":
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.asarray(func(grid), dtype=float) * np.ones_like(grid))


def frac_binomial(alpha: "FractionalOrder | float", k: int) -> float:
    r"""Generalized binomial coefficient used in the Riemann-Liouville series.

    .. math::

        \binom{\alpha}{k} = \frac{(-1)^{k-1}\alpha\,\Gamma(k-\alpha)}
            {\Gamma(1-\alpha)\,\Gamma(k+1)}

    Evaluated through log-gamma with sign tracking. When both
    :math:`\Gamma(k-\alpha)` and :math:`\Gamma(1-\alpha)` sit on poles the
    ratio is replaced by its limit, the finite product
    :math:`\prod_{j=1}^{k-1}(j-\alpha)`.
    """
    a = _alpha(alpha)
    k = int(k)
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0:
        return 1.0
    if _is_pole(k - a) or _is_pole(1.0 - a):
        prod = 1.0
        for j in range(1, k):
            prod *= j - a
        return (-1) ** (k - 1) * a * prod / math.factorial(k)
    lnum, snum = lgamma(k - a)
    lden, sden = lgamma(1.0 - a)
    ratio = snum * sden * math.exp(lnum - lden - math.lgamma(k + 1.0))
    return (-1) ** (k - 1) * a * ratio


def caputo_power(alpha: "FractionalOrder | float", beta: float, a: float, t):
    """Caputo derivative of ``(t - a)**(beta - 1)``.

    Works on scalars and arrays of *t*. Requires ``beta > n`` where ``n`` is
    the Caputo integer attached to *alpha*.
    """
    order = alpha if isinstance(alpha, FractionalOrder) else FractionalOrder(alpha)
    if not beta > order.n:
        raise FracDomainError(f"power rule needs beta > {order.n}, got beta={beta}")
    s = np.asarray(t, dtype=float) - a
    if np.any(s < 0.0):
        raise FracDomainError("t must satisfy t >= a")
    out = gamma(beta) / gamma(beta - order.alpha) * s ** (beta - order.alpha - 1.0)
    return float(out) if np.ndim(out) == 0 else out


def caputo_l1(x: SampledFunction, alpha: "FractionalOrder | float", j: int) -> float:
    r"""L1 quadrature of the Caputo derivative at grid node *j*.

    The derivative of the piecewise-linear interpolant of *x* is integrated
    exactly against the kernel :math:`(t_j-\tau)^{-\alpha}/\Gamma(1-\alpha)`.
    Non-uniform grids are supported.
    """
    a = _alpha(alpha)
    if not 0.0 < a < 1.0:
        raise FracDomainError("L1 scheme requires 0 < alpha < 1")
    n = x.grid.size
    if not 1 <= j < n:
        raise IndexError(f"node index {j} out of range [1, {n - 1}]")
    t = x.grid[: j + 1]
    slopes = np.diff(x.values[: j + 1]) / np.diff(t)
    tj = t[j]
    w = (tj - t[:-1]) ** (1.0 - a) - (tj - t[1:]) ** (1.0 - a)
    return float(np.dot(slopes, w) / gamma(2.0 - a))


def l1_error_bound(alpha: "FractionalOrder | float", h: float, M2: float) -> float:
    """Truncation bound of the L1 scheme on a uniform grid of step *h*.

    ``M2`` bounds ``|x''|`` on the interval. Constant from the classical
    analysis of the L1 scheme for ``0 < alpha < 1``.
    """
    a = _alpha(alpha)
    const = (1.0 - a) / 12.0 + 2.0 ** (2.0 - a) / (2.0 - a) - (1.0 + 2.0 ** (-a))
    return M2 * const * h ** (2.0 - a) / gamma(2.0 - a)


def rl_from_caputo(caputo_value: float, x_a: float, alpha, a: float, t: float) -> float:
    """Riemann-Liouville derivative from the Caputo one, for 0 < alpha < 1."""
    al = _alpha(alpha)
    if not 0.0 < al < 1.0:
        raise FracDomainError("relation implemented for 0 < alpha < 1 only")
    if x_a == 0.0:
        return float(caputo_value)
    if t <= a:
        raise FracDomainError("Riemann-Liouville derivative is singular at t = a when x(a) != 0")
    return float(caputo_value) + x_a * (t - a) ** (-al) / gamma(1.0 - al)


def rl_series(derivs: Sequence[float], alpha, a: float, t: float, k_max: int) -> float:
    """Truncated power series of the Riemann-Liouville derivative.

    ``derivs[k]`` holds the k-th derivative of x at *t*. Intended for testing
    on analytic functions only.
    """
    al = _alpha(alpha)
    if t <= a:
        raise FracDomainError("series is singular at t = a")
    if len(derivs) < k_max + 1:
        raise ValueError(f"need {k_max + 1} derivative values, got {len(derivs)}")
    s = t - a
    total = 0.0
    for k in range(k_max + 1):
        dk = float(derivs[k])
        if dk == 0.0:
            continue
        total += frac_binomial(al, k) * s ** (k - al) / gamma(k + 1.0 - al) * dk
    return total
