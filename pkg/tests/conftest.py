import numpy as np
import pytest

from focsolve import Focp, Grid, build_augmented

WORKED_L = "(u^2 - 4*x)^2"
WORKED_F = "u + 2/gamma(2.5)*t^1.5"


def worked_problem(x_b=1.0):
    """Fractional problem with known optimum x = t^2, u = 2t."""
    return Focp(alpha=0.5, M=1.0, N=1.0, a=0.0, b=1.0, x_a=0.0, x_b=x_b, L=WORKED_L, f=WORKED_F)


@pytest.fixture
def worked():
    return worked_problem()


@pytest.fixture
def worked_aug(worked):
    return build_augmented(worked, 3)


@pytest.fixture
def classical_aug():
    """N = 0: plain ODE x' = u - x with L = u^2 + x^2, free endpoint."""
    P = Focp(alpha=0.5, M=1.0, N=0.0, a=0.0, b=1.0, x_a=1.0, L="u^2 + x^2", f="u - x")
    return build_augmented(P, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def central_difference(fun, z, h=1e-6):
    g = np.empty_like(z)
    for k in range(z.size):
        e = np.zeros_like(z)
        e[k] = h
        g[k] = (fun(z + e) - fun(z - e)) / (2 * h)
    return g


def small_grid(n=20):
    return Grid(n, 0.0, 1.0)
