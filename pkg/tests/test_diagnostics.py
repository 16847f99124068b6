from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from focsolve.diagnostics import ModeError, hamiltonian, hamiltonian_partials, pontryagin_check
from focsolve.focp import Focp, build_augmented
from focsolve.optim import solve
from focsolve.transcribe import Grid, Trajectory, transcribe

from conftest import worked_problem


def classical(L, f, K=2):
    return build_augmented(Focp(alpha=0.5, M=1.0, N=0.0, a=0.0, b=1.0, x_a=1.0, L=L, f=f), K)


class TestHamiltonian:
    def test_zero_costate(self, worked_aug):
        H = hamiltonian(worked_aug, 0.3, 0.2, np.array([0.1, 0.4]), np.zeros(3), 1.5)
        assert H == pytest.approx((1.5**2 - 0.8) ** 2, rel=1e-14)

    def test_reduces_to_control(self):
        aug = classical("0", "u")
        assert hamiltonian(aug, 0.4, 0.7, np.array([0.2]), np.array([1.0, 0.0]), -0.3) == -0.3

    def test_worked_point(self, worked_aug):
        t, x, u = 0.5, 0.25, 1.0
        V = np.array([-(t**3) / 3, -(t**4) / 2])
        s = worked_aug.scheme
        F = (1.0 + 2 / 1.329340388179137 * t**1.5 - s.A * t**-0.5 * x + s.C[0] * t**-1.5 * V[0] + s.C[1] * t**-2.5 * V[1]) / (
            1 + s.B * t**0.5
        )
        L = (u * u - 4 * x) ** 2
        assert hamiltonian(worked_aug, t, x, V, np.array([1.0, 0.0, 0.0]), u) == pytest.approx(L + F, rel=1e-12)

    def test_moment_terms(self, worked_aug):
        # lambda_p multiplies (1-p)(t-a)^(p-2) x; u^2 = 4x makes L vanish
        H = hamiltonian(worked_aug, 0.5, 2.0, np.zeros(2), np.array([0.0, 1.0, 1.0]), np.sqrt(8.0))
        assert H == pytest.approx(-1 * 2.0 + -2 * 0.5 * 2.0, rel=1e-12, abs=1e-12)

    @given(
        st.lists(st.floats(-10, 10), min_size=3, max_size=3),
        st.lists(st.floats(-10, 10), min_size=3, max_size=3),
        st.floats(0.01, 1.0),
    )
    def test_affine_in_costate(self, l1, l2, t):
        aug = build_augmented(worked_problem(), 3)
        args = (t, 0.3, np.array([0.1, -0.2]))
        u = 0.8
        H = lambda lam: hamiltonian(aug, *args, np.asarray(lam), u)
        lhs = H(np.add(l1, l2)) + H(np.zeros(3))
        rhs = H(l1) + H(l2)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-9)

    def test_no_moment_coupling_when_classical(self, rng):
        aug = classical("u^2 + x^2", "u - x", K=4)
        for _ in range(5):
            _, HV, _ = hamiltonian_partials(aug, rng.uniform(0, 1), rng.normal(), rng.normal(size=3), rng.normal(size=4), rng.normal())
            assert np.all(HV == 0.0)

    def test_vectorised(self, worked_aug):
        t = np.linspace(0.1, 1, 4)
        H = hamiltonian(worked_aug, t, t, np.zeros((2, 4)), np.ones((3, 4)), t)
        assert H.shape == (4,)


class TestCheck:
    def test_hand_built_two_intervals(self):
        aug = classical("u^2 + x^2", "u - x")
        g = Grid(2, 0.0, 1.0)
        dt = 0.5
        x = np.array([1.0, 0.6, 0.5])
        V = np.array([[0.0, -0.5, -0.8]])
        u = np.array([0.2, -0.4])
        mu = np.array([0.3, -0.1, 0.05, 0.02])  # x defects (2), V defects (2)
        rep = pontryagin_check(aug, g, SimpleNamespace(trajectory=Trajectory(g, x, u, V), multipliers=mu))
        lam1 = -mu[:2] / dt  # lambda_1 at nodes 1, 2
        lam2 = -mu[2:] / dt
        # node 1: H_u = 2u + lambda_1(t_1); H_x = 2x - lambda_1 - lambda_2 (V_2' = -x)
        assert rep.stationarity_residual == pytest.approx(abs(2 * u[1] + lam1[0]), rel=1e-14)
        res_x = (lam1[1] - lam1[0]) / dt + (2 * x[1] - lam1[1] - lam2[1])
        res_V = (lam2[1] - lam2[0]) / dt
        assert rep.costate_defect == pytest.approx(max(abs(res_x), abs(res_V)), rel=1e-14)
        np.testing.assert_allclose(rep.transversality, [lam1[1], lam2[1]])
        assert rep.free_endpoint

    def test_shooting_has_no_multipliers(self, worked_aug):
        g = Grid(20, 0.0, 1.0)
        rep = solve(transcribe(worked_aug, g, "shooting"))
        with pytest.raises(ModeError):
            pontryagin_check(worked_aug, g, rep)
        with pytest.raises(ModeError):
            pontryagin_check(worked_aug, g, SimpleNamespace(trajectory=rep.trajectory, multipliers=None))

    def test_trivial_problem(self):
        P = Focp(alpha=0.5, M=1.0, N=1.0, a=0.0, b=1.0, x_a=0.0, L="0", f="u")
        aug = build_augmented(P, 3)
        g = Grid(50, 0.0, 1.0)
        rep = solve(transcribe(aug, g, "full"))
        assert rep.converged
        assert np.max(np.abs(rep.multipliers)) <= 1e-8
        pr = pontryagin_check(aug, g, rep)
        assert pr.stationarity_residual <= 1e-6
        assert pr.transversality_residual <= 1e-6

    def test_explicit_multipliers_override(self, worked_aug):
        g = Grid(30, 0.0, 1.0)
        rep = solve(transcribe(worked_aug, g, "full"))
        a = pontryagin_check(worked_aug, g, rep)
        b = pontryagin_check(worked_aug, g, rep, rep.multipliers.copy())
        assert a.stationarity_residual == b.stationarity_residual
        c = pontryagin_check(worked_aug, g, rep, np.zeros_like(rep.multipliers))
        assert c.stationarity_residual != a.stationarity_residual

    def test_fixed_endpoint_transversality(self, worked_aug):
        g = Grid(50, 0.0, 1.0)
        pr = pontryagin_check(worked_aug, g, solve(transcribe(worked_aug, g, "full")))
        assert not pr.free_endpoint
        assert pr.transversality_residual <= 1e-6  # lambda_p(b), p >= 2
        assert pr.lambda_1_b != 0.0

    def test_residuals_nonnegative(self, worked_aug):
        g = Grid(30, 0.0, 1.0)
        pr = pontryagin_check(worked_aug, g, solve(transcribe(worked_aug, g, "full")))
        assert pr.stationarity_residual >= 0 and pr.costate_defect >= 0
