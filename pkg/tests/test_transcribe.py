import math

import numpy as np
import pytest

from focsolve.focp import Focp, build_augmented
from focsolve.transcribe import (
    DefectCoordinates,
    Grid,
    NonFiniteStateError,
    Trajectory,
    discrete_objective,
    gradient,
    simulate,
    transcribe,
)

from conftest import central_difference, small_grid

SQRT_PI = math.sqrt(math.pi)


def classical(L="u^2", f="u", x_a=0.0, M=1.0, x_b=None):
    return build_augmented(Focp(alpha=0.5, M=M, N=0.0, a=0.0, b=1.0, x_a=x_a, x_b=x_b, L=L, f=f), 2)


class TestGrid:
    def test_nodes(self):
        g = Grid(4, 1.0, 2.0)
        assert g.dt == 0.25
        np.testing.assert_array_equal(g.nodes, [1.0, 1.25, 1.5, 1.75, 2.0])

    def test_offset(self):
        g = Grid(3, 0.0, 1.0, offset=True)
        assert g.dt == 0.25
        np.testing.assert_array_equal(g.nodes, [0.25, 0.5, 0.75, 1.0])

    @pytest.mark.parametrize("n", [0, 1, 2.5])
    def test_rejects(self, n):
        with pytest.raises(ValueError):
            Grid(n, 0.0, 1.0)


class TestSimulate:
    def test_constant_rhs_exact(self):
        aug = classical(f="1", x_a=0.5)
        g = Grid(4, 0.0, 1.0)
        tr = simulate(aug, g, np.zeros(4))
        np.testing.assert_array_equal(tr.x, 0.5 + np.arange(5) * 0.25)

    def test_zero_fixed_point(self, worked):
        P = Focp(alpha=0.5, M=1.0, N=1.0, a=0.0, b=1.0, x_a=0.0, L="u^2", f="u")
        tr = simulate(build_augmented(P, 3), Grid(10, 0.0, 1.0), np.zeros(10))
        assert np.all(tr.x == 0.0) and np.all(tr.V == 0.0)

    def test_initial_values(self, worked_aug, rng):
        tr = simulate(worked_aug, small_grid(), rng.normal(size=20))
        assert tr.x[0] == 0.0 and np.all(tr.V[:, 0] == 0.0)
        assert tr.V.shape == (2, 21)

    def test_exact_control(self, worked_aug):
        g = Grid(100, 0.0, 1.0)
        tr = simulate(worked_aug, g, 2 * g.nodes[:-1])
        assert abs(tr.x[-1] - 1.0) <= 0.1
        assert tr.x[-1] == pytest.approx(0.977143152016176, rel=1e-12)

    def test_refinement(self, worked_aug):
        errs = []
        for n in (25, 50, 100, 200):
            g = Grid(n, 0.0, 1.0)
            errs.append(abs(simulate(worked_aug, g, 2 * g.nodes[:-1]).x[-1] - 1.0))
        assert errs == sorted(errs, reverse=True)

    def test_non_finite(self):
        aug = classical(f="1e300", M=1e-10)
        with pytest.raises(NonFiniteStateError) as info:
            simulate(aug, Grid(4, 0.0, 1.0), np.zeros(4))
        assert info.value.step == 1

    def test_length_check(self, worked_aug):
        with pytest.raises(ValueError):
            simulate(worked_aug, small_grid(), np.zeros(5))


class TestObjective:
    def _traj(self, g, x, u):
        return Trajectory(g, x, u, np.zeros((1, g.n + 1)))

    def test_unit_integrand(self):
        aug = classical(L="1")
        g = Grid(7, 0.0, 1.0)
        assert discrete_objective(aug, g, self._traj(g, np.zeros(8), np.zeros(7))) == pytest.approx(1.0, rel=1e-15)

    def test_unit_control(self):
        aug = classical(L="u^2")
        g = Grid(8, 0.0, 1.0)
        assert discrete_objective(aug, g, self._traj(g, np.zeros(9), np.ones(8))) == 1.0

    def test_exact_pair(self, worked_aug):
        g = Grid(100, 0.0, 1.0)
        t = g.nodes
        tr = Trajectory(g, t**2, 2 * t[:-1], np.zeros((2, 101)))
        assert discrete_objective(worked_aug, g, tr) == 0.0

    def test_mode_invariant(self, worked_aug, rng):
        g = small_grid()
        u = rng.normal(size=20)
        full = transcribe(worked_aug, g, "full")
        shoot = transcribe(worked_aug, g, "shooting")
        assert full.objective(full.pack(simulate(worked_aug, g, u))) == shoot.objective(u)


class TestLayout:
    def test_counts(self, worked_aug):
        g = Grid(100, 0.0, 1.0)
        full = transcribe(worked_aug, g, "full")
        assert (full.n_var, full.n_con) == (400, 301)
        shoot = transcribe(worked_aug, g, "shooting")
        assert (shoot.n_var, shoot.n_con) == (100, 1)

    def test_free_endpoint_counts(self):
        P = Focp(alpha=0.5, M=1.0, N=1.0, a=0.0, b=1.0, x_a=0.0, L="u^2", f="u")
        aug = build_augmented(P, 3)
        g = Grid(100, 0.0, 1.0)
        assert transcribe(aug, g, "shooting").n_con == 0
        assert transcribe(aug, g, "full").n_con == 300

    def test_pack_round_trip(self, worked_aug, rng):
        nlp = transcribe(worked_aug, small_grid(), "full")
        z = rng.normal(size=nlp.n_var)
        np.testing.assert_array_equal(nlp.pack(nlp.unpack(z)), z)

    def test_unknown_mode(self, worked_aug):
        with pytest.raises(ValueError):
            transcribe(worked_aug, small_grid(), "collocation")

    def test_initial_point_is_simulated(self, worked_aug):
        nlp = transcribe(worked_aug, small_grid(), "full")
        z0 = nlp.initial_point()
        assert np.all(nlp.constraints(z0)[:-1] == 0.0)
        assert np.all(z0[nlp.control_slice()] == 0.0)


class TestDefects:
    def test_hand_computed(self):
        P = Focp(alpha=0.5, M=1.0, N=1.0, a=0.0, b=1.0, x_a=0.5, L="u^2", f="x + u")
        aug = build_augmented(P, 2)
        nlp = transcribe(aug, Grid(2, 0.0, 1.0), "full")
        x1, x2, V1, V2, u0, u1 = 0.7, 0.9, -0.2, -0.5, 0.1, -0.3
        dt = 0.5
        A, B, C2 = 1.5 / SQRT_PI, 0.75 / SQRT_PI, -0.5 / SQRT_PI
        # step 0 uses the t = a limit F = f / M; V_2' = -x
        F0 = 0.5 + u0
        # step 1 at t = 0.5
        s = 0.5
        F1 = (x1 + u1 - A * s**-0.5 * x1 + C2 * s**-1.5 * V1 + 0.5 * s**-0.5 / SQRT_PI) / (1 + B * s**0.5)
        expected = np.array(
            [
                (x1 - 0.5 - dt * F0) / dt,
                (x2 - x1 - dt * F1) / dt,
                (V1 - 0.0 + dt * 0.5) / dt,
                (V2 - V1 + dt * x1) / dt,
            ]
        )
        got = nlp.constraints(np.array([x1, x2, V1, V2, u0, u1]))
        np.testing.assert_allclose(got, expected, rtol=1e-12, atol=1e-15)
        assert got[0] == pytest.approx(-0.2, rel=1e-12)
        assert got[2] == pytest.approx(0.1, rel=1e-12)
        np.testing.assert_allclose(nlp.defects(np.array([x1, x2, V1, V2, u0, u1])), dt * expected, rtol=1e-12)

    @pytest.mark.parametrize("n", [5, 37, 100])
    def test_exactly_zero_at_simulated_point(self, worked_aug, classical_aug, rng, n):
        g = Grid(n, 0.0, 1.0)
        for aug in (worked_aug, classical_aug):
            nlp = transcribe(aug, g, "full")
            z = nlp.pack(simulate(aug, g, rng.normal(size=n)))
            assert np.all(nlp.constraints(z)[: aug.K * n] == 0.0)


class TestGradient:
    @pytest.mark.parametrize("mode", ["full", "shooting"])
    def test_against_finite_differences(self, worked_aug, rng, mode):
        nlp = transcribe(worked_aug, small_grid(), mode)
        for _ in range(5):
            z = nlp.initial_point() + 0.3 * rng.normal(size=nlp.n_var)
            fd = central_difference(nlp.objective, z)
            g = gradient(nlp, z)
            assert np.max(np.abs(g - fd)) <= 1e-5 * np.max(np.abs(fd))

    @pytest.mark.parametrize("mode", ["full", "shooting"])
    def test_jacobian_products(self, worked_aug, rng, mode):
        nlp = transcribe(worked_aug, small_grid(), mode)
        z = nlp.initial_point() + 0.3 * rng.normal(size=nlp.n_var)
        J = nlp.jacobian(z)
        for k in rng.choice(nlp.n_con, size=min(5, nlp.n_con), replace=False):
            fd = central_difference(lambda zz: nlp.constraints(zz)[k], z)
            np.testing.assert_allclose(J[k], fd, atol=1e-6 * max(1.0, np.max(np.abs(fd))))
        w = rng.normal(size=nlp.n_con)
        np.testing.assert_allclose(nlp.jacobian_T_product(z, w), J.T @ w, rtol=1e-12, atol=1e-12)

    def test_quadratic_toy(self, rng):
        aug = classical(L="u^2", f="u")
        g = Grid(10, 0.0, 1.0)
        u = rng.normal(size=10)
        np.testing.assert_allclose(gradient(transcribe(aug, g, "shooting"), u), 2 * g.dt * u, rtol=1e-14)

    def test_zero_problem(self):
        aug = classical(L="u^2 + x^2", f="u")
        nlp = transcribe(aug, Grid(10, 0.0, 1.0), "full")
        assert np.all(gradient(nlp, np.zeros(nlp.n_var)) == 0.0)

    def test_weight_length_checked(self, worked_aug):
        nlp = transcribe(worked_aug, small_grid(), "shooting")
        with pytest.raises(ValueError):
            nlp.lagrangian_gradient(np.zeros(20), np.zeros(3))


class TestDefectCoordinates:
    def test_round_trip(self, worked_aug, rng):
        nlp = transcribe(worked_aug, small_grid(), "full")
        view = DefectCoordinates(nlp)
        z = nlp.initial_point() + 0.1 * rng.normal(size=nlp.n_var)
        np.testing.assert_allclose(view.to_z(view.from_z(z)), z, rtol=1e-12, atol=1e-12)

    def test_constraints_are_coordinates(self, worked_aug, rng):
        nlp = transcribe(worked_aug, small_grid(), "full")
        view = DefectCoordinates(nlp)
        y = rng.normal(size=nlp.n_var)
        _, c = view.evaluate(y)
        np.testing.assert_allclose(c[:-1], y[: 3 * 20], rtol=1e-10, atol=1e-12)

    def test_gradient(self, worked_aug, rng):
        nlp = transcribe(worked_aug, small_grid(), "full")
        view = nlp.solver_view()
        y = view.initial_point() + 0.1 * rng.normal(size=nlp.n_var)
        w = rng.normal(size=nlp.n_con)

        def lag(yy):
            f, c = view.evaluate(yy)
            return f + w @ c

        fd = central_difference(lag, y)
        g = view.lagrangian_gradient(y, w)
        assert np.max(np.abs(g - fd)) <= 1e-6 * np.max(np.abs(fd))

    def test_shooting_has_no_view(self, worked_aug):
        nlp = transcribe(worked_aug, small_grid(), "shooting")
        assert nlp.solver_view() is nlp
        with pytest.raises(ValueError):
            DefectCoordinates(nlp)
