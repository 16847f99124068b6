"""Euler transcription of an augmented system into a nonlinear program.

Two decision layouts are offered:

``full``
    ``z = (x_1..x_n, V_2[1..n], ..., V_K[1..n], u_0..u_{n-1})`` with one Euler
    defect per step and state, plus ``x_n = x_b`` when the endpoint is fixed.
    Defects are stored divided by ``dt``:
    ``(x_{i+1} - (x_i + dt F_i)) / dt``.
``shooting``
    ``z = (u_0..u_{n-1})``; states come from :func:`simulate` and the only
    possible constraint is ``x_n = x_b``.

Gradients are exact (reverse sweep over the Euler recursion in shooting
mode, sparse stencils in full mode).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .focp import AugmentedSystem
from .fracops import gamma

__all__ = [
    "Grid",
    "Trajectory",
    "DiscreteNlp",
    "DefectCoordinates",
    "NonFiniteStateError",
    "simulate",
    "discrete_objective",
    "transcribe",
    "gradient",
]

MODES = ("full", "shooting")


class NonFiniteStateError(FloatingPointError):
    """The forward recursion produced a non-finite value."""

    def __init__(self, step: int):
        super().__init__(f"non-finite state at step {step}")
        self.step = step


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``t_i = a + i dt``, ``i = 0..n``.

    With ``offset=True`` the first node is moved to ``a + dt`` (and
    ``dt = (b - a) / (n + 1)``) so that no node sits on the singular point
    ``t = a``; this is how problems with ``M = 0`` are handled.
    """

    n: int
    a: float
    b: float
    offset: bool = False

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"grid needs n >= 2 intervals, got {self.n}")
        if not self.b > self.a:
            raise ValueError("grid needs b > a")

    @property
    def dt(self) -> float:
        return (self.b - self.a) / (self.n + 1 if self.offset else self.n)

    @cached_property
    def nodes(self) -> np.ndarray:
        shift = 1 if self.offset else 0
        t = self.a + (np.arange(self.n + 1) + shift) * self.dt
        t[-1] = self.b
        return t


@dataclass(frozen=True)
class Trajectory:
    """States on all ``n + 1`` nodes and piecewise-constant controls on ``n``."""

    grid: Grid
    x: np.ndarray
    u: np.ndarray
    V: np.ndarray

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes


class _Stepper:
    """Per-grid constants of the Euler recursion.

    ``F = (f + cx*x + sum_r cV[r]*V[r] + shift) * inv_D``. The scalar loop and
    the vectorised evaluation perform the same floating-point operations in
    the same order, so defects at a simulated point vanish exactly.
    """

    def __init__(self, aug: AugmentedSystem, grid: Grid):
        aug.check_grid(grid.nodes[:-1])
        P = aug.focp
        sch = aug.scheme
        t = grid.nodes[:-1]
        self.aug = aug
        self.t = t
        self.dt = grid.dt
        s_a, s_p = aug._powers(t - P.a)
        self.inv_D = 1.0 / aug.denominator(t)
        self.coef_x = -P.N * sch.A * s_a
        self.coef_V = P.N * np.asarray(sch.C)[:, None] * s_p
        self.shift = P.N * P.x_a * s_a / gamma(1.0 - P.alpha)
        self.w = aug.moment_weights(t)  # (K-1, n)
        self.f = aug._f.scalar
        # plain-float rows for the sequential loops
        self._rows = list(
            zip(
                t.tolist(),
                self.coef_x.tolist(),
                self.coef_V.T.tolist(),
                self.shift.tolist(),
                self.inv_D.tolist(),
                self.w.T.tolist(),
            )
        )

    def f_values(self, x, u) -> np.ndarray:
        f = self.f
        return np.array([f(ti, xi, ui) for ti, xi, ui in zip(self.t.tolist(), x.tolist(), u.tolist())])

    def rhs(self, fval, x, V):
        """Right-hand sides ``(F, G)`` at all nodes ``0..n-1``."""
        acc = fval + self.coef_x * x
        for r in range(V.shape[0]):
            acc = acc + self.coef_V[r] * V[r]
        return (acc + self.shift) * self.inv_D, self.w * x

    def run(self, x_a: float, u, defects=None):
        """Forward recursion; *defects* (shape ``(K, n)``) enter multiplied by dt."""
        dt = self.dt
        f = self.f
        Km1 = self.w.shape[0]
        rng = range(Km1)
        u = u.tolist()
        d = None if defects is None else defects.T.tolist()
        x = x_a
        V = [0.0] * Km1
        xs = [x]
        Vs = [V]
        for i, (ti, cx, cV, sh, iD, wi) in enumerate(self._rows):
            acc = f(ti, x, u[i]) + cx * x
            for r in rng:
                acc = acc + cV[r] * V[r]
            F = (acc + sh) * iD
            if d is None:
                x_new = x + dt * F
                V = [V[r] + dt * (wi[r] * x) for r in rng]
            else:
                di = d[i]
                x_new = x + dt * F + dt * di[0]
                V = [V[r] + dt * (wi[r] * x) + dt * di[r + 1] for r in rng]
            x = x_new
            xs.append(x)
            Vs.append(V)
        xa = np.array(xs)
        Va = np.array(Vs).T.reshape(Km1, -1)
        bad = ~np.isfinite(xa) | ~np.all(np.isfinite(Va), axis=0)
        if bad.any():
            raise NonFiniteStateError(int(np.flatnonzero(bad)[0]))
        return xa, Va

    def reverse(self, partials, seed_x, seed_V, seed_u):
        """Reverse sweep through the recursion.

        *seed_x* and *seed_V* are direct partials of a scalar with respect to
        the states at nodes ``1..n``, *seed_u* with respect to the controls.
        Returns the total state adjoints at nodes ``1..n`` and the total
        control gradient.
        """
        Fx, FV, Fu = partials
        dt = self.dt
        n = Fx.size
        Km1 = FV.shape[0]
        rng = range(Km1)
        Fx_l, Fu_l = Fx.tolist(), Fu.tolist()
        FV_l, W_l = FV.T.tolist(), self.w.T.tolist()
        sx, sV = seed_x.tolist(), seed_V.T.tolist()
        a_x = [0.0] * n
        a_V = [None] * n
        g_u = np.array(seed_u, dtype=float)
        cx = 0.0
        cV = [0.0] * Km1
        for i in range(n - 1, -1, -1):
            ax = sx[i] + cx
            aV = [sV[i][r] + cV[r] for r in rng]
            a_x[i] = ax
            a_V[i] = aV
            g_u[i] += dt * Fu_l[i] * ax
            wi, fvi = W_l[i], FV_l[i]
            cx = ax + dt * (Fx_l[i] * ax + sum(aV[r] * wi[r] for r in rng))
            cV = [aV[r] + dt * fvi[r] * ax for r in rng]
        return np.array(a_x), np.array(a_V).T.reshape(Km1, n), g_u


def simulate(aug: AugmentedSystem, grid: Grid, u) -> Trajectory:
    """Run the forward Euler recursion from ``x_0 = x_a``, ``V_0 = 0``."""
    return _simulate(_Stepper(aug, grid), grid, u)


def _simulate(st: _Stepper, grid: Grid, u, defects=None) -> Trajectory:
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n,):
        raise ValueError(f"expected {grid.n} controls, got shape {u.shape}")
    x, V = st.run(st.aug.focp.x_a, u, defects)
    return Trajectory(grid, x, u.copy(), V)


def discrete_objective(aug: AugmentedSystem, grid: Grid, traj: Trajectory) -> float:
    """Left-endpoint Riemann sum ``dt * sum_{i<n} L(t_i, x_i, u_i)``."""
    t = grid.nodes[:-1]
    vals = np.broadcast_to(aug.L(t, traj.x[:-1], traj.u), t.shape)
    return float(grid.dt * np.sum(vals))


class DiscreteNlp:
    """Finite-dimensional program obtained by Euler transcription.

    Methods take a flat decision vector *z*. ``lagrangian_gradient(z, w)``
    returns ``grad f(z) + J(z)^T w``, which is all an augmented-Lagrangian
    method needs.
    """

    def __init__(self, aug: AugmentedSystem, grid: Grid, mode: str = "shooting"):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.aug = aug
        self.grid = grid
        self.mode = mode
        self._st = _Stepper(aug, grid)
        n, K = grid.n, aug.K
        self.n_var = n if mode == "shooting" else (K + 1) * n
        fixed = aug.focp.fixed_endpoint
        if mode == "shooting":
            self.n_con = 1 if fixed else 0
        else:
            self.n_con = K * n + (1 if fixed else 0)

    # -- layout -------------------------------------------------------------

    def unpack(self, z) -> Trajectory:
        """Trajectory encoded by *z* (simulated in shooting mode)."""
        z = np.asarray(z, dtype=float)
        if z.shape != (self.n_var,):
            raise ValueError(f"expected {self.n_var} variables, got shape {z.shape}")
        n, K = self.grid.n, self.aug.K
        if self.mode == "shooting":
            return _simulate(self._st, self.grid, z)
        x = np.empty(n + 1)
        x[0] = self.aug.focp.x_a
        x[1:] = z[:n]
        V = np.zeros((K - 1, n + 1))
        V[:, 1:] = z[n : K * n].reshape(K - 1, n)
        return Trajectory(self.grid, x, z[K * n :].copy(), V)

    def pack(self, traj: Trajectory) -> np.ndarray:
        if self.mode == "shooting":
            return np.asarray(traj.u, dtype=float).copy()
        return np.concatenate([traj.x[1:], traj.V[:, 1:].ravel(), traj.u])

    def control_slice(self) -> slice:
        n = self.grid.n
        return slice(self.n_var - n, self.n_var)

    def initial_point(self) -> np.ndarray:
        """Zero controls; in full mode the states follow from simulating them."""
        u = np.zeros(self.grid.n)
        if self.mode == "shooting":
            return u
        return self.pack(_simulate(self._st, self.grid, u))

    # -- values -------------------------------------------------------------

    def objective(self, z) -> float:
        return discrete_objective(self.aug, self.grid, self.unpack(z))

    def _terminal(self, traj: Trajectory) -> np.ndarray:
        if not self.aug.focp.fixed_endpoint:
            return np.zeros(0)
        return np.array([traj.x[-1] - self.aug.focp.x_b])

    def _defects(self, traj: Trajectory) -> np.ndarray:
        st = self._st
        x, V, u = traj.x, traj.V, traj.u
        xi, Vi = x[:-1], V[:, :-1]
        F, G = st.rhs(st.f_values(xi, u), xi, Vi)
        dx = (x[1:] - (xi + st.dt * F)) / st.dt
        dV = (V[:, 1:] - (Vi + st.dt * G)) / st.dt
        return np.concatenate([dx, dV.ravel()])

    def defects(self, z) -> np.ndarray:
        """Unscaled Euler defects ``X_{i+1} - X_i - dt Phi_i`` (full mode), states stacked."""
        if self.mode != "full":
            raise ValueError("defects are constraints of the full mode only")
        return self._defects(self.unpack(z)) * self.grid.dt

    def constraints(self, z) -> np.ndarray:
        traj = self.unpack(z)
        if self.mode == "shooting":
            return self._terminal(traj)
        return np.concatenate([self._defects(traj), self._terminal(traj)])

    def evaluate(self, z) -> tuple[float, np.ndarray]:
        """Objective and constraint values from a single unpacking of *z*."""
        traj = self.unpack(z)
        obj = discrete_objective(self.aug, self.grid, traj)
        if self.mode == "shooting":
            return obj, self._terminal(traj)
        return obj, np.concatenate([self._defects(traj), self._terminal(traj)])

    # -- derivatives --------------------------------------------------------

    def objective_gradient(self, z) -> np.ndarray:
        return self.lagrangian_gradient(z, np.zeros(self.n_con))

    def jacobian_T_product(self, z, w) -> np.ndarray:
        """``J(z)^T w`` for the constraint Jacobian ``J``."""
        return self.lagrangian_gradient(z, w, include_objective=False)

    def lagrangian_gradient(self, z, w, include_objective: bool = True) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n_con,):
            raise ValueError(f"expected {self.n_con} weights, got shape {w.shape}")
        traj = self.unpack(z)
        scale = 1.0 if include_objective else 0.0
        if self.mode == "shooting":
            return self._adjoint(traj, w, scale)
        return self._full_gradient(traj, w, scale)

    def jacobian(self, z) -> np.ndarray:
        """Dense constraint Jacobian, assembled row by row from ``J^T e_k``."""
        J = np.empty((self.n_con, self.n_var))
        for k in range(self.n_con):
            e = np.zeros(self.n_con)
            e[k] = 1.0
            J[k] = self.jacobian_T_product(z, e)
        return J

    def solver_view(self):
        """Object the optimizer iterates on.

        Shooting mode returns the program itself. Full mode returns
        :class:`DefectCoordinates`, the same program expressed in
        (defects, controls) coordinates.
        """
        return self if self.mode == "shooting" else DefectCoordinates(self)

    def node_partials(self, traj: Trajectory):
        """``(F_x, F_V, F_u, L_x, L_u)`` at nodes ``0..n-1``."""
        aug, t = self.aug, self._st.t
        x, u, V = traj.x[:-1], traj.u, traj.V[:, :-1]
        _, Fx, FV, Fu = aug.F_and_partials(t, x, V, u)
        Lx = np.broadcast_to(aug.L_x(t, x, u), t.shape)
        Lu = np.broadcast_to(aug.L_u(t, x, u), t.shape)
        return (
            np.broadcast_to(Fx, t.shape),
            np.broadcast_to(FV, self._st.w.shape),
            np.broadcast_to(Fu, t.shape),
            Lx,
            Lu,
        )

    def _adjoint(self, traj: Trajectory, w: np.ndarray, scale: float) -> np.ndarray:
        n, K, dt = self.grid.n, self.aug.K, self.grid.dt
        Fx, FV, Fu, Lx, Lu = self.node_partials(traj)
        seed_x = np.zeros(n)
        seed_x[:-1] = scale * dt * Lx[1:]
        if w.size:
            seed_x[-1] += w[0]
        _, _, g = self._st.reverse((Fx, FV, Fu), seed_x, np.zeros((K - 1, n)), scale * dt * Lu)
        return g

    def _full_gradient(self, traj: Trajectory, w: np.ndarray, scale: float) -> np.ndarray:
        n, K, dt = self.grid.n, self.aug.K, self.grid.dt
        Fx, FV, Fu, Lx, Lu = self.node_partials(traj)
        W = self._st.w
        mx = w[:n]
        mV = w[n : K * n].reshape(K - 1, n)
        gx = np.zeros(n + 1)  # index = node
        gV = np.zeros((K - 1, n + 1))
        # objective: dt * L at nodes 0..n-1 (node 0 is not a variable)
        gx[:-1] += scale * dt * Lx
        gu = scale * dt * Lu
        # x defects: (x_{i+1} - x_i)/dt - F_i
        gx[1:] += mx / dt
        gx[:-1] -= mx * (1.0 / dt + Fx)
        gV[:, :-1] -= mx[None, :] * FV
        gu = gu - mx * Fu
        # V defects: (V_{p,i+1} - V_{p,i})/dt - w_p(t_i) x_i
        gV[:, 1:] += mV / dt
        gV[:, :-1] -= mV / dt
        gx[:-1] -= np.sum(mV * W, axis=0)
        if self.aug.focp.fixed_endpoint:
            gx[-1] += w[-1]
        return np.concatenate([gx[1:], gV[:, 1:].ravel(), gu])


class DefectCoordinates:
    """Full-mode program in coordinates ``y = (d, u)``.

    ``d`` holds the (dt-scaled) Euler defects in the slots of the states they
    determine; states are recovered by ``X_{i+1} = X_i + dt Phi_i + dt d_i``.
    The map ``y -> z`` is a smooth bijection with ``c(z(y))`` equal to ``d``
    on the defect rows, so constraint values, multipliers and KKT points are
    those of the original program. Iterating on ``y`` removes the long
    coupling chain that makes the state coordinates badly conditioned.
    """

    def __init__(self, nlp: DiscreteNlp):
        if nlp.mode != "full":
            raise ValueError("defect coordinates apply to full mode only")
        self.nlp = nlp
        self.n_var = nlp.n_var
        self.n_con = nlp.n_con
        self.grid = nlp.grid
        self._cache: tuple[bytes, np.ndarray] | None = None

    def control_slice(self) -> slice:
        return self.nlp.control_slice()

    def _split(self, y):
        n, K = self.grid.n, self.nlp.aug.K
        y = np.asarray(y, dtype=float)
        d = np.empty((K, n))
        d[0] = y[:n]
        d[1:] = y[n : K * n].reshape(K - 1, n)
        return d, y[K * n :]

    def to_z(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        key = y.tobytes()
        if self._cache is not None and self._cache[0] == key:
            return self._cache[1].copy()
        d, u = self._split(y)
        z = self.nlp.pack(_simulate(self.nlp._st, self.grid, u, defects=d))
        self._cache = (key, z)
        return z.copy()

    def variable_blocks(self) -> np.ndarray:
        """Labels grouping variables of similar curvature: one per state's defects, one for u."""
        n, K = self.grid.n, self.nlp.aug.K
        return np.repeat(np.arange(K + 1), n)

    def from_z(self, z) -> np.ndarray:
        traj = self.nlp.unpack(z)
        return np.concatenate([self.nlp._defects(traj), traj.u])

    def initial_point(self) -> np.ndarray:
        return self.from_z(self.nlp.initial_point())

    def unpack(self, y) -> Trajectory:
        return self.nlp.unpack(self.to_z(y))

    def evaluate(self, y):
        return self.nlp.evaluate(self.to_z(y))

    def lagrangian_gradient(self, y, w) -> np.ndarray:
        z = self.to_z(y)
        return self.pullback(z, self.nlp.lagrangian_gradient(z, w))

    def pullback(self, z, gz) -> np.ndarray:
        """Map a z-gradient to y-coordinates (``Z^T gz`` with ``Z = dz/dy``)."""
        nlp = self.nlp
        n, K, dt = self.grid.n, nlp.aug.K, self.grid.dt
        Fx, FV, Fu, _, _ = nlp.node_partials(nlp.unpack(z))
        a_x, a_V, g_u = nlp._st.reverse(
            (Fx, FV, Fu), gz[:n], gz[n : K * n].reshape(K - 1, n), gz[K * n :]
        )
        return np.concatenate([dt * a_x, dt * a_V.ravel(), g_u])


def transcribe(aug: AugmentedSystem, grid: Grid, mode: str = "shooting") -> DiscreteNlp:
    """Build the Euler-transcribed program in the requested *mode*."""
    return DiscreteNlp(aug, grid, mode)


def gradient(nlp: DiscreteNlp, z, weights=None) -> np.ndarray:
    """Gradient of the discrete objective, plus ``J^T weights`` when given."""
    if weights is None:
        return nlp.objective_gradient(z)
    return nlp.lagrangian_gradient(z, weights)
