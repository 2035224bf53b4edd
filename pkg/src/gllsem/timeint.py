"""Time integrators: even-derivative Taylor (wave), BDF3 (parabolic), AB4 (Schrodinger).

The steppers work on plain vectors and callables, so they are equally happy
with a scalar test equation and with the unconstrained nodes of a mesh.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .krylov import KrylovConfig, solve

AB4_COEFFS = (55.0 / 24.0, -59.0 / 24.0, 37.0 / 24.0, -9.0 / 24.0)
BDF3_COEFFS = (11.0 / 6.0, -3.0, 1.5, -1.0 / 3.0)  # on u^{n+1}, u^n, u^{n-1}, u^{n-2}


def _check_dt(dt):
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError(f"time step must be positive and finite, got {dt!r}")


def steps_for(T: float, dt_max: float) -> tuple[int, float]:
    """Smallest number of uniform steps reaching ``T`` with ``dt <= dt_max``."""
    _check_dt(dt_max)
    n = max(1, math.ceil(T / dt_max * (1.0 - 1e-12)))
    return n, T / n


# -- wave --------------------------------------------------------------------------------------


class WaveStepper:
    """Two-step Taylor scheme of order 4 or 6 for ``u_tt = Q u``.

    ``Q u = lin(u) + src`` where ``lin`` is the linear part ``-M^{-1} A`` and
    ``src`` a time-independent source ``M^{-1} F``. Higher time derivatives
    are ``d^{2m} u / dt^{2m} = lin^{m-1}(Q u)``, so

    ``u^{n+1} = 2 u^n - u^{n-1} + dt^2 Q u + dt^4/12 lin(Q u) [+ dt^6/360 lin^2(Q u)]``.
    """

    def __init__(self, order: int, dt: float, lin: Callable, src=None):
        if order not in (4, 6):
            raise ValueError(f"Taylor wave scheme has order 4 or 6, got {order!r}")
        _check_dt(dt)
        self.order = order
        self.dt = dt
        self.lin = lin
        self.src = src
        self.u = None
        self.u_prev = None

    def Q(self, u):
        q = self.lin(u)
        return q if self.src is None else q + self.src

    def _taylor_terms(self, u):
        """``[u_tt, u_tttt, (u_tttttt)]`` at the state ``u``."""
        w = [self.Q(u)]
        for _ in range(self.order // 2 - 1):
            w.append(self.lin(w[-1]))
        return w

    def start(self, u0, v0):
        """Set ``u^0 = u0`` and build ``u^{-1}`` from a Taylor expansion backwards in time.

        The expansion keeps every term through ``dt^order`` so that the
        startup error does not limit the global order.
        """
        dt = self.dt
        w = self._taylor_terms(u0)  # even derivatives of u
        vs = [v0]  # odd derivatives: v0, lin(v0), lin^2(v0)
        for _ in range(self.order // 2 - 1):
            vs.append(self.lin(vs[-1]))
        u_m = u0 - dt * v0
        for m in range(1, self.order // 2 + 1):
            u_m = u_m + dt ** (2 * m) / math.factorial(2 * m) * w[m - 1]
            if m < self.order // 2:
                u_m = u_m - dt ** (2 * m + 1) / math.factorial(2 * m + 1) * vs[m]
        self.u = np.array(u0, copy=True)
        self.u_prev = u_m
        return u_m

    def set_history(self, u_prev, u):
        self.u_prev = np.array(u_prev, copy=True)
        self.u = np.array(u, copy=True)

    def step(self):
        dt2 = self.dt * self.dt
        w = self._taylor_terms(self.u)
        incr = dt2 * w[0] + (dt2 * dt2 / 12.0) * w[1]
        if self.order == 6:
            incr = incr + (dt2 ** 3 / 360.0) * w[2]
        u_next = 2.0 * self.u - self.u_prev + incr
        self.u_prev, self.u = self.u, u_next
        return u_next


# -- BDF3 --------------------------------------------------------------------------------------


class BDF3Stepper:
    """Third-order backward differentiation for ``M u' + A(t) u = F(t)``.

    Parameters
    ----------
    dt : float
    mass : ndarray
        Diagonal mass (unconstrained nodes only).
    apply_A : callable ``(t, x) -> A(t) x``
    forcing : callable ``t -> F(t)``
        Load vector including any Dirichlet lifting correction.
    diag_A : callable ``t -> diag(A(t))``, optional
        Used for the Jacobi preconditioner.
    solver : KrylovConfig, optional
    """

    def __init__(self, dt, mass, apply_A, forcing, diag_A=None, solver: KrylovConfig | None = None):
        _check_dt(dt)
        self.dt = dt
        self.mass = np.asarray(mass)
        self.apply_A = apply_A
        self.forcing = forcing
        self.diag_A = diag_A
        self.solver = solver or KrylovConfig()
        self.t = None
        self.history = []  # [u^n, u^{n-1}, u^{n-2}]
        self.iterations = []

    def set_history(self, t_n, u_n, u_nm1, u_nm2):
        """Start from three known levels at ``t_n``, ``t_n - dt``, ``t_n - 2 dt``."""
        self.t = t_n
        self.history = [np.array(u_n, copy=True), np.array(u_nm1, copy=True),
                        np.array(u_nm2, copy=True)]

    def _solve(self, t_next, sigma, rhs, x0):
        """Solve ``sigma M x + A(t_next) x = rhs``."""
        diag = None
        if self.diag_A is not None:
            diag = sigma * self.mass + self.diag_A(t_next)
        hist = []
        x = solve(lambda v: sigma * self.mass * v + self.apply_A(t_next, v), rhs, x0=x0,
                  cfg=self.solver, diag=diag, history=hist)
        self.iterations.append(len(hist))
        return x

    def self_start(self, t0, u0, substeps: int = 8):
        """Build the two extra levels from ``u0`` alone.

        Each of the first two steps is covered by ``substeps`` BDF2 substeps;
        the first BDF2 substep is seeded by a Richardson-extrapolated pair of
        backward Euler solutions (second order).
        """
        h = self.dt / substeps
        fine = [np.array(u0, copy=True)]
        # Richardson: 2 * (two BE half steps) - (one BE step)
        one = self._solve(t0 + h, 1.0 / h, self.mass * u0 / h + self.forcing(t0 + h), u0)
        mid = self._solve(t0 + h / 2, 2.0 / h, 2.0 * self.mass * u0 / h + self.forcing(t0 + h / 2), u0)
        two = self._solve(t0 + h, 2.0 / h, 2.0 * self.mass * mid / h + self.forcing(t0 + h), mid)
        fine.append(2.0 * two - one)
        for m in range(2, 2 * substeps + 1):
            tn = t0 + m * h
            rhs = self.mass * (4.0 * fine[-1] - fine[-2]) / (2.0 * h) + self.forcing(tn)
            fine.append(self._solve(tn, 1.5 / h, rhs, fine[-1]))
        self.set_history(t0 + 2 * self.dt, fine[2 * substeps], fine[substeps], fine[0])

    def step(self):
        dt = self.dt
        t_next = self.t + dt
        u0, u1, u2 = self.history
        hist_term = (3.0 * u0 - 1.5 * u1 + (1.0 / 3.0) * u2) / dt
        rhs = self.mass * hist_term + self.forcing(t_next)
        x0 = 3.0 * u0 - 3.0 * u1 + u2  # quadratic extrapolation as the initial guess
        u_next = self._solve(t_next, BDF3_COEFFS[0] / dt, rhs, x0)
        self.history = [u_next, u0, u1]
        self.t = t_next
        return u_next


# -- AB4 ---------------------------------------------------------------------------------------


class AB4Stepper:
    """Fourth-order Adams-Bashforth for ``u' = g(t, u)``."""

    def __init__(self, dt, rhs: Callable):
        _check_dt(dt)
        self.dt = dt
        self.rhs = rhs
        self.t = None
        self.u = None
        self.g = []  # [g^n, g^{n-1}, g^{n-2}, g^{n-3}]

    def set_history(self, t_n, states):
        """Start from exact states ``[u^n, u^{n-1}, u^{n-2}, u^{n-3}]``."""
        dt = self.dt
        self.t = t_n
        self.u = np.array(states[0], copy=True)
        self.g = [self.rhs(t_n - m * dt, s) for m, s in enumerate(states)]

    def start(self, t0, u0):
        """Three classical RK4 steps, then switch to AB4."""
        dt = self.dt
        states = [np.array(u0, copy=True)]
        gs = [self.rhs(t0, states[0])]
        t = t0
        for _ in range(3):
            u = states[-1]
            k1 = gs[-1]
            k2 = self.rhs(t + dt / 2, u + (dt / 2) * k1)
            k3 = self.rhs(t + dt / 2, u + (dt / 2) * k2)
            k4 = self.rhs(t + dt, u + dt * k3)
            u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = t0 + (len(states)) * dt
            states.append(u)
            gs.append(self.rhs(t, u))
        self.t = t
        self.u = states[-1]
        self.g = gs[::-1]
        return states

    def step(self):
        dt = self.dt
        c0, c1, c2, c3 = AB4_COEFFS
        g0, g1, g2, g3 = self.g
        self.u = self.u + dt * (c0 * g0 + c1 * g1 + c2 * g2 + c3 * g3)
        self.t = self.t + dt
        self.g = [self.rhs(self.t, self.u), g0, g1, g2]
        return self.u
