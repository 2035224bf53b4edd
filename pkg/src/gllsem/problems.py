"""Benchmark problems with closed-form exact solutions.

Every exact solution here is separable, ``u(x, y, t) = S(x, y) tau(t)``,
and every forcing is a short sum of separable terms. Runs exploit this by
interpolating the spatial parts once per mesh.

The three equations are written as

* wave:        ``u_tt + L u = f``
* parabolic:   ``u_t + L u = f``
* Schrodinger: ``i u_t - L u = f``

with ``L u = -div(a grad u) + b . grad u + c u``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .operator import CoefficientSet

log = logging.getLogger(__name__)

PDES = ("wave", "parabolic", "schrodinger")

DIRICHLET_RADII = (7.58834243450380438, 14.37253667161758967)
NEUMANN_RADII = (5.31755312608399, 9.28239628524161)
BESSEL_MAX_X = 30.0


class ProblemConsistencyError(RuntimeError):
    """The exact solution does not satisfy its own PDE."""


# -- Bessel functions --------------------------------------------------------------------------
#
# The ascending series cancels heavily for x beyond a few units (terms reach
# ~1e10 at x = 30 while J_n stays below 1), so terms and sums are carried in
# double-double arithmetic built from error-free transformations.

_SPLIT = 134217729.0  # 2**27 + 1


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _two_prod(a, b):
    p = a * b
    ah = _SPLIT * a
    ah = ah - (ah - a)
    al = a - ah
    bh = _SPLIT * b
    bh = bh - (bh - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _dd_add(ah, al, bh, bl):
    s, e = _two_sum(ah, bh)
    e = e + al + bl
    return _two_sum(s, e)


def _dd_mul(ah, al, bh, bl):
    p, e = _two_prod(ah, bh)
    e = e + ah * bl + al * bh
    return _two_sum(p, e)


def _dd_div_scalar(ah, al, d):
    q = ah / d
    p, e = _two_prod(q, d)
    r = ((ah - p) - e + al) / d
    return _two_sum(q, r)


def bessel_j(n: int, x):
    """Bessel function of the first kind ``J_n(x)`` for ``0 <= x <= 30``.

    Sums the ascending series in double-double precision, stopping once
    every term is below ``1e-18`` of its partial sum; the result is accurate
    to about 1e-15 absolute on the whole range.
    """
    if int(n) != n or n < 0:
        raise ValueError(f"order must be a non-negative integer, got {n!r}")
    n = int(n)
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > BESSEL_MAX_X):
        raise ValueError(f"bessel_j is validated on [0, {BESSEL_MAX_X}] only")
    xs = np.atleast_1d(arr).ravel()
    half = 0.5 * xs  # exact
    q_hi, q_lo = _two_prod(half, half)
    q_hi, q_lo = -q_hi, -q_lo

    # leading term (x/2)^n / n!
    t_hi = np.ones_like(xs)
    t_lo = np.zeros_like(xs)
    for m in range(1, n + 1):
        t_hi, t_lo = _dd_mul(t_hi, t_lo, half, np.zeros_like(xs))
        t_hi, t_lo = _dd_div_scalar(t_hi, t_lo, float(m))
    s_hi, s_lo = t_hi.copy(), t_lo.copy()
    for m in range(1, 400):
        t_hi, t_lo = _dd_mul(t_hi, t_lo, q_hi, q_lo)
        t_hi, t_lo = _dd_div_scalar(t_hi, t_lo, float(m * (n + m)))
        s_hi, s_lo = _dd_add(s_hi, s_lo, t_hi, t_lo)
        if np.all(np.abs(t_hi) <= 1e-18 * np.abs(s_hi)):
            break
    else:  # pragma: no cover - cannot happen on the validated range
        raise RuntimeError("Bessel series did not terminate")
    out = s_hi + s_lo
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def bessel_j_prime(n: int, x):
    """``J_n'(x)`` from ``(J_{n-1} - J_{n+1}) / 2`` (``-J_1`` for ``n = 0``)."""
    if n == 0:
        return -bessel_j(1, x)
    return 0.5 * (bessel_j(n - 1, x) - bessel_j(n + 1, x))


# -- problem description ---------------------------------------------------------------------


@dataclass(frozen=True)
class TimeFactor:
    """``tau(t)`` with its first two derivatives."""

    f: Callable
    d1: Callable
    d2: Callable


@dataclass(frozen=True)
class Problem:
    """A benchmark: PDE, coefficients, exact solution and forcing.

    ``space`` and ``time`` give the exact solution ``space(x, y) * time.f(t)``.
    ``forcing`` is a list of ``(space_fn, time_fn)`` pairs summed to ``f``.
    ``dirichlet_data`` is ``"exact"`` when the boundary data is the trace of
    the exact solution and ``"zero"`` for homogeneous data.
    """

    name: str
    pde: str
    coeffs: CoefficientSet
    bc: str
    space: Callable
    time: TimeFactor
    T: float
    default_family: str
    domain: tuple | None = None
    radii: tuple | None = None
    forcing: tuple = ()
    dirichlet_data: str = "zero"
    initial: str = "interpolant"
    fd_step: float = 2e-3
    notes: dict = field(default_factory=dict)

    def exact(self, x, y, t):
        return self.space(x, y) * self.time.f(t)

    def exact_t(self, x, y, t):
        return self.space(x, y) * self.time.d1(t)

    def f(self, x, y, t):
        out = np.zeros(np.broadcast(x, y).shape, dtype=self.dtype)
        for s, tau in self.forcing:
            out = out + s(x, y) * tau(t)
        return out

    @property
    def dtype(self):
        return np.complex128 if self.pde == "schrodinger" else np.float64

    def time_term(self, x, y, t):
        """``u_tt``, ``u_t`` or ``i u_t`` depending on the PDE."""
        s = self.space(x, y)
        if self.pde == "wave":
            return s * self.time.d2(t)
        if self.pde == "parabolic":
            return s * self.time.d1(t)
        return 1j * s * self.time.d1(t)

    @property
    def operator_sign(self) -> float:
        return -1.0 if self.pde == "schrodinger" else 1.0

    def Lu(self, x, y, t):
        """``L u`` recovered from the PDE: ``(f - time_term) / sign``."""
        return (self.f(x, y, t) - self.time_term(x, y, t)) / self.operator_sign

    def boundary_data(self):
        """Callable ``g(x, y, t)`` for Dirichlet nodes, or ``None`` for zero data."""
        if self.bc != "dirichlet" or self.dirichlet_data == "zero":
            return None
        return self.exact

    def sample_points(self, n=64, seed=1234):
        """Deterministic space-time sample points inside the domain."""
        rng = np.random.default_rng(seed)
        t = rng.uniform(0.0, self.T, n)
        if self.radii is not None:
            r = rng.uniform(self.radii[0], self.radii[1], n)
            th = rng.uniform(0.0, 0.5 * np.pi, n)
            return r * np.cos(th), r * np.sin(th), t
        x0, x1, y0, y1 = self.domain
        return rng.uniform(x0, x1, n), rng.uniform(y0, y1, n), t

    def residual(self, x, y, t, step=None):
        """PDE residual of the exact solution, derivatives by finite differences."""
        return fd_residual(self, x, y, t, step or self.fd_step) - self.f(x, y, t)

    def check(self, n=64, tol=1e-8):
        """Verify the exact solution against the PDE at ``n`` sample points.

        The tolerance is relative to the size of the individual terms.
        """
        x, y, t = self.sample_points(n)
        res = np.abs(self.residual(x, y, t))
        scale = 1.0 + np.abs(self.f(x, y, t)) + np.abs(self.time_term(x, y, t))
        worst = float(np.max(res / scale))
        if worst > tol:
            raise ProblemConsistencyError(
                f"{self.name}: exact solution violates the PDE (relative residual {worst:.3e})")
        return worst


def _richardson(g, h):
    """Fourth-order central difference of ``g`` at 0."""
    d1 = (g(h) - g(-h)) / (2 * h)
    d2 = (g(2 * h) - g(-2 * h)) / (4 * h)
    return (4 * d1 - d2) / 3


def fd_residual(p: Problem, x, y, t, step=2e-3):
    """``time_term + sign * L u`` with every derivative taken numerically."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    t = np.asarray(t, float)
    u = lambda xx, yy, tt: p.exact(xx, yy, tt)  # noqa: E731
    ts = 1e-3
    if p.pde == "wave":
        ut = (-u(x, y, t + 2 * ts) + 16 * u(x, y, t + ts) - 30 * u(x, y, t)
              + 16 * u(x, y, t - ts) - u(x, y, t - 2 * ts)) / (12 * ts * ts)
    else:
        ut = _richardson(lambda d: u(x, y, t + d), ts)
        if p.pde == "schrodinger":
            ut = 1j * ut

    def grad(xx, yy):
        return (_richardson(lambda d: u(xx + d, yy, t), step),
                _richardson(lambda d: u(xx, yy + d, t), step))

    def flux(xx, yy):
        a11, a12, a22 = p.coeffs.eval_a(xx, yy, t)
        gx, gy = grad(xx, yy)
        return a11 * gx + a12 * gy, a12 * gx + a22 * gy

    div = (_richardson(lambda d: flux(x + d, y)[0], step)
           + _richardson(lambda d: flux(x, y + d)[1], step))
    lu = -div
    b = p.coeffs.eval_b(x, y, t)
    if b is not None:
        gx, gy = grad(x, y)
        lu = lu + b[0] * gx + b[1] * gy
    c = p.coeffs.eval_c(x, y, t)
    if c is not None:
        lu = lu + c * u(x, y, t)
    return ut + p.operator_sign * lu


# -- the benchmark suite -------------------------------------------------------------------------

_ROOT2 = math.sqrt(2.0)
_COS_ROOT2 = TimeFactor(lambda t: np.cos(_ROOT2 * t),
                        lambda t: -_ROOT2 * np.sin(_ROOT2 * t),
                        lambda t: -2.0 * np.cos(_ROOT2 * t))
_COS = TimeFactor(np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t))


def square_mode(bc: str = "dirichlet") -> Problem:
    """Standing mode on ``[-pi, pi]^2`` for ``u_tt = Delta u``."""
    if bc == "dirichlet":
        space = lambda x, y: np.sin(x) * np.sin(y)  # noqa: E731
    elif bc == "neumann":
        space = lambda x, y: np.cos(x) * np.cos(y)  # noqa: E731
    else:
        raise ValueError(f"unknown boundary condition {bc!r}")
    p = Problem(name=f"square-{bc}", pde="wave", coeffs=CoefficientSet(), bc=bc,
                space=space, time=_COS_ROOT2, T=5.0, default_family="cartesian",
                domain=(-np.pi, np.pi, -np.pi, np.pi))
    p.check()
    return p


def _check_radii(bc, radii, tol):
    if bc == "dirichlet":
        vals = [bessel_j(4, r) for r in radii]
        what = "J_4"
    else:
        vals = [bessel_j_prime(4, r) for r in radii]
        what = "J_4'"
    if max(abs(v) for v in vals) > tol:
        raise ProblemConsistencyError(f"annulus radii {radii} are not zeros of {what}: {vals}")


def annulus_mode(bc: str = "dirichlet") -> Problem:
    """``J_4(r) sin(4 theta) cos t`` (Dirichlet) or ``J_4(r) cos(4 theta) cos t`` (Neumann)
    on the first-quadrant annulus whose radii are zeros of ``J_4`` or ``J_4'``."""
    if bc == "dirichlet":
        radii, trig, tol = DIRICHLET_RADII, np.sin, 1e-11
    elif bc == "neumann":
        radii, trig, tol = NEUMANN_RADII, np.cos, 1e-9
    else:
        raise ValueError(f"unknown boundary condition {bc!r}")
    _check_radii(bc, radii, tol)

    def space(x, y):
        r = np.hypot(x, y)
        return bessel_j(4, r) * trig(4.0 * np.arctan2(y, x))

    p = Problem(name=f"annulus-{bc}", pde="wave", coeffs=CoefficientSet(), bc=bc,
                space=space, time=_COS, T=1.0, default_family="annulus:curvilinear",
                radii=radii)
    p.check()
    return p


# parabolic problem: every coefficient carries the factor s(t) = 3/4 + sin(t)/4

def _s(t):
    return 0.75 + 0.25 * np.sin(t)


def _ds(t):
    return 0.25 * np.cos(t)


def _par_a(x, y):
    a11 = 1.0 + y + y * y + x * np.cos(y)
    a12 = (1.0 + 0.5 * (np.sin(np.pi * x) + x ** 3) * (np.sin(np.pi * y) + y ** 3)
           + np.cos(x ** 4 + y ** 3))
    a22 = 1.0 + x * x
    return a11, a12, a22


def _par_div_a(x, y):
    """``(d_x a11 + d_y a12, d_x a12 + d_y a22)``."""
    p = np.sin(np.pi * x) + x ** 3
    q = np.sin(np.pi * y) + y ** 3
    dp = np.pi * np.cos(np.pi * x) + 3 * x * x
    dq = np.pi * np.cos(np.pi * y) + 3 * y * y
    sn = np.sin(x ** 4 + y ** 3)
    da12_dx = 0.5 * dp * q - 4 * x ** 3 * sn
    da12_dy = 0.5 * p * dq - 3 * y * y * sn
    return np.cos(y) + da12_dy, da12_dx


def _par_b(x, y):
    return 0.2 + x, 0.2 - y


def _par_c(x, y):
    return 10.0 + x ** 4 * y ** 3


def _par_phi(x, y):
    return -np.sin(y) * np.cos(y) * np.sin(x) ** 2


def _par_L_phi(x, y):
    """``L phi`` for the time-free coefficients."""
    s2x, c2x = np.sin(2 * x), np.cos(2 * x)
    s2y, c2y = np.sin(2 * y), np.cos(2 * y)
    sx2 = np.sin(x) ** 2
    px = -0.5 * s2y * s2x
    py = -c2y * sx2
    pxx = -s2y * c2x
    pyy = 2.0 * s2y * sx2
    pxy = -c2y * s2x
    a11, a12, a22 = _par_a(x, y)
    d1, d2 = _par_div_a(x, y)
    b1, b2 = _par_b(x, y)
    return (-(a11 * pxx + 2 * a12 * pxy + a22 * pyy) - (d1 * px + d2 * py)
            + b1 * px + b2 * py + _par_c(x, y) * _par_phi(x, y))


def parabolic_manufactured() -> Problem:
    """Variable-coefficient parabolic problem on ``(0, pi)^2``.

    ``u = s(t) phi(x, y)`` with ``s = 3/4 + sin(t)/4`` and every coefficient
    proportional to ``s``, so ``f = s' phi + s^2 L_0 phi``.
    """
    coeffs = CoefficientSet(
        a=lambda x, y, t: tuple(_s(t) * v for v in _par_a(x, y)),
        b=lambda x, y, t: tuple(_s(t) * v for v in _par_b(x, y)),
        c=lambda x, y, t: _s(t) * _par_c(x, y),
        a_is_diagonal=False, time_dependent=True)
    p = Problem(name="parabolic-table1", pde="parabolic", coeffs=coeffs, bc="dirichlet",
                space=_par_phi, time=TimeFactor(_s, _ds, lambda t: -0.25 * np.sin(t)),
                T=0.1, default_family="cartesian", domain=(0.0, np.pi, 0.0, np.pi),
                forcing=((_par_phi, _ds), (_par_L_phi, lambda t: _s(t) ** 2)),
                fd_step=2.5e-4)  # cos(x^4 + y^3) oscillates quickly near x = pi
    p.check(tol=1e-7)
    return p


def parabolic_b_max(p: Problem, t=0.0, samples=401):
    """``max |b_i(x, y, t)|`` over the domain, by dense sampling."""
    x0, x1, y0, y1 = p.domain
    xs = np.linspace(x0, x1, samples)
    x, y = np.meshgrid(xs, np.linspace(y0, y1, samples))
    b = p.coeffs.eval_b(x, y, t)
    return float(max(np.abs(b[0]).max(), np.abs(b[1]).max()))


def parabolic_f_max(p: Problem, t=0.0, samples=401):
    """``max |f(x, y, t)|`` over the domain, by dense sampling."""
    x0, x1, y0, y1 = p.domain
    x, y = np.meshgrid(np.linspace(x0, x1, samples), np.linspace(y0, y1, samples))
    return float(np.abs(p.f(x, y, t)).max())


def schrodinger_harmonic(kinetic: float = 1.0) -> Problem:
    """Gaussian ``exp(-it) exp(-(x^2 + y^2)/2)`` in the potential ``(x^2 + y^2)/2`` on ``(0, 2)^2``.

    The PDE is ``i u_t + kinetic * Delta u - V u = f``. With ``kinetic = 1``
    the Gaussian is not an exact solution of the unforced equation, so the
    constructor measures the residual and, when it is nonzero, uses it as
    a manufactured forcing; with ``kinetic = 1/2`` no forcing is needed.
    """
    def space(x, y):
        return np.exp(-0.5 * (x * x + y * y)).astype(complex)

    def potential(x, y, t):
        return 0.5 * (x * x + y * y)

    tau = TimeFactor(lambda t: np.exp(-1j * t), lambda t: -1j * np.exp(-1j * t),
                     lambda t: -np.exp(-1j * t))
    coeffs = CoefficientSet(a=None if kinetic == 1.0 else (lambda x, y, t: (kinetic, 0.0, kinetic)),
                            c=potential)

    def residual_space(x, y):
        # i tau' = tau and Delta S = (r^2 - 2) S
        r2 = x * x + y * y
        return space(x, y) * (1.0 + kinetic * (r2 - 2.0) - 0.5 * r2)

    base = dict(name="schrodinger-table2", pde="schrodinger", coeffs=coeffs, bc="dirichlet",
                space=space, time=tau, T=0.5, default_family="cartesian",
                domain=(0.0, 2.0, 0.0, 2.0), dirichlet_data="exact")
    unforced = Problem(**base, notes={"kinetic": kinetic})
    x, y, t = unforced.sample_points()
    worst = float(np.max(np.abs(unforced.residual(x, y, t))))
    if worst <= 1e-8:
        unforced.check()
        return unforced
    log.warning("Gaussian does not solve the unforced equation (residual %.3e); "
                "using the manufactured forcing (r^2/2 - 1) u", worst)
    p = Problem(**base, forcing=((residual_space, tau.f),),
                notes={"kinetic": kinetic, "manufactured_forcing": True,
                       "unforced_residual": worst})
    p.check()
    return p


REGISTRY = {
    "square-dirichlet": lambda: square_mode("dirichlet"),
    "square-neumann": lambda: square_mode("neumann"),
    "annulus-dirichlet": lambda: annulus_mode("dirichlet"),
    "annulus-neumann": lambda: annulus_mode("neumann"),
    "parabolic-table1": parabolic_manufactured,
    "schrodinger-table2": schrodinger_harmonic,
}


def get_problem(name: str, **kwargs) -> Problem:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; expected one of {sorted(REGISTRY)}") from None
    if name == "schrodinger-table2" and kwargs:
        return schrodinger_harmonic(**kwargs)
    return factory()
