"""Matrix-free spectral element operator.

All integrals (mass, stiffness, convection, reaction, forcing) use the
same (k+1) x (k+1) Gauss-Lobatto rule whose nodes are the degrees of
freedom, so the mass matrix is diagonal.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .gll import ref_element
from .krylov import KrylovConfig, solve
from .mesh import Mesh, metric_terms

BCS = ("dirichlet", "neumann")


class CoefficientWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CoefficientSet:
    """Coefficients of ``Lu = -div(a grad u) + b . grad u + c u``.

    Each callable takes ``(x, y, t)`` arrays. ``a`` returns
    ``(a11, a12, a22)``, ``b`` returns ``(b1, b2)``, ``c`` returns an array.
    ``None`` means identity for ``a`` and zero for ``b`` and ``c``.
    """

    a: Callable | None = None
    b: Callable | None = None
    c: Callable | None = None
    a_is_diagonal: bool = True
    time_dependent: bool = False

    def eval_a(self, x, y, t):
        if self.a is None:
            one = np.ones_like(x)
            return one, np.zeros_like(x), one
        a11, a12, a22 = self.a(x, y, t)
        return tuple(np.broadcast_to(v, x.shape).astype(float) for v in (a11, a12, a22))

    def eval_b(self, x, y, t):
        if self.b is None:
            return None
        return tuple(np.broadcast_to(v, x.shape).astype(float) for v in self.b(x, y, t))

    def eval_c(self, x, y, t):
        if self.c is None:
            return None
        return np.broadcast_to(self.c(x, y, t), x.shape).astype(float)


def check_coefficients(coeffs: CoefficientSet, x, y, t=0.0):
    """Warn when ``a`` is not SPD or ``4 lambda_min(a) c > |b|^2`` fails."""
    a11, a12, a22 = coeffs.eval_a(x, y, t)
    mean = 0.5 * (a11 + a22)
    lam = mean - np.sqrt((0.5 * (a11 - a22)) ** 2 + a12 ** 2)
    ok = True
    if np.any(lam <= 0):
        warnings.warn(
            f"diffusion tensor is not positive definite at {np.count_nonzero(lam <= 0)} of "
            f"{lam.size} quadrature points (min eigenvalue {lam.min():.3e})",
            CoefficientWarning, stacklevel=3)
        ok = False
    b = coeffs.eval_b(x, y, t)
    if b is not None:
        c = coeffs.eval_c(x, y, t)
        c = np.zeros_like(x) if c is None else c
        if np.any(4 * lam * c <= b[0] ** 2 + b[1] ** 2):
            warnings.warn("discrete coercivity condition 4 lambda_a c > |b|^2 is violated",
                          CoefficientWarning, stacklevel=3)
            ok = False
    return ok


class DiscreteOperator:
    """``A_h`` and the diagonal GLL mass on a mesh.

    Parameters
    ----------
    mesh : Mesh
    coeffs : CoefficientSet, optional
        Defaults to the Laplacian (``a = I``).
    bc : {"dirichlet", "neumann"}
        Dirichlet nodes are eliminated from the solve space; Neumann is the
        natural (homogeneous flux) condition.
    """

    def __init__(self, mesh: Mesh, coeffs: CoefficientSet | None = None, bc: str = "dirichlet"):
        if bc not in BCS:
            raise ValueError(f"unknown boundary condition {bc!r}")
        self.mesh = mesh
        self.coeffs = coeffs or CoefficientSet()
        self.bc = bc
        self.ref = ref_element(mesh.k)
        geom = mesh.geom
        self.metric = metric_terms(geom, self.ref)
        self.qx = np.ascontiguousarray(geom[..., 0])
        self.qy = np.ascontiguousarray(geom[..., 1])

        self._en = np.ascontiguousarray(mesh.elem_nodes.transpose(1, 2, 0))
        self.mass = self._scatter(self.metric.wdet)
        self.mass.setflags(write=False)

        if bc == "dirichlet":
            self.constrained = mesh.boundary != 0
        else:
            self.constrained = np.zeros(mesh.n_nodes, dtype=bool)
        self.free = np.flatnonzero(~self.constrained)
        self.fixed = np.flatnonzero(self.constrained)

        check_coefficients(self.coeffs, self.qx, self.qy, 0.0)
        self._cache_t = None
        self._cache = None
        d = self.ref.diff
        self._d = np.ascontiguousarray(d)
        self._work = {}

    # -- coefficients in the reference frame -------------------------------------------------

    def reference_coefficients(self, t=0.0):
        """``(g11, g12, g22, b1, b2, c)`` at the quadrature points, weights included."""
        key = float(t) if self.coeffs.time_dependent else None
        if self._cache is not None and self._cache_t == key:
            return self._cache
        x, y = self.qx, self.qy
        md = self.metric
        inv = md.inv  # inv[..., r, c] = d(ref_r)/d(phys_c)
        a11, a12, a22 = self.coeffs.eval_a(x, y, t)
        # G = wdet * Jinv a Jinv^T
        t0 = inv[..., 0, 0] * a11 + inv[..., 0, 1] * a12
        t1 = inv[..., 0, 0] * a12 + inv[..., 0, 1] * a22
        s0 = inv[..., 1, 0] * a11 + inv[..., 1, 1] * a12
        s1 = inv[..., 1, 0] * a12 + inv[..., 1, 1] * a22
        g11 = md.wdet * (t0 * inv[..., 0, 0] + t1 * inv[..., 0, 1])
        g12 = md.wdet * (t0 * inv[..., 1, 0] + t1 * inv[..., 1, 1])
        g22 = md.wdet * (s0 * inv[..., 1, 0] + s1 * inv[..., 1, 1])
        zero = np.zeros_like(x)
        b = self.coeffs.eval_b(x, y, t)
        if b is None:
            b1 = b2 = zero
        else:
            b1 = md.wdet * (inv[..., 0, 0] * b[0] + inv[..., 0, 1] * b[1])
            b2 = md.wdet * (inv[..., 1, 0] * b[0] + inv[..., 1, 1] * b[1])
        c = self.coeffs.eval_c(x, y, t)
        c = zero if c is None else md.wdet * c
        arrays = (g11, g12, g22, b1, b2, c)
        self._cache_t, self._cache = key, arrays
        self._cache_soa = tuple(np.ascontiguousarray(v.transpose(1, 2, 0)) for v in arrays)
        return arrays

    # -- operator applications ---------------------------------------------------------------

    def mass_diagonal(self) -> np.ndarray:
        return self.mass

    def _scatter(self, loc):
        """Assemble per-element values of shape (n_el, k+1, k+1) into a nodal vector."""
        out = np.zeros((self.mesh.n_nodes, 1))
        _kernels.scatter_add(np.ascontiguousarray(loc.transpose(1, 2, 0))[None], self._en, out)
        return out[:, 0]

    def _buffers(self, n_comp):
        buf = self._work.get(n_comp)
        if buf is None:
            shape = (n_comp,) + self._en.shape
            buf = tuple(np.empty(shape) for _ in range(4))
            self._work[n_comp] = buf
        return buf

    def apply_full(self, t, u) -> np.ndarray:
        """``A_h(u, phi_n)`` for every global basis function, no constraints."""
        u = np.asarray(u)
        if u.dtype not in (np.float64, np.complex128):
            u = u.astype(np.result_type(u, np.float64))
        u = np.ascontiguousarray(u)
        # complex fields go through the kernel as (n, 2) real pairs
        comps = u.view(np.float64).reshape(u.size, -1)
        self.reference_coefficients(t)
        ue, f1, f2, loc = self._buffers(comps.shape[1])
        _kernels.element_apply(comps, self._en, self._d, *self._cache_soa, ue, f1, f2, loc)
        out = np.zeros_like(comps)
        _kernels.scatter_add(loc, self._en, out)
        return out.view(u.dtype).reshape(u.shape)

    def apply_stiffness(self, t, u) -> np.ndarray:
        """``A_h(u, phi_n)``; rows of Dirichlet nodes are returned as zero."""
        r = self.apply_full(t, u)
        r[self.fixed] = 0.0
        return r

    def prolong(self, x_free, dtype=None):
        u = np.zeros(self.mesh.n_nodes, dtype=dtype or np.asarray(x_free).dtype)
        u[self.free] = x_free
        return u

    def apply_free(self, t, x_free) -> np.ndarray:
        """Restriction of ``A_h`` to the unconstrained nodes."""
        return self.apply_full(t, self.prolong(x_free))[self.free]

    def stiffness_diagonal(self, t=0.0) -> np.ndarray:
        """Diagonal of the assembled ``A_h`` (all nodes)."""
        g11, g12, g22, b1, b2, c = self.reference_coefficients(t)
        d = self.ref.diff
        d2 = d ** 2
        dd = np.diag(d)
        loc = (np.einsum("pi,epj->eij", d2, g11) + np.einsum("qj,eiq->eij", d2, g22)
               + 2.0 * g12 * dd[:, None] * dd[None, :]
               + b1 * dd[:, None] + b2 * dd[None, :] + c)
        return self._scatter(loc)

    def forcing(self, f, t) -> np.ndarray:
        """Load vector ``<f, phi_n>_h`` (full length)."""
        return self.mass * f(self.mesh.x, self.mesh.y, t)

    def interpolate(self, fn, t=None) -> np.ndarray:
        """Nodal interpolant of ``fn(x, y[, t])``."""
        x, y = self.mesh.x, self.mesh.y
        return fn(x, y) if t is None else fn(x, y, t)

    # -- Dirichlet data ------------------------------------------------------------------------

    def lift_dirichlet(self, g, t):
        """Boundary lifting ``g_I`` and the load correction ``-A_h(g_I, .)``.

        ``g_I`` carries ``g(x, y, t)`` on Dirichlet nodes and zero inside;
        the correction is restricted to unconstrained rows (others zero).
        """
        x, y = self.mesh.x, self.mesh.y
        vals = np.asarray(g(x[self.fixed], y[self.fixed], t))
        g_i = np.zeros(self.mesh.n_nodes, dtype=np.result_type(vals, np.float64))
        g_i[self.fixed] = vals
        corr = -self.apply_stiffness(t, g_i)
        return g_i, corr

    def elliptic_projection(self, Lu, t=0.0, g=None, solver: KrylovConfig | None = None):
        """Discrete elliptic projection ``R_h u``.

        Solves ``A_h(R u, v) = <Lu, v>_h - A_h(g_I, v)`` over the
        unconstrained nodes and returns ``R u + g_I``. ``Lu`` samples the
        continuous operator applied to the exact ``u``.
        """
        rhs = self.mass * Lu(self.mesh.x, self.mesh.y, t)
        if g is not None and self.bc == "dirichlet":
            g_i, corr = self.lift_dirichlet(g, t)
        else:
            g_i = np.zeros(self.mesh.n_nodes, dtype=rhs.dtype)
            corr = 0.0
        rhs = (rhs + corr)[self.free]
        diag = self.stiffness_diagonal(t)[self.free]
        x = solve(lambda v: self.apply_free(t, v), rhs, cfg=solver, diag=diag)
        u = self.prolong(x, dtype=np.result_type(x, g_i))
        return u + g_i

    # -- test oracle -------------------------------------------------------------------------

    def assemble(self, t=0.0) -> np.ndarray:
        """Dense ``A_h`` by probing columns; only for tiny meshes."""
        n = self.mesh.n_nodes
        if n > 4000:
            raise ValueError("dense assembly is a test oracle for tiny meshes")
        mat = np.empty((n, n))
        e = np.zeros(n)
        for j in range(n):
            e[j] = 1.0
            mat[:, j] = self.apply_full(t, e)
            e[j] = 0.0
        return mat
