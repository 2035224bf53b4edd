"""Matrix-free BiCGStab and restarted GMRES.

Inner products use a sequential Neumaier-compensated sum, so the iterates
do not depend on BLAS threading and are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit


class KrylovError(RuntimeError):
    """Raised on breakdown or when the iteration budget is exhausted."""

    def __init__(self, message, history):
        super().__init__(f"{message} (last residual {history[-1] if history else float('nan'):.3e})")
        self.history = list(history)


@dataclass(frozen=True)
class KrylovConfig:
    method: str = "bicgstab"  # or "gmres"
    rel_tol: float = 1e-12
    max_iter: int | None = None  # default 10 * n
    preconditioner: str = "diagonal"  # or "none"
    restart: int = 30

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.method not in ("bicgstab", "gmres"):
            raise ValueError(f"unknown Krylov method {self.method!r}")
        if self.preconditioner not in ("none", "diagonal"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@njit(cache=True)
def _cdot(a, b):
    s = 0.0
    c = 0.0
    for i in range(a.size):
        x = a[i] * b[i]
        t = s + x
        if abs(s) >= abs(x):
            c += (s - t) + x
        else:
            c += (x - t) + s
        s = t
    return s + c


def dot(a, b):
    """Compensated inner product, conjugating the first argument."""
    a = np.ascontiguousarray(a)
    b = np.ascontiguousarray(b)
    if np.iscomplexobj(a) or np.iscomplexobj(b):
        ar, ai = np.ascontiguousarray(a.real), np.ascontiguousarray(a.imag)
        br, bi = np.ascontiguousarray(b.real), np.ascontiguousarray(b.imag)
        re = _cdot(ar, br) + _cdot(ai, bi)
        im = _cdot(ar, bi) - _cdot(ai, br)
        return complex(re, im)
    return float(_cdot(a.astype(float, copy=False), b.astype(float, copy=False)))


def norm(a):
    return math.sqrt(max(dot(a, a).real, 0.0))


def solve(apply, rhs, x0=None, cfg: KrylovConfig | None = None, diag=None, history=None):
    """Solve ``apply(x) = rhs``.

    Parameters
    ----------
    apply : callable
        Linear operator acting on 1-D arrays.
    rhs : ndarray
        Right-hand side; real or complex.
    x0 : ndarray, optional
        Initial guess (zero by default).
    cfg : KrylovConfig, optional
    diag : ndarray, optional
        Operator diagonal, used as a Jacobi preconditioner when
        ``cfg.preconditioner == "diagonal"``.
    history : list, optional
        Receives the residual 2-norm of every iteration.

    Returns
    -------
    ndarray
        ``x`` with ``||apply(x) - rhs|| <= rel_tol * ||rhs||``.
    """
    cfg = cfg or KrylovConfig()
    rhs = np.asarray(rhs)
    dtype = np.result_type(rhs, np.float64) if x0 is None else np.result_type(rhs, x0, np.float64)
    x = np.zeros(rhs.shape, dtype=dtype) if x0 is None else np.array(x0, dtype=dtype)
    hist = [] if history is None else history
    bnorm = norm(rhs)
    if bnorm == 0.0:
        hist.append(0.0)
        return np.zeros_like(x)
    if cfg.preconditioner == "diagonal" and diag is not None:
        inv_d = 1.0 / np.asarray(diag)
        precond = lambda v: inv_d * v  # noqa: E731
    else:
        precond = lambda v: v  # noqa: E731
    max_iter = cfg.max_iter if cfg.max_iter is not None else 10 * rhs.size
    tol = cfg.rel_tol * bnorm
    if cfg.method == "bicgstab":
        return _bicgstab(apply, rhs, x, precond, tol, max_iter, hist)
    return _gmres(apply, rhs, x, precond, tol, max_iter, cfg.restart, hist)


def _bicgstab(apply, b, x, precond, tol, max_iter, hist):
    it = 0
    stalled = 0
    best = math.inf
    while True:  # restart whenever the recursive residual is not trustworthy
        r = b - apply(x)
        rnorm = norm(r)
        hist.append(rnorm)
        if rnorm <= tol:
            return x
        if not np.isfinite(rnorm):
            raise KrylovError("BiCGStab diverged", hist)
        if it >= max_iter:
            raise KrylovError(f"BiCGStab did not converge in {max_iter} iterations", hist)
        stalled = stalled + 1 if rnorm >= best else 0
        best = min(best, rnorm)
        if stalled > 5:
            raise KrylovError("BiCGStab breakdown", hist)
        r_hat = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros_like(r)
        p = np.zeros_like(r)
        while it < max_iter:
            it += 1
            rho_new = dot(r_hat, r)
            if rho_new == 0.0:
                break
            beta = (rho_new / rho) * (alpha / omega)
            p = r + beta * (p - omega * v)
            p_hat = precond(p)
            v = apply(p_hat)
            denom = dot(r_hat, v)
            if denom == 0.0:
                break
            alpha = rho_new / denom
            s = r - alpha * v
            snorm = norm(s)
            if snorm <= tol:
                x = x + alpha * p_hat
                hist.append(snorm)
                break
            s_hat = precond(s)
            t = apply(s_hat)
            tt = dot(t, t)
            if tt == 0.0:
                x = x + alpha * p_hat
                break
            omega = dot(t, s) / tt
            if omega == 0.0:
                x = x + alpha * p_hat
                break
            x = x + alpha * p_hat + omega * s_hat
            r = s - omega * t
            rho = rho_new
            rnorm = norm(r)
            hist.append(rnorm)
            if not np.isfinite(rnorm):
                raise KrylovError("BiCGStab diverged", hist)
            if rnorm <= tol:
                break


def _gmres(apply, b, x, precond, tol, max_iter, restart, hist):
    it = 0
    dtype = x.dtype
    while it < max_iter:
        r = b - apply(x)
        beta = norm(r)
        hist.append(beta)
        if beta <= tol:
            return x
        m = min(restart, max_iter - it)
        V = [r / beta]
        Z = []
        H = np.zeros((m + 1, m), dtype=dtype)
        cs = np.zeros(m, dtype=dtype)
        sn = np.zeros(m, dtype=dtype)
        g = np.zeros(m + 1, dtype=dtype)
        g[0] = beta
        j_used = 0
        for j in range(m):
            it += 1
            z = precond(V[j])
            Z.append(z)
            w = apply(z)
            for i in range(j + 1):
                H[i, j] = dot(V[i], w)
                w = w - H[i, j] * V[i]
            H[j + 1, j] = norm(w)
            for i in range(j):
                tmp = np.conj(cs[i]) * H[i, j] + np.conj(sn[i]) * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = tmp
            denom = math.hypot(abs(H[j, j]), abs(H[j + 1, j]))
            if denom == 0.0:
                raise KrylovError("GMRES breakdown", hist)
            cs[j] = H[j, j] / denom
            sn[j] = H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = np.conj(cs[j]) * g[j]
            j_used = j + 1
            res = abs(g[j + 1])
            hist.append(res)
            if res <= tol:
                break
            if j + 1 < m:
                hn = norm(w)
                if hn == 0.0:
                    break
                V.append(w / hn)
        y = np.zeros(j_used, dtype=dtype)
        for i in range(j_used - 1, -1, -1):
            y[i] = (g[i] - sum(H[i, l] * y[l] for l in range(i + 1, j_used))) / H[i, i]
        for i in range(j_used):
            x = x + y[i] * Z[i]
        if abs(g[j_used]) <= tol:
            true_r = norm(b - apply(x))
            if true_r <= tol:
                hist.append(true_r)
                return x
    raise KrylovError(f"GMRES did not converge in {max_iter} iterations", hist)
