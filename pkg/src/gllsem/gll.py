"""Gauss-Lobatto-Legendre quadrature, nodal Lagrange bases and differentiation.

Everything here lives on the reference interval [-1, 1]; the physical
mapping is the business of :mod:`gllsem.mesh`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_DEGREE = 16
_NEWTON_TOL = 1e-15
_NEWTON_MAXIT = 100


class InvalidDegreeError(ValueError):
    pass


@dataclass(frozen=True)
class QuadRule:
    """(k+1)-point Gauss-Lobatto rule on [-1, 1]."""

    k: int
    nodes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class RefElement:
    rule: QuadRule
    diff: np.ndarray  # diff[i, j] = l_j'(x_i)

    @property
    def k(self) -> int:
        return self.rule.k


def _legendre(k, x):
    """P_k(x) and P_k'(x) by the three-term recurrence (x in the open interval)."""
    p_prev = np.ones_like(x)
    p = x.copy()
    for m in range(2, k + 1):
        p_prev, p = p, ((2 * m - 1) * x * p - (m - 1) * p_prev) / m
    if k == 0:
        return p_prev, np.zeros_like(x)
    # (1 - x^2) P_k' = k (P_{k-1} - x P_k)
    dp = k * (p_prev - x * p) / (1.0 - x * x)
    return p, dp


def _legendre_value(k, x):
    p_prev = np.ones_like(x)
    if k == 0:
        return p_prev
    p = x.copy()
    for m in range(2, k + 1):
        p_prev, p = p, ((2 * m - 1) * x * p - (m - 1) * p_prev) / m
    return p


@lru_cache(maxsize=None)
def gll_rule(k: int) -> QuadRule:
    """Return the (k+1)-point Gauss-Lobatto-Legendre rule.

    Interior nodes are the roots of P_k', located by a damped Newton
    iteration started from the Chebyshev-Lobatto points.

    Parameters
    ----------
    k : int
        Polynomial degree, 1 <= k <= 16.

    Returns
    -------
    QuadRule
        Ascending nodes with nodes[0] = -1, nodes[k] = 1 and positive weights.
    """
    if int(k) != k or k < 1:
        raise InvalidDegreeError(f"GLL degree must be an integer >= 1, got {k!r}")
    if k > MAX_DEGREE:
        raise InvalidDegreeError(f"GLL degree {k} exceeds supported maximum {MAX_DEGREE}")
    k = int(k)

    x = -np.cos(np.pi * np.arange(k + 1) / k)
    x[0], x[-1] = -1.0, 1.0
    if k > 1:
        xi = x[1:-1].copy()
        for _ in range(_NEWTON_MAXIT):
            p, dp = _legendre(k, xi)
            # Legendre ODE: (1 - x^2) P'' = 2 x P' - k (k+1) P
            ddp = (2.0 * xi * dp - k * (k + 1) * p) / (1.0 - xi * xi)
            step = dp / ddp
            # damp so that no iterate leaves (-1, 1)
            trial = xi - step
            bad = np.abs(trial) >= 1.0
            while np.any(bad):
                step = np.where(bad, 0.5 * step, step)
                trial = xi - step
                bad = np.abs(trial) >= 1.0
            xi = trial
            if np.max(np.abs(step)) <= _NEWTON_TOL:
                break
        else:
            raise RuntimeError(f"GLL Newton iteration did not converge for k={k}")
        x[1:-1] = xi

    # symmetrize: mirrored roots are averaged so nodes[i] == -nodes[k-i] exactly
    x = 0.5 * (x - x[::-1])
    w = 2.0 / (k * (k + 1) * _legendre_value(k, x) ** 2)
    w = 0.5 * (w + w[::-1])

    x.setflags(write=False)
    w.setflags(write=False)
    return QuadRule(k=k, nodes=x, weights=w)


def _bary_weights(nodes):
    diffs = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diffs, 1.0)
    return 1.0 / np.prod(diffs, axis=1)


def diff_matrix(rule: QuadRule) -> RefElement:
    """Nodal differentiation matrix in barycentric form.

    Diagonal entries are the negative off-diagonal row sums, so every row
    sums to exactly zero.
    """
    x = rule.nodes
    lam = _bary_weights(x)
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    d = (lam[None, :] / lam[:, None]) / dx
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    d.setflags(write=False)
    return RefElement(rule=rule, diff=d)


@lru_cache(maxsize=None)
def ref_element(k: int) -> RefElement:
    return diff_matrix(gll_rule(k))


def lagrange_matrix(rule: QuadRule, x) -> np.ndarray:
    """Values of the k+1 Lagrange cardinals at the points ``x``.

    Returns an array of shape (len(x), k+1); rows at nodes are unit vectors.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    nodes = rule.nodes
    lam = _bary_weights(nodes)
    diff = x[:, None] - nodes[None, :]
    exact = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = lam[None, :] / diff
        out = terms / terms.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    out[hit] = exact[hit].astype(float)
    return out


def interpolate_1d(rule: QuadRule, nodal_values, x):
    """Evaluate the degree-k interpolant of ``nodal_values`` at ``x``.

    Uses the second (true) barycentric formula, which returns the nodal
    value exactly when ``x`` coincides with a node.
    """
    vals = np.asarray(nodal_values)
    scalar = np.ndim(x) == 0
    if np.any(np.abs(np.asarray(x)) > 1.0):
        raise ValueError("interpolation point outside [-1, 1]")
    out = lagrange_matrix(rule, x) @ vals
    return out[0] if scalar else out
