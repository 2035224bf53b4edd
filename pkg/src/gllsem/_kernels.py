"""Element kernels for the matrix-free operator.

Per-element data is stored with the element index last, shape
``(k+1, k+1, n_elements)``, so that every inner loop runs over contiguous
memory. Fields are ``(n_nodes, n_comp)`` real arrays; a complex field is
passed as its ``(n_nodes, 2)`` float view.

Elements are processed in independent blocks (parallel), and the results
are scattered into the global vector sequentially in element order, so
the output does not depend on the number of threads.
"""

import os

import numba
from numba import njit, prange

_threads = os.environ.get("GLLSEM_NUM_THREADS")
if _threads:
    numba.set_num_threads(min(int(_threads), numba.config.NUMBA_NUM_THREADS))

BLOCK = 256


@njit(parallel=True, cache=True)
def element_apply(u, en, d, g11, g12, g22, b1, b2, c, ue, f1, f2, loc):
    """Element-local ``A_h`` contributions, written to ``loc[comp, i, j, e]``."""
    n1 = en.shape[0]
    n_el = en.shape[2]
    n_comp = u.shape[1]
    n_blk = (n_el + BLOCK - 1) // BLOCK
    for blk in prange(n_blk):
        e0 = blk * BLOCK
        e1 = min(n_el, e0 + BLOCK)
        n = e1 - e0
        for q in range(n_comp):
            for i in range(n1):
                for j in range(n1):
                    a = ue[q, i, j, e0:e1]
                    ix = en[i, j, e0:e1]
                    for e in range(n):
                        a[e] = u[ix[e], q]
            for i in range(n1):
                for j in range(n1):
                    sr = f1[q, i, j, e0:e1]
                    ss = f2[q, i, j, e0:e1]
                    sr[:] = 0.0
                    ss[:] = 0.0
                    for m in range(n1):
                        dim = d[i, m]
                        djm = d[j, m]
                        a = ue[q, m, j, e0:e1]
                        b = ue[q, i, m, e0:e1]
                        for e in range(n):
                            sr[e] += dim * a[e]
                            ss[e] += djm * b[e]
                    out = loc[q, i, j, e0:e1]
                    h11 = g11[i, j, e0:e1]
                    h12 = g12[i, j, e0:e1]
                    h22 = g22[i, j, e0:e1]
                    c1 = b1[i, j, e0:e1]
                    c2 = b2[i, j, e0:e1]
                    c0 = c[i, j, e0:e1]
                    uu = ue[q, i, j, e0:e1]
                    for e in range(n):
                        r_ = sr[e]
                        s_ = ss[e]
                        out[e] = c1[e] * r_ + c2[e] * s_ + c0[e] * uu[e]
                        sr[e] = h11[e] * r_ + h12[e] * s_
                        ss[e] = h12[e] * r_ + h22[e] * s_
            # test-function gradients: D^T along xi for f1, along eta for f2
            for i in range(n1):
                for j in range(n1):
                    out = loc[q, i, j, e0:e1]
                    for p in range(n1):
                        dpi = d[p, i]
                        dpj = d[p, j]
                        a = f1[q, p, j, e0:e1]
                        b = f2[q, i, p, e0:e1]
                        for e in range(n):
                            out[e] += dpi * a[e] + dpj * b[e]


@njit(cache=True)
def scatter_add(loc, en, out):
    """``out[node, comp] += loc[comp, i, j, e]`` in fixed element order."""
    n1 = en.shape[0]
    n_el = en.shape[2]
    n_comp = out.shape[1]
    for e in range(n_el):
        for i in range(n1):
            for j in range(n1):
                g = en[i, j, e]
                for q in range(n_comp):
                    out[g, q] += loc[q, i, j, e]
