"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line; the lines are
repeated in the terminal summary. Run this file directly to get the lines
without pytest.
"""

import glob
import logging
import math
import os
import subprocess
import sys
import time
import warnings
from functools import lru_cache

import numpy as np
import pytest

from gllsem.analysis import discrete_l2
from gllsem.gll import gll_rule
from gllsem.krylov import KrylovConfig
from gllsem.mesh import build_cartesian
from gllsem.operator import CoefficientSet, DiscreteOperator
from gllsem.problems import DIRICHLET_RADII, bessel_j, get_problem
from gllsem.runner import RunConfig, RunError, build_level, resolve, run, run_wave
from gllsem.timeint import AB4Stepper, BDF3Stepper, steps_for

RESULTS = {}

TABLE1 = {2: (2.91e-6, 3.96), 3: (2.38e-8, 4.97), 4: (2.00e-10, 5.98)}
TABLE2 = {2: (2.53e-7, 4.02), 3: (1.05e-9, 4.94), 4: (5.30e-12, 6.22)}
ORDER_TOL = 0.35


def report(num, ok, detail):
    line = f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[num] = line
    print(line, file=sys.__stdout__, flush=True)
    return ok


def quiet_run(cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return run(cfg)


# -- 1 ---------------------------------------------------------------------------------------


def criterion_1():
    gll_rule.cache_clear()
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(2, 9):
        rule = gll_rule(k)
        worst = max(worst, abs(rule.weights.sum() - 2.0))
        for d in range(2 * k):
            exact = 0.0 if d % 2 else 2.0 / (d + 1)
            worst = max(worst, abs(float(np.dot(rule.weights, rule.nodes ** d)) - exact))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 1.0
    return ok, f"GLL exactness k=2..8: max error {worst:.1e}, {elapsed * 1e3:.1f} ms"


# -- 2 ---------------------------------------------------------------------------------------


def criterion_2():
    n = 8
    length = 2.0
    mesh = build_cartesian((0.0, length, 0.0, 1.0), (n, 1), 2)
    op = DiscreteOperator(mesh, bc="neumann")
    h = length / (2 * n)
    g = np.random.default_rng(11).normal(size=2 * n + 1)
    idx = np.round(mesh.x / h).astype(int)
    lap = -op.apply_full(0.0, g[idx]) / op.mass
    worst = 0.0
    for node in range(mesh.n_nodes):
        i = idx[node]
        if i % 2 == 1:
            ref = (g[i - 1] - 2 * g[i] + g[i + 1]) / h ** 2
        elif 2 <= i <= 2 * n - 2:
            ref = (-g[i - 2] + 8 * g[i - 1] - 14 * g[i] + 8 * g[i + 1] - g[i + 2]) / (4 * h ** 2)
        else:
            continue
        worst = max(worst, abs(lap[node] - ref) / max(abs(ref), 1.0 / h ** 2))
    return worst <= 1e-12, f"1-D Q2 stencils (1,-2,1)/h^2 and (-1,8,-14,8,-1)/4h^2: rel. error {worst:.1e}"


# -- 3 to 8: wave studies --------------------------------------------------------------------

WAVE_LEVELS = (4, 8, 16, 32)


@lru_cache(maxsize=None)
def wave_study(problem, family, k, levels=WAVE_LEVELS):
    t0 = time.perf_counter()
    rep = quiet_run(RunConfig(problem=problem, k=k, family=family, levels=levels))
    return rep.rates_l2[-1], time.perf_counter() - t0


def _band_check(cases):
    ok = True
    parts = []
    for problem, family, k, lo, hi, levels in cases:
        rate, _ = wave_study(problem, family, k, levels)
        good = lo <= rate <= hi
        ok &= good
        tag = family.split(":")[-1]
        hi_s = "inf" if math.isinf(hi) else f"{hi:.1f}"
        parts.append(f"{problem.split('-')[1][:3]}/{tag}/k={k}: {rate:.2f} in [{lo:.1f},{hi_s}]"
                     + ("" if good else " <-- off"))
    return ok, "; ".join(parts)


def criterion_3():
    cases = [("square-dirichlet", "cartesian", 2, 3.7, math.inf, (4, 8, 16, 32, 64)),
             ("square-dirichlet", "cartesian", 4, 5.7, math.inf, WAVE_LEVELS)]
    ok, text = _band_check(cases)
    total = sum(wave_study(p, f, k, lv)[1] for p, f, k, *_, lv in cases)
    ok &= total < 600
    return ok, f"{text}; {total:.0f} s"


def criterion_4():
    return _band_check([(p, "random", k, k + 0.6, k + 1.4, WAVE_LEVELS)
                        for p in ("square-dirichlet", "square-neumann") for k in (2, 4)])


def criterion_5():
    return _band_check([("square-dirichlet", "smooth", k, k + 1.7, math.inf, WAVE_LEVELS)
                        for k in (2, 4)])


def criterion_6():
    return _band_check([("square-neumann", "smooth", k, k + 1.3, k + 2.0, WAVE_LEVELS)
                        for k in (2, 4)])


def criterion_7():
    cases = []
    for k in (2, 4):
        cases += [("annulus-dirichlet", "annulus:curvilinear", k, k + 1.7, math.inf, WAVE_LEVELS),
                  ("annulus-dirichlet", "annulus:straight", k, 1.6, 2.6, WAVE_LEVELS),
                  ("annulus-dirichlet", "annulus:mixed", k, k + 1.7, math.inf, WAVE_LEVELS)]
    ok, text = _band_check(cases)
    zero = max(abs(bessel_j(4, r)) for r in DIRICHLET_RADII)
    ok &= zero < 1e-11
    return ok, f"{text}; |J4(r)| <= {zero:.1e}"


def criterion_8():
    return _band_check([("annulus-neumann", "annulus:curvilinear", k, k + 1.7, math.inf,
                         WAVE_LEVELS) for k in (2, 4)])


# -- 9, 10: table reproductions ---------------------------------------------------------------


def _table_check(problem, table, factor, extra=None):
    ok = True
    parts = []
    for k, (ref_err, ref_rate) in table.items():
        cfg = RunConfig(problem=problem, k=k, levels=(16, 32), **(extra or {}))
        try:
            rep = quiet_run(cfg)
        except RunError as exc:
            ok = False
            parts.append(f"k={k}: run failed ({str(exc)[:90]})")
            continue
        err = rep.levels[-1].l2
        rate = rep.rates_l2[-1]
        good_err = ref_err / factor <= err <= ref_err * factor
        good_rate = abs(rate - ref_rate) <= ORDER_TOL
        ok &= good_err and good_rate
        parts.append(f"k={k}: l2 {err:.2e} (table {ref_err:.2e}{'' if good_err else ' off'}), "
                     f"order {rate:.2f} (table {ref_rate:.2f}{'' if good_rate else ' off'})")
    return ok, "; ".join(parts)


def criterion_9():
    t0 = time.perf_counter()
    ok, text = _table_check("parabolic-table1", TABLE1, 3.0)
    elapsed = time.perf_counter() - t0
    return ok and elapsed < 600, f"{text}; {elapsed:.0f} s"


def criterion_10():
    logging.disable(logging.WARNING)
    try:
        manufactured = get_problem("schrodinger-table2").notes.get("manufactured_forcing", False)
        ok, text = _table_check("schrodinger-table2", TABLE2, 10.0 if manufactured else 3.0)
        # the half-Laplacian reading needs no forcing; reported alongside, not scored
        alt = quiet_run(RunConfig(problem="schrodinger-table2", k=2, levels=(16, 32), kinetic=0.5))
    finally:
        logging.disable(logging.NOTSET)
    note = ("manufactured forcing (r^2/2 - 1) u, x10 tolerance" if manufactured
            else "unforced, x3 tolerance")
    info = (f" | unscored, kinetic 1/2 unforced k=2: l2 {alt.levels[-1].l2:.2e}, "
            f"order {alt.rates_l2[-1]:.2f}")
    return ok, f"[{note}] {text}{info}"


# -- 11: conservation -------------------------------------------------------------------------


def schrodinger_norm_drift(n=32, k=2, T=0.5):
    mesh = build_cartesian((0.0, 2.0, 0.0, 2.0), n, k)
    coeffs = CoefficientSet(c=lambda x, y, t: 0.5 * (x * x + y * y))
    op = DiscreteOperator(mesh, coeffs)
    inv_m = np.where(op.constrained, 0.0, 1.0 / op.mass)
    x, y = mesh.x, mesh.y
    u0 = np.sin(0.5 * np.pi * x) * np.sin(0.5 * np.pi * y) * (1.0 + 0.5j * x * y)
    u0 = np.where(op.constrained, 0.0, u0)
    steps, dt = steps_for(T, mesh.h ** 2 / 500.0)
    st = AB4Stepper(dt, lambda t, u: -1j * inv_m * op.apply_full(0.0, u))
    st.start(0.0, u0)
    for _ in range(steps - 3):
        st.step()
    quad = lambda v: math.sqrt(float(np.sum(op.mass * np.abs(v) ** 2)))  # noqa: E731
    return (abs(quad(st.u) / quad(u0) - 1.0),
            abs(discrete_l2(st.u, mesh) / discrete_l2(u0, mesh) - 1.0))


def wave_energy_drift():
    problem = get_problem("square-dirichlet")
    cfg = resolve(RunConfig(problem="square-dirichlet", k=2, levels=(16,)), problem)
    op = build_level(problem, cfg, 16)
    energy = []
    run_wave(problem, op, cfg, energy=energy)
    e = np.array(energy)
    return float(np.max(np.abs(e / e[0] - 1.0)))


def criterion_11():
    quad, nodal = schrodinger_norm_drift()
    wave = wave_energy_drift()
    ok = quad <= 1e-6 and wave <= 1e-4
    return ok, (f"Schrodinger n=32 T=0.5 norm drift {quad:.1e} (quadrature norm; "
                f"unweighted nodal l2 {nodal:.1e}); wave n=16 T=5 energy drift {wave:.1e}")


# -- 12: Krylov vs dense ----------------------------------------------------------------------


def criterion_12():
    mesh = build_cartesian((0.0, 1.0, 0.0, 1.0), 2, 3)
    coeffs = CoefficientSet(
        a=lambda x, y, t: ((2 + np.sin(x)) * (1 + t), 0.3 * np.cos(y), 2 + x * y),
        b=lambda x, y, t: (0.5 + x, -0.25 + 0 * x),
        c=lambda x, y, t: 3 + x * x + t,
        a_is_diagonal=False, time_dependent=True)
    op = DiscreteOperator(mesh, coeffs)
    free = op.free
    solver = KrylovConfig(rel_tol=1e-14)
    g = lambda x, y, t: 1 + x - 2 * y  # noqa: E731
    Lu = lambda x, y, t: np.cos(3 * x) * np.exp(y)  # noqa: E731

    A = op.assemble(0.0)
    rhs = op.mass * Lu(mesh.x, mesh.y, 0.0)
    g_i = np.where(op.constrained, g(mesh.x, mesh.y, 0.0), 0.0)
    rhs = rhs - A @ g_i
    dense = g_i.copy()
    dense[free] += np.linalg.solve(A[np.ix_(free, free)], rhs[free])
    krylov = op.elliptic_projection(Lu, 0.0, g=g, solver=solver)
    e1 = float(np.max(np.abs(krylov - dense)) / np.max(np.abs(dense)))

    dt = 0.05
    rng = np.random.default_rng(5)
    hist = [rng.normal(size=free.size) for _ in range(3)]
    load = rng.normal(size=free.size)
    mass = op.mass[free]
    st = BDF3Stepper(dt, mass, op.apply_free, lambda t: load,
                     diag_A=lambda t: op.stiffness_diagonal(t)[free], solver=solver)
    st.set_history(0.3, *hist)
    got = st.step()
    A1 = op.assemble(0.3 + dt)[np.ix_(free, free)]
    lhs = (11.0 / 6.0) / dt * np.diag(mass) + A1
    rhs = mass * (3 * hist[0] - 1.5 * hist[1] + hist[2] / 3) / dt + load
    ref = np.linalg.solve(lhs, rhs)
    e2 = float(np.max(np.abs(got - ref)) / np.max(np.abs(ref)))
    return max(e1, e2) <= 1e-10, f"elliptic projection {e1:.1e}, BDF3 step {e2:.1e} vs dense LU"


# -- 13: determinism --------------------------------------------------------------------------

DETERMINISM_MAX_LEVEL = 8


def _suite_outputs(threads, out):
    env = dict(os.environ, GLLSEM_NUM_THREADS=str(threads))
    env.pop("NUMBA_NUM_THREADS", None)
    subprocess.run([sys.executable, "-m", "gllsem.cli", "suite", "--output", out,
                    "--max-level", str(DETERMINISM_MAX_LEVEL)],
                   env=env, check=True, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    files = sorted(glob.glob(os.path.join(out, "**", "*.csv"), recursive=True))
    return {os.path.relpath(f, out): open(f, "rb").read() for f in files}


def criterion_13(tmp):
    a = _suite_outputs(1, os.path.join(tmp, "t1"))
    b = _suite_outputs(4, os.path.join(tmp, "t4"))
    same = a.keys() == b.keys() and all(a[k] == b[k] for k in a)
    differing = [k for k in a if a.get(k) != b.get(k)]
    return same and len(a) > 0, (f"{len(a)} CSVs (levels <= {DETERMINISM_MAX_LEVEL}) with 1 vs 4 "
                                 f"threads: {'byte-identical' if same else f'differ: {differing}'}")


# -- pytest wrappers --------------------------------------------------------------------------

CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
            11: criterion_11, 12: criterion_12}


@pytest.mark.parametrize("num", sorted(CRITERIA))
def test_criterion(num):
    ok, detail = CRITERIA[num]()
    assert report(num, ok, detail), RESULTS[num]


def test_criterion_13(tmp_path):
    ok, detail = criterion_13(str(tmp_path))
    assert report(13, ok, detail), RESULTS[13]


if __name__ == "__main__":
    import tempfile

    for num, fn in CRITERIA.items():
        report(num, *fn())
    with tempfile.TemporaryDirectory() as tmp:
        report(13, *criterion_13(tmp))
