"""Refinement studies: mesh -> operator -> initial data -> time integration -> errors."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace

import numpy as np

from . import analysis
from .krylov import KrylovConfig
from .mesh import FAMILIES, Mesh, make_mesh
from .operator import DiscreteOperator
from .problems import Problem, get_problem, parabolic_b_max, parabolic_f_max
from .timeint import AB4Stepper, BDF3Stepper, WaveStepper, steps_for

DT_RULES = ("cfl", "paper-parabolic", "paper-schrodinger", "explicit")
DX_RULES = ("h", "node", "cell")
DEFAULT_DT_RULE = {"wave": "cfl", "parabolic": "paper-parabolic", "schrodinger": "paper-schrodinger"}
DEFAULT_START = {"wave": "taylor", "parabolic": "exact", "schrodinger": "rk4"}


class RunError(RuntimeError):
    """A refinement level failed; the message names the level."""


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a refinement study.

    ``None`` entries resolve to per-problem defaults in :func:`resolve`.
    """

    problem: str = "square-dirichlet"
    k: int = 2
    family: str | None = None
    levels: tuple = (4, 8, 16)
    order: int | None = None  # Taylor order for the wave scheme
    dt_rule: str | None = None
    dt: float | None = None  # used by dt_rule = explicit
    cfl: float = 0.25
    dx: str = "h"  # meaning of the grid spacing in the fixed time-step rules
    start: str | None = None
    initial: str = "interpolant"
    seed: int = 0
    magnitude_fraction: float = 0.25
    krylov: str = "bicgstab"
    rel_tol: float = 1e-12
    kinetic: float = 1.0  # Schrodinger: coefficient of the Laplacian
    max_samples: int = 2000  # error samples for time integration (parabolic, Schrodinger)
    output: str | None = None
    gnuplot: bool = False

    def validate(self):
        if list(self.levels) != sorted(set(self.levels)) or not self.levels:
            raise ValueError(f"refinement levels must be strictly ascending, got {self.levels}")
        if self.family is not None and self.family not in FAMILIES:
            raise ValueError(f"unknown mesh family {self.family!r}")
        if self.dt_rule is not None and self.dt_rule not in DT_RULES:
            raise ValueError(f"unknown dt rule {self.dt_rule!r}")
        if self.dx not in DX_RULES:
            raise ValueError(f"unknown grid-spacing rule {self.dx!r}")
        if self.dt_rule == "explicit" and not (self.dt and self.dt > 0):
            raise ValueError("dt_rule=explicit needs a positive dt")
        if self.initial not in ("interpolant", "elliptic_projection"):
            raise ValueError(f"unknown initial-data rule {self.initial!r}")
        if self.k < 2:
            raise ValueError("degree k must be at least 2")
        return self


def resolve(cfg: RunConfig, problem: Problem) -> RunConfig:
    """Fill per-problem defaults."""
    out = replace(
        cfg,
        family=cfg.family or problem.default_family,
        dt_rule=cfg.dt_rule or DEFAULT_DT_RULE[problem.pde],
        start=cfg.start or DEFAULT_START[problem.pde],
        order=cfg.order or (4 if cfg.k <= 2 else 6),
    )
    starts = {"wave": ("taylor", "exact"), "parabolic": ("exact", "self"),
              "schrodinger": ("rk4", "exact")}[problem.pde]
    if out.start not in starts:
        raise ValueError(f"start {out.start!r} does not apply to {problem.pde}; use one of {starts}")
    if problem.radii is not None and not out.family.startswith("annulus"):
        raise ValueError(f"{problem.name} lives on an annulus; family {out.family!r} does not fit")
    if problem.radii is None and out.family.startswith("annulus"):
        raise ValueError(f"{problem.name} is posed on a rectangle; family {out.family!r} does not fit")
    if out.family in ("smooth",) and problem.domain != (-np.pi, np.pi, -np.pi, np.pi):
        raise ValueError("the smooth map is defined on [-pi, pi]^2 only")
    return out.validate()


# -- time-step rules -------------------------------------------------------------------------


def min_node_spacing(mesh: Mesh) -> float:
    """Smallest distance between neighbouring Gauss-Lobatto nodes."""
    g = mesh.geom
    d1 = np.hypot(*np.moveaxis(g[:, 1:, :, :] - g[:, :-1, :, :], -1, 0))
    d2 = np.hypot(*np.moveaxis(g[:, :, 1:, :] - g[:, :, :-1, :], -1, 0))
    return float(min(d1.min(), d2.min()))


def grid_spacing(mesh: Mesh, rule: str) -> float:
    """``h`` (half cell edge), ``cell`` (full edge) or ``node`` (edge / k)."""
    if rule == "h":
        return mesh.h
    if rule == "cell":
        return 2.0 * mesh.h
    return 2.0 * mesh.h / mesh.k


def max_diffusion_eigenvalue(op: DiscreteOperator, t=0.0) -> float:
    a11, a12, a22 = op.coeffs.eval_a(op.qx, op.qy, t)
    mean = 0.5 * (a11 + a22)
    return float(np.max(mean + np.sqrt((0.5 * (a11 - a22)) ** 2 + a12 ** 2)))


def time_step(cfg: RunConfig, problem: Problem, op: DiscreteOperator) -> tuple[int, float, dict]:
    """Number of steps and the uniform step reaching ``T``; the rule's inputs go in ``info``."""
    mesh = op.mesh
    info = {}
    if cfg.dt_rule == "explicit":
        dt_max = cfg.dt
    elif cfg.dt_rule == "cfl":
        hmin = min_node_spacing(mesh)
        lam = max_diffusion_eigenvalue(op)
        dt_max = cfg.cfl * hmin / (mesh.k ** 2 * math.sqrt(lam))
        info.update(h_min=hmin, lambda_max=lam)
    elif cfg.dt_rule == "paper-parabolic":
        dx = grid_spacing(mesh, cfg.dx)
        b_m = parabolic_b_max(problem)
        f_m = parabolic_f_max(problem)
        dt_max = min(dx / 10.0, dx / (10.0 * b_m), f_m / 10.0)
        info.update(dx=dx, b_M=b_m, f_M=f_m)
    else:
        dx = grid_spacing(mesh, cfg.dx)
        dt_max = dx * dx / 500.0
        info.update(dx=dx)
    n, dt = steps_for(problem.T, dt_max)
    info.update(dt_rule_value=dt_max)
    return n, dt, info


def _sample_steps(n_steps, cap):
    """Step indices at which errors are sampled (always includes 0 and the last step)."""
    if n_steps + 1 <= cap:
        return None
    return set(int(round(v)) for v in np.linspace(0, n_steps, cap))


# -- runs ------------------------------------------------------------------------------------


class _Exact:
    """Nodal interpolants of the exact solution's spatial part, reused every step."""

    def __init__(self, problem: Problem, mesh: Mesh):
        self.p = problem
        self.S = problem.space(mesh.x, mesh.y)

    def at(self, t):
        return self.S * self.p.time.f(t)


def _initial(problem, op, exact: _Exact, cfg):
    if cfg.initial == "elliptic_projection":
        solver = KrylovConfig(method=cfg.krylov, rel_tol=cfg.rel_tol)
        return op.elliptic_projection(problem.Lu, 0.0, g=problem.boundary_data(), solver=solver)
    return exact.at(0.0)


def run_wave(problem: Problem, op: DiscreteOperator, cfg: RunConfig, energy=None):
    mesh = op.mesh
    exact = _Exact(problem, mesh)
    if problem.boundary_data() is not None or problem.forcing:
        raise ValueError("the Taylor wave scheme here covers f = 0 with homogeneous data")
    inv_m = np.where(op.constrained, 0.0, 1.0 / op.mass)
    lin = lambda u: -inv_m * op.apply_full(0.0, u)  # noqa: E731
    n_steps, dt, info = time_step(cfg, problem, op)
    st = WaveStepper(cfg.order, dt, lin)
    u0 = np.where(op.constrained, 0.0, _initial(problem, op, exact, cfg))
    v0 = np.where(op.constrained, 0.0, exact.S * problem.time.d1(0.0))
    if cfg.start == "exact":
        st.set_history(np.where(op.constrained, 0.0, exact.at(-dt)), u0)
    else:
        st.start(u0, v0)
    hist = analysis.ErrorHistory()
    hist.add(0.0, st.u - exact.at(0.0), mesh)
    states = [st.u_prev, st.u] if energy is not None else None
    for m in range(1, n_steps + 1):
        u = st.step()
        t = m * dt
        hist.add(t, u - exact.at(t), mesh)
        if energy is not None:
            states.append(u)
            if len(states) == 5:
                energy.append(discrete_energy(op, states, dt))
                states.pop(0)
    ti2, tiinf = hist.integrated()
    info.update(dt=dt, steps=n_steps, order=cfg.order)
    return analysis.LevelResult(n=mesh.nx, h=mesh.h, l2=hist.l2[-1], linf=hist.linf[-1],
                                ti_l2=ti2, ti_linf=tiinf, meta=info)


def discrete_energy(op: DiscreteOperator, states, dt) -> float:
    """``1/2 <u_t, u_t>_h + 1/2 A_h(u, u)`` at the middle of five consecutive levels.

    ``u_t`` is the fourth-order central difference.
    """
    um2, um1, u, up1, up2 = states
    ut = (um2 - 8.0 * um1 + 8.0 * up1 - up2) / (12.0 * dt)
    au = op.apply_full(0.0, u)
    return 0.5 * float(np.sum(op.mass * ut * ut)) + 0.5 * float(np.sum(u * au))


def run_parabolic(problem: Problem, op: DiscreteOperator, cfg: RunConfig):
    mesh = op.mesh
    exact = _Exact(problem, mesh)
    free = op.free
    mass = op.mass[free]
    x, y = mesh.x, mesh.y
    loads = [(op.mass * s(x, y))[free] for s, _ in problem.forcing]
    g = problem.boundary_data()

    def forcing(t):
        out = np.zeros(free.size)
        for (_, tau), ld in zip(problem.forcing, loads):
            out += tau(t) * ld
        if g is not None:
            out += op.lift_dirichlet(g, t)[1][free]
        return out

    def lifted(t):
        return np.zeros(mesh.n_nodes) if g is None else op.lift_dirichlet(g, t)[0]

    n_steps, dt, info = time_step(cfg, problem, op)
    solver = KrylovConfig(method=cfg.krylov, rel_tol=cfg.rel_tol)
    st = BDF3Stepper(dt, mass, op.apply_free, forcing,
                     diag_A=lambda t: op.stiffness_diagonal(t)[free], solver=solver)
    u0 = _initial(problem, op, exact, cfg)
    if cfg.start == "exact":
        st.set_history(2 * dt, exact.at(2 * dt)[free], exact.at(dt)[free], u0[free])
        first = 3
        levels = {0: u0, 1: exact.at(dt), 2: exact.at(2 * dt)}
    else:
        st.self_start(0.0, u0[free])
        first = 3
        levels = {0: u0, 1: op.prolong(st.history[1]) + lifted(dt),
                  2: op.prolong(st.history[0]) + lifted(2 * dt)}
    if n_steps < 3:
        raise ValueError("BDF3 needs at least three steps")
    sample = _sample_steps(n_steps, cfg.max_samples)
    hist = analysis.ErrorHistory()
    for m in range(first):
        if sample is None or m in sample:
            hist.add(m * dt, levels[m] - exact.at(m * dt), mesh)
    for m in range(first, n_steps + 1):
        xf = st.step()
        t = m * dt
        if sample is None or m in sample or m == n_steps:
            u = op.prolong(xf) + lifted(t)
            hist.add(t, u - exact.at(t), mesh)
    ti2, tiinf = hist.integrated()
    info.update(dt=dt, steps=n_steps, krylov_iterations=int(sum(st.iterations)))
    return analysis.LevelResult(n=mesh.nx, h=mesh.h, l2=hist.l2[-1], linf=hist.linf[-1],
                                ti_l2=ti2, ti_linf=tiinf, meta=info)


def run_schrodinger(problem: Problem, op: DiscreteOperator, cfg: RunConfig, norms=None):
    """AB4 for ``M u' = -i (A u + A g_I + M f)`` on the unconstrained nodes.

    The state is kept at full length with zeros on Dirichlet nodes; the
    boundary data and forcing are separable in time, so their loads are
    assembled once and scaled by the time factor each step.
    """
    mesh = op.mesh
    exact = _Exact(problem, mesh)
    inv_m = np.where(op.constrained, 0.0, 1.0 / op.mass)
    g = problem.boundary_data()
    x, y = mesh.x, mesh.y
    # separable loads: sum_j tau_j(t) * load_j
    terms = [(tau, op.mass * s(x, y)) for s, tau in problem.forcing]
    g_space = None
    if g is not None:
        g_space, corr = op.lift_dirichlet(lambda xx, yy, tt: problem.space(xx, yy), 0.0)
        terms.append((problem.time.f, -corr))  # A g_I(t) = tau(t) * A g_I(space)
    terms = [(tau, np.where(op.constrained, 0.0, ld).astype(complex)) for tau, ld in terms]

    def rhs(t, u):
        r = op.apply_full(0.0, u)
        for tau, ld in terms:
            r += tau(t) * ld
        return -1j * inv_m * r

    def full(t, u):
        return u if g_space is None else u + problem.time.f(t) * g_space

    n_steps, dt, info = time_step(cfg, problem, op)
    u0 = _initial(problem, op, exact, cfg)
    u0 = np.where(op.constrained, 0.0, u0).astype(complex)
    st = AB4Stepper(dt, rhs)
    if cfg.start == "exact":
        states = [np.where(op.constrained, 0.0, exact.at(m * dt)) for m in range(4)]
        st.set_history(3 * dt, states[::-1])
        states[0] = u0
    else:
        states = st.start(0.0, u0)
    if n_steps < 4:
        raise ValueError("AB4 needs at least four steps")
    sample = _sample_steps(n_steps, cfg.max_samples)
    hist = analysis.ErrorHistory()
    for m in range(4):
        if sample is None or m in sample:
            hist.add(m * dt, full(m * dt, states[m]) - exact.at(m * dt), mesh)
        if norms is not None:
            norms.append(analysis.discrete_l2(states[m], mesh))
    for m in range(4, n_steps + 1):
        u = st.step()
        t = m * dt
        if sample is None or m in sample or m == n_steps:
            hist.add(t, full(t, u) - exact.at(t), mesh)
            if norms is not None:
                norms.append(analysis.discrete_l2(u, mesh))
    ti2, tiinf = hist.integrated()
    info.update(dt=dt, steps=n_steps)
    return analysis.LevelResult(n=mesh.nx, h=mesh.h, l2=hist.l2[-1], linf=hist.linf[-1],
                                ti_l2=ti2, ti_linf=tiinf, meta=info)


def build_level(problem: Problem, cfg: RunConfig, n: int):
    mesh = make_mesh(cfg.family, n, cfg.k, domain=problem.domain, radii=problem.radii,
                     seed=cfg.seed, magnitude_fraction=cfg.magnitude_fraction)
    return DiscreteOperator(mesh, problem.coeffs, bc=problem.bc)


def run_level(problem: Problem, cfg: RunConfig, n: int) -> analysis.LevelResult:
    op = build_level(problem, cfg, n)
    if problem.pde == "wave":
        return run_wave(problem, op, cfg)
    if problem.pde == "parabolic":
        return run_parabolic(problem, op, cfg)
    return run_schrodinger(problem, op, cfg)


def load_problem(cfg: RunConfig) -> Problem:
    if cfg.problem == "schrodinger-table2":
        return get_problem(cfg.problem, kinetic=cfg.kinetic)
    return get_problem(cfg.problem)


def run(cfg: RunConfig, log=None) -> analysis.ErrorReport:
    """Run every refinement level and return the fitted report.

    Any failure is re-raised as :class:`RunError` naming the level.
    """
    problem = load_problem(cfg)
    cfg = resolve(cfg, problem)
    results = []
    for n in cfg.levels:
        try:
            res = run_level(problem, cfg, n)
        except Exception as exc:  # noqa: BLE001 - re-tagged with the level
            raise RunError(f"level n={n}: {type(exc).__name__}: {exc}") from exc
        results.append(res)
        if log is not None:
            log(f"n={n:>4}  l2={res.l2:.3e}  linf={res.linf:.3e}  "
                f"ti_l2={res.ti_l2:.3e}  steps={res.meta.get('steps')}")
    report = analysis.ErrorReport(levels=results,
                                  headline="ti" if problem.pde == "wave" else "final",
                                  meta=config_meta(cfg, problem))
    if len(results) >= 2:
        analysis.fit_rates(report)
    if cfg.output:
        write_outputs(report, cfg)
    return report


def config_meta(cfg: RunConfig, problem: Problem) -> dict:
    meta = {f.name: getattr(cfg, f.name) for f in fields(cfg) if f.name not in ("output", "gnuplot")}
    meta = {k: "auto" if v is None else v for k, v in meta.items()}
    meta["levels"] = " ".join(str(v) for v in cfg.levels)
    meta["pde"] = problem.pde
    meta["headline"] = "time_integrated" if problem.pde == "wave" else "final_time"
    if problem.notes.get("manufactured_forcing"):
        meta["forcing"] = "manufactured residual (r^2/2 - 1) u"
    return meta


def csv_name(cfg: RunConfig) -> str:
    fam = cfg.family.replace(":", "-")
    return f"{cfg.problem}_k{cfg.k}_{fam}.csv"


def write_outputs(report: analysis.ErrorReport, cfg: RunConfig):
    os.makedirs(cfg.output, exist_ok=True)
    name = csv_name(cfg)
    path = os.path.join(cfg.output, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_csv())
    if cfg.gnuplot:
        with open(path[:-4] + ".gp", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(analysis.gnuplot_script(name, name[:-4], report.headline))
    return path
