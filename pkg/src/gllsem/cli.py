"""Command-line entry point: ``gll``, ``op-probe``, ``run`` and ``suite``."""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import warnings
from dataclasses import dataclass, fields, replace

import numpy as np

from .gll import gll_rule
from .mesh import FAMILIES, make_mesh
from .operator import DiscreteOperator
from .problems import REGISTRY
from .runner import DT_RULES, DX_RULES, RunConfig, RunError, run

# -- config files ----------------------------------------------------------------------------

_ALIASES = {"mesh": "family", "dt-rule": "dt_rule", "rel-tol": "rel_tol", "max-samples": "max_samples",
            "magnitude-fraction": "magnitude_fraction"}


def _coerce(name, value: str):
    if name == "levels":
        return tuple(int(v) for v in value.replace(" ", "").split(",") if v)
    if name in ("k", "order", "seed", "max_samples"):
        return int(value)
    if name in ("dt", "cfl", "rel_tol", "kinetic", "magnitude_fraction"):
        return float(value)
    if name == "gnuplot":
        return value.strip().lower() in ("1", "true", "yes", "on")
    return value.strip()


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    known = {f.name for f in fields(RunConfig)}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key).replace("-", "_")
        if key not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


# -- subcommands -----------------------------------------------------------------------------


def cmd_gll(args, out):
    rule = gll_rule(args.k)
    out.write("i,node,weight\n")
    for i, (x, w) in enumerate(zip(rule.nodes, rule.weights)):
        out.write(f"{i},{x:.17e},{w:.17e}\n")
    return 0


def cmd_op_probe(args, out):
    if args.problem:
        prob = REGISTRY[args.problem]()
        coeffs, bc = prob.coeffs, prob.bc
        domain, radii = prob.domain, prob.radii
        family = args.mesh or prob.default_family
    else:
        coeffs, bc, radii = None, args.bc, None
        domain = tuple(float(v) for v in args.domain.split(","))
        family = args.mesh or "cartesian"
    mesh = make_mesh(family, args.n, args.k, domain=domain, radii=radii, seed=args.seed)
    if mesh.n_nodes > 4000:
        raise ValueError("op-probe is meant for tiny meshes (at most 4000 nodes)")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        op = DiscreteOperator(mesh, coeffs, bc=bc)
    mat = op.assemble(args.t)
    rows, cols = np.nonzero(mat)
    out.write(f"# nodes={mesh.n_nodes} k={args.k} n={args.n} family={family} bc={bc}\n")
    out.write("row,col,value\n")
    for r, c in zip(rows, cols):
        out.write(f"{r},{c},{mat[r, c]:.17e}\n")
    return 0


def _run_config(args) -> RunConfig:
    values = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            values.update(parse_config(fh.read()))
    overrides = {
        "problem": args.problem, "k": args.k, "family": args.mesh, "levels": args.levels,
        "order": args.order, "dt_rule": args.dt_rule, "dt": args.dt, "dx": args.dx,
        "start": args.start, "initial": args.initial, "seed": args.seed, "kinetic": args.kinetic,
        "krylov": args.krylov, "rel_tol": args.rel_tol, "output": args.output,
    }
    for key, val in overrides.items():
        if val is not None:
            values[key] = _coerce(key, val) if isinstance(val, str) and key == "levels" else val
    if args.gnuplot:
        values["gnuplot"] = True
    values.setdefault("output", "results")
    return RunConfig(**values)


def cmd_run(args, out):
    cfg = _run_config(args)
    try:
        report = run(cfg, log=lambda s: out.write(s + "\n"))
    except (RunError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    out.write(report.table() + "\n")
    return 0


# -- suite -----------------------------------------------------------------------------------


@dataclass(frozen=True)
class SuiteCase:
    problem: str
    family: str
    k: int
    levels: tuple
    target: str  # "k+2", "k+1", "k+5/3", "2" or "" when nothing is predicted
    extra: tuple = ()  # additional RunConfig overrides as (key, value) pairs

    @property
    def label(self):
        tag = "".join(f",{k}={v}" for k, v in self.extra)
        return f"{self.problem}/{self.family}/k={self.k}{tag}"


def expected_rate(target: str, k: int):
    return {"k+2": k + 2.0, "k+1": k + 1.0, "k+5/3": k + 5.0 / 3.0, "2": 2.0}.get(target)


def acceptance_band(target: str, k: int):
    """Rate interval counted as agreement with the predicted behaviour."""
    if target == "k+2":
        return k + 1.7, math.inf
    if target == "k+1":
        return k + 0.6, k + 1.4
    if target == "k+5/3":
        return k + 1.3, k + 2.0
    if target == "2":
        return 1.6, 2.6
    return None


def suite_cases(full: bool = False):
    wave2 = (4, 8, 16, 32, 64) if full else (4, 8, 16, 32)
    wave4 = (4, 8, 16, 32)
    cases = []
    for k, lv in ((2, wave2), (4, wave4)):
        cases += [
            SuiteCase("square-dirichlet", "cartesian", k, lv, "k+2"),
            SuiteCase("square-dirichlet", "random", k, lv, "k+1"),
            SuiteCase("square-dirichlet", "smooth", k, lv, "k+2"),
            SuiteCase("square-neumann", "cartesian", k, lv, "k+2"),
            SuiteCase("square-neumann", "random", k, lv, "k+1"),
            SuiteCase("square-neumann", "smooth", k, lv, "k+5/3"),
            SuiteCase("annulus-dirichlet", "annulus:curvilinear", k, lv, "k+2"),
            SuiteCase("annulus-dirichlet", "annulus:straight", k, lv, "2"),
            SuiteCase("annulus-dirichlet", "annulus:mixed", k, lv, "k+2"),
            SuiteCase("annulus-neumann", "annulus:curvilinear", k, lv, "k+2"),
            SuiteCase("annulus-neumann", "annulus:straight", k, lv, ""),
            SuiteCase("annulus-neumann", "annulus:mixed", k, lv, ""),
        ]
    table = (4, 8, 16, 32) if full else (4, 8, 16)
    for k in (2, 3, 4):
        cases.append(SuiteCase("parabolic-table1", "cartesian", k, table, "k+2"))
    for k in (2, 3, 4):
        cases.append(SuiteCase("schrodinger-table2", "cartesian", k, table, "k+2"))
        cases.append(SuiteCase("schrodinger-table2", "cartesian", k, table, "k+2",
                               (("kinetic", 0.5),)))
    return cases


def run_suite(cases, output, seed=0, log=None, max_level=None):
    """Run every case; failures are recorded and the suite continues.

    Returns the summary rows ``(label, expected, observed, band, status)``.
    """
    rows = []
    for case in cases:
        levels = tuple(n for n in case.levels if max_level is None or n <= max_level)
        cfg = RunConfig(problem=case.problem, k=case.k, family=case.family, levels=levels,
                        seed=seed, output=output)
        cfg = replace(cfg, **dict(case.extra))
        if case.extra:
            cfg = replace(cfg, output=os.path.join(output, "".join(f"{k}{v}" for k, v in case.extra)))
        exp = expected_rate(case.target, case.k)
        band = acceptance_band(case.target, case.k)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                report = run(cfg)
            rate = report.rates_l2[-1] if report.rates_l2 else None
            if rate is None or band is None:
                status = "info"
            else:
                status = "ok" if band[0] <= rate <= band[1] else "off"
        except RunError as exc:
            rate, status = None, f"failed ({exc})"
        row = (case.label, exp, rate, band, status)
        rows.append(row)
        if log is not None:
            log(format_row(row))
    return rows


def format_row(row):
    label, exp, rate, band, status = row
    exp_s = "-" if exp is None else f"{exp:.2f}"
    rate_s = "-" if rate is None else f"{rate:.2f}"
    if band is None:
        band_s = "-"
    else:
        band_s = f"[{band[0]:.2f}, {'inf' if math.isinf(band[1]) else f'{band[1]:.2f}'}]"
    return f"{label:<52} {exp_s:>8} {rate_s:>8} {band_s:>16}  {status}"


def summary_text(rows):
    head = f"{'case':<52} {'expected':>8} {'observed':>8} {'band':>16}  status"
    return "\n".join([head] + [format_row(r) for r in rows]) + "\n"


def cmd_suite(args, out):
    cases = suite_cases(full=args.full)
    if args.only:
        cases = [c for c in cases if any(s in c.label for s in args.only.split(","))]
    out.write(f"{'case':<52} {'expected':>8} {'observed':>8} {'band':>16}  status\n")
    rows = run_suite(cases, args.output, seed=args.seed, max_level=args.max_level,
                     log=lambda s: (out.write(s + "\n"), out.flush()))
    os.makedirs(args.output, exist_ok=True)
    with open(os.path.join(args.output, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(summary_text(rows))
    return 0


# -- argument parsing ------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="gllsem", description="Q^k Gauss-Lobatto spectral element kit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gll", help="print Gauss-Lobatto nodes and weights as CSV")
    g.add_argument("--k", type=int, required=True)

    o = sub.add_parser("op-probe", help="dump the assembled operator of a tiny mesh (COO CSV)")
    o.add_argument("--k", type=int, default=2)
    o.add_argument("--n", type=int, default=2)
    o.add_argument("--mesh", choices=FAMILIES)
    o.add_argument("--domain", default="0,1,0,1", help="x0,x1,y0,y1 (Laplacian only)")
    o.add_argument("--bc", choices=("dirichlet", "neumann"), default="neumann")
    o.add_argument("--problem", choices=sorted(REGISTRY), help="use this problem's coefficients")
    o.add_argument("--t", type=float, default=0.0)
    o.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("run", help="refinement study for one problem")
    r.add_argument("--config", help="key=value file; flags override it")
    r.add_argument("--problem", choices=sorted(REGISTRY))
    r.add_argument("--k", type=int)
    r.add_argument("--mesh", choices=FAMILIES)
    r.add_argument("--levels", help="comma-separated cells per side, e.g. 4,8,16")
    r.add_argument("--order", type=int, choices=(4, 6))
    r.add_argument("--dt-rule", choices=DT_RULES)
    r.add_argument("--dt", type=float)
    r.add_argument("--dx", choices=DX_RULES)
    r.add_argument("--start", choices=("taylor", "exact", "rk4", "self"))
    r.add_argument("--initial", choices=("interpolant", "elliptic_projection"))
    r.add_argument("--seed", type=int)
    r.add_argument("--kinetic", type=float)
    r.add_argument("--krylov", choices=("bicgstab", "gmres"))
    r.add_argument("--rel-tol", type=float)
    r.add_argument("--output", help="directory for CSV files (default: results)")
    r.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")

    s = sub.add_parser("suite", help="run the whole benchmark matrix and summarise rates")
    s.add_argument("--output", default="results")
    s.add_argument("--full", action="store_true", help="include the largest refinement levels")
    s.add_argument("--max-level", type=int, help="drop levels finer than this")
    s.add_argument("--only", help="comma-separated substrings selecting cases")
    s.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    out = sys.stdout
    handlers = {"gll": cmd_gll, "op-probe": cmd_op_probe, "run": cmd_run, "suite": cmd_suite}
    return handlers[args.command](args, out)


if __name__ == "__main__":
    sys.exit(main())
