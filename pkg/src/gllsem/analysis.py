"""Discrete norms, time-integrated errors and convergence rates."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

CSV_COLUMNS = ("level", "n", "h", "l2", "linf", "rate_l2", "rate_linf", "ti_l2", "ti_linf")


def discrete_l2(err, mesh) -> float:
    """``sqrt(h^2 sum |err|^2)`` over all global nodes, each counted once."""
    e = np.abs(np.asarray(err))
    return float(mesh.h * math.sqrt(np.sum(e * e)))


def discrete_linf(err) -> float:
    e = np.asarray(err)
    return float(np.max(np.abs(e))) if e.size else 0.0


def time_integrated(samples, kind: str = "l2_in_time") -> float:
    """Trapezoid rule over ``(t, value)`` samples.

    ``l2_in_time`` returns ``(int value^2 dt)^(1/2)`` and ``l1_in_time``
    returns ``int value dt``.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ValueError("time integration needs at least two (t, value) samples")
    t, v = arr[:, 0], arr[:, 1]
    if np.any(np.diff(t) <= 0):
        raise ValueError("sample times must be strictly increasing")
    if kind == "l2_in_time":
        return math.sqrt(float(np.trapezoid(v * v, t)))
    if kind == "l1_in_time":
        return float(np.trapezoid(v, t))
    raise ValueError(f"unknown time-integration kind {kind!r}")


class ErrorHistory:
    """Collects ``(t, l2, linf)`` during a run."""

    def __init__(self):
        self.t = []
        self.l2 = []
        self.linf = []

    def add(self, t, err, mesh):
        self.t.append(float(t))
        self.l2.append(discrete_l2(err, mesh))
        self.linf.append(discrete_linf(err))

    def integrated(self):
        """``(int ||e||_l2^2 dt)^(1/2)`` and ``int ||e||_linf dt``."""
        if len(self.t) < 2:
            return math.nan, math.nan
        return (time_integrated(list(zip(self.t, self.l2)), "l2_in_time"),
                time_integrated(list(zip(self.t, self.linf)), "l1_in_time"))


@dataclass
class LevelResult:
    n: int
    h: float
    l2: float
    linf: float
    ti_l2: float = math.nan
    ti_linf: float = math.nan
    meta: dict = field(default_factory=dict)


def pairwise_rates(h, e):
    """``log(e_i / e_{i+1}) / log(h_i / h_{i+1})``; ``None`` where undefined."""
    out = []
    for i in range(len(e) - 1):
        a, b = e[i], e[i + 1]
        if not (a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b)):
            out.append(None)
            continue
        out.append(math.log(a / b) / math.log(h[i] / h[i + 1]))
    return out


def lsq_slope(h, e):
    """Least-squares slope of ``log e`` against ``log h`` over the positive entries."""
    pts = [(math.log(a), math.log(b)) for a, b in zip(h, e) if b > 0 and math.isfinite(b)]
    if len(pts) < 2:
        return None
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    x = x - x.mean()
    return float(np.dot(x, y - y.mean()) / np.dot(x, x))


@dataclass
class ErrorReport:
    """Errors per refinement level plus fitted rates.

    ``headline`` names the metric the rate columns refer to when a single
    number is needed: ``"ti"`` for time-integrated errors, ``"final"`` for
    errors at the final time.
    """

    levels: list
    headline: str = "final"
    meta: dict = field(default_factory=dict)
    rates_l2: list = field(default_factory=list)
    rates_linf: list = field(default_factory=list)
    slope_l2: float | None = None
    slope_linf: float | None = None

    def __post_init__(self):
        hs = [lv.h for lv in self.levels]
        if any(b >= a for a, b in zip(hs, hs[1:])):
            raise ValueError("refinement levels must have strictly decreasing h")

    def series(self, which):
        if which == "l2":
            key = "ti_l2" if self.headline == "ti" else "l2"
        else:
            key = "ti_linf" if self.headline == "ti" else "linf"
        return [getattr(lv, key) for lv in self.levels]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k, v in sorted(self.meta.items()):
            buf.write(f"# {k}={v}\n")
        buf.write(",".join(CSV_COLUMNS) + "\n")
        for i, lv in enumerate(self.levels):
            r2 = self.rates_l2[i - 1] if i > 0 and self.rates_l2 else None
            ri = self.rates_linf[i - 1] if i > 0 and self.rates_linf else None
            row = [str(i), str(lv.n), _fmt(lv.h), _fmt(lv.l2), _fmt(lv.linf),
                   _fmt_rate(r2), _fmt_rate(ri), _fmt(lv.ti_l2), _fmt(lv.ti_linf)]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def table(self) -> str:
        """Human-readable rate table."""
        head = self.headline == "ti"
        lines = [f"{'n':>5} {'l2':>11} {'rate':>6} {'linf':>11} {'rate':>6}"
                 + ("   (time integrated)" if head else "   (final time)")]
        e2, ei = self.series("l2"), self.series("linf")
        for i, lv in enumerate(self.levels):
            r2 = _fmt_rate(self.rates_l2[i - 1]) if i > 0 else "-"
            ri = _fmt_rate(self.rates_linf[i - 1]) if i > 0 else "-"
            lines.append(f"{lv.n:>5} {e2[i]:11.3e} {r2:>6} {ei[i]:11.3e} {ri:>6}")
        if self.slope_l2 is not None:
            lines.append(f"least-squares slope: l2 {self.slope_l2:.2f}, linf {self.slope_linf:.2f}")
        return "\n".join(lines)


def _fmt(v):
    return "nan" if v is None or not math.isfinite(v) else f"{v:.10e}"


def _fmt_rate(r):
    return "" if r is None else f"{r:.4f}"


def fit_rates(report: ErrorReport) -> ErrorReport:
    """Fill in pairwise rates and least-squares slopes of the headline errors."""
    if len(report.levels) < 2:
        raise ValueError("rate fitting needs at least two levels")
    h = [lv.h for lv in report.levels]
    e2, ei = report.series("l2"), report.series("linf")
    report.rates_l2 = pairwise_rates(h, e2)
    report.rates_linf = pairwise_rates(h, ei)
    report.slope_l2 = lsq_slope(h, e2)
    report.slope_linf = lsq_slope(h, ei)
    return report


def gnuplot_script(csv_name: str, title: str, headline: str = "final") -> str:
    """Log-log plot of both headline errors against ``h``."""
    c2, ci = (8, 9) if headline == "ti" else (4, 5)
    return (
        "set datafile separator ','\n"
        "set logscale xy\n"
        "set key left top\n"
        "set xlabel 'h'\n"
        "set ylabel 'error'\n"
        f"set title '{title}'\n"
        f"plot '{csv_name}' using 3:{c2} with linespoints title 'l2', \\\n"
        f"     '{csv_name}' using 3:{ci} with linespoints title 'linf'\n"
    )
