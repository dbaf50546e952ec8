"""SVG rendering of estimate series with CI whiskers and analytic reference curves."""

from __future__ import annotations

import io
from typing import TYPE_CHECKING

import matplotlib
import numpy as np
from matplotlib.figure import Figure
from scipy.stats import norm

if TYPE_CHECKING:
    from matplotlib.axes import Axes

    from gdnm.stats import EstimateSeries

# Fixed salt and no date stamp keep the SVG bytes identical across runs.
_SVG_RC = {"svg.hashsalt": "gdnm", "svg.fonttype": "none"}


def is_dyadic(grid: np.ndarray) -> bool:
    """Positive grid whose sorted values step by powers of two."""
    values = np.unique(grid)
    if values.size < 2 or np.any(values <= 0):
        return False
    steps = np.log2(values[1:] / values[:-1])
    return bool(np.allclose(steps, np.round(steps)) and np.all(np.round(steps) >= 1))


def _dense(grid: np.ndarray, log: bool) -> np.ndarray:
    lo, hi = float(grid.min()), float(grid.max())
    if lo == hi:
        lo, hi = (lo / 2, hi * 2) if lo > 0 else (lo - 1, hi + 1)
    if log and lo > 0:
        return np.geomspace(lo, hi, 200)
    return np.linspace(lo, hi, 200)


def _anchored_power(
    ax: Axes, series: EstimateSeries, xs: np.ndarray, power: float, label: str
) -> None:
    first = next((r for r in series.rows if r.grid > 0 and r.estimate > 0), None)
    if first is None:
        return
    c = first.estimate / first.grid**power
    ax.plot(xs, c * xs**power, "--", color="gray", label=label)


def _reference(ax: Axes, series: EstimateSeries, style: str, log: bool) -> None:
    xs = _dense(series.grid, log)
    if style in ("tail", "density"):
        _anchored_power(ax, series, xs[xs > 0], -0.5, "c / sqrt(t)")
    elif style == "escape":
        _anchored_power(ax, series, xs[xs > 0], 1.0, "c delta")
    elif style == "pair":
        d, sigma = series.meta["d"], series.derived["sigma"]
        ts = xs[xs > 0]
        ref = 2.0 * norm.cdf(-d / (sigma * np.sqrt(2.0 * ts)))
        ax.plot(ts, ref, "--", color="gray", label="2 Phi(-d / (sigma sqrt(2t)))")
    elif style == "eta_hat":
        ax.axhline(series.derived["bound"], ls="--", color="gray", label="(b - a) / sqrt(pi t)")
    elif style == "p00":
        ax.axhline(series.derived["lower_bound"], ls=":", color="gray", label="bracket")
        ax.axhline(series.derived["upper_bound"], ls=":", color="gray")
    elif style == "increment" and "closed_form" in series.derived:
        ax.plot(series.grid, series.derived["closed_form"], "x", color="gray", label="closed form")
    elif style == "embed":
        ax.plot(series.grid, series.derived["expected"], "x", color="gray", label="-uv")


def plot(series: EstimateSeries, style: str | None = None) -> str:
    """Self-contained SVG document for the series."""
    if not series.rows:
        raise ValueError("cannot plot an empty series")
    style = style or series.style
    grid = series.grid
    est = series.estimates
    lo = np.array([r.ci_low for r in series.rows])
    hi = np.array([r.ci_high for r in series.rows])
    log = is_dyadic(grid)

    fig = Figure(figsize=(6.0, 4.0))
    ax = fig.add_subplot()
    whiskers = np.clip([est - lo, hi - est], 0.0, None)
    ax.errorbar(grid, est, yerr=whiskers, fmt="o", capsize=3, label=series.name)
    _reference(ax, series, style, log)
    if log:
        ax.set_xscale("log", base=2)
    ax.set_xlabel(series.grid_label)
    ax.set_ylabel("estimate")
    ax.set_title(series.name)
    ax.legend(loc="best", fontsize="small")
    ax.grid(True, alpha=0.3)

    buf = io.StringIO()
    with matplotlib.rc_context(_SVG_RC):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()
