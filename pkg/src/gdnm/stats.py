"""Estimators and criterion checks built on the walker ensembles and exact kernel laws.

Every Monte Carlo estimator fans replicas out through `replicas.fan_out`; each
task rebuilds its oracle from the replica ids it receives, so results do not
depend on the worker count.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import partial
from typing import Any

import numpy as np
from scipy import stats as sps

from gdnm import embedding
from gdnm.config import ModelParams
from gdnm.ensemble import (
    box_exit_events,
    coalescence_times,
    distinct_positions,
    escape_events,
    occupancy_curve,
)
from gdnm.env import EnvOracle
from gdnm.kernel import (
    increment_pmf_closed_form,
    increment_pmf_enumerated,
    moments,
    pair_step_changes,
    pair_step_law,
    sample_increments,
    step_array,
)
from gdnm.replicas import fan_out

# Finite-delta slack on the (b - a) / sqrt(pi t) bound for the mean of eta-hat
ETA_HAT_SLACK = 0.15

# Level and times for the hitting-tail comparison; level 1 would hide the exponent mismatch
HIT_LEVEL = 2.0
HIT_TIMES = (1.0, 10.0, 100.0, 1000.0)

Progress = Callable[[int, int], None]


class ConditioningError(Exception):
    """Raised when a conditional probability is requested on an event of zero mass."""


@dataclass
class EstimateRow:
    grid: float
    estimate: float
    ci_low: float
    ci_high: float
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"row at {self.grid}: n must be >= 1")
        if not self.ci_low - 1e-12 <= self.estimate <= self.ci_high + 1e-12:
            raise ValueError(
                f"row at {self.grid}: estimate {self.estimate} outside "
                f"[{self.ci_low}, {self.ci_high}]"
            )


@dataclass
class EstimateSeries:
    """Rows of (grid, estimate, CI) plus named derived constants.

    `style` tells the plotter which reference curve belongs to the series.
    """

    name: str
    style: str
    rows: list[EstimateRow] = field(default_factory=list)
    derived: dict[str, Any] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)
    grid_label: str = "grid"

    @property
    def grid(self) -> np.ndarray:
        return np.array([r.grid for r in self.rows], dtype=np.float64)

    @property
    def estimates(self) -> np.ndarray:
        return np.array([r.estimate for r in self.rows], dtype=np.float64)

    def row(self, grid: float) -> EstimateRow:
        for r in self.rows:
            if r.grid == grid:
                return r
        raise KeyError(grid)


@dataclass
class EtaCount:
    """Histograms of eta (distinct classes of the segment's walkers) and eta-hat
    (distinct positions inside (a, b) among walkers of the widened window)."""

    t0: float
    t: float
    a: float
    b: float
    delta: float
    counts: dict[int, int]
    hat_counts: dict[int, int]

    @property
    def replicas(self) -> int:
        return sum(self.counts.values())

    def prob_at_least(self, j: int) -> float:
        return sum(c for v, c in self.counts.items() if v >= j) / self.replicas

    @property
    def mean(self) -> float:
        return sum(v * c for v, c in self.counts.items()) / self.replicas

    @property
    def hat_mean(self) -> float:
        return sum(v * c for v, c in self.hat_counts.items()) / self.replicas

    def hat_values(self) -> np.ndarray:
        return np.repeat(
            np.array(list(self.hat_counts), dtype=np.float64),
            list(self.hat_counts.values()),
        )


# -- interval helpers ---------------------------------------------------------


def _z(confidence: float) -> float:
    return float(sps.norm.ppf(1.0 - (1.0 - confidence) / 2.0))


def wilson_interval(successes: int, n: int, confidence: float = 0.99) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 <= successes <= n:
        raise ValueError(f"successes must lie in [0, {n}], got {successes}")
    z = _z(confidence)
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, min(center - half, phat)), min(1.0, max(center + half, phat))


def mean_interval(values: np.ndarray, confidence: float = 0.99) -> tuple[float, float, float]:
    """(mean, low, high) by the normal approximation."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("no values")
    mean = float(values.mean())
    if values.size == 1:
        return mean, mean, mean
    half = _z(confidence) * float(values.std(ddof=1)) / math.sqrt(values.size)
    return mean, mean - half, mean + half


def dkw_band(n: int, confidence: float = 0.99) -> float:
    """Half-width of the Dvoretzky-Kiefer-Wolfowitz band for an n-sample ECDF."""
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * n))


def _proportion_row(grid: float, hits: int, n: int, confidence: float) -> EstimateRow:
    lo, hi = wilson_interval(hits, n, confidence)
    return EstimateRow(grid, hits / n, lo, hi, n)


def _exact_row(grid: float, value: float, bound: float) -> EstimateRow:
    return EstimateRow(grid, value, max(0.0, value - bound), min(1.0, value + bound), 1)


def _run(
    task: Callable[[np.ndarray], Any],
    replicas: int,
    workers: int,
    chunk_size: int,
    progress: Progress | None,
) -> Any:
    return fan_out(task, replicas, workers=workers, chunk_size=chunk_size, on_chunk=progress)


def _sigma(params: ModelParams) -> float:
    return math.sqrt(increment_pmf_enumerated(params).sigma2)


# -- replica tasks (module level so they pickle) ------------------------------


def _coalescence_task(params: ModelParams, k: int, horizon: int, ids: np.ndarray) -> np.ndarray:
    times, _ = coalescence_times(EnvOracle.for_replicas(params, ids), k, horizon)
    return times


def _marginal_task(params: ModelParams, times: tuple[int, ...], ids: np.ndarray) -> np.ndarray:
    oracle = EnvOracle.for_replicas(params, ids)
    out = np.zeros((ids.size, len(times)), dtype=np.int64)
    x = np.zeros(ids.size, dtype=np.int64)
    seeds = np.atleast_1d(oracle.seeds)
    wanted = {t: j for j, t in enumerate(times)}
    for n in range(max(times) + 1):
        if n in wanted:
            out[:, wanted[n]] = x
        if n < max(times):
            x = step_array(oracle, x, n, seeds=seeds)
    return out


def _box_task(
    params: ModelParams, half: int, births: int, bound: int, horizon: int, ids: np.ndarray
) -> np.ndarray:
    return box_exit_events(EnvOracle.for_replicas(params, ids), half, births, bound, horizon)


def _eta_task(
    params: ModelParams,
    starts: tuple[int, int],
    hat_starts: tuple[int, int],
    hat_window: tuple[int, int],
    t0: int,
    steps: int,
    ids: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    oracle = EnvOracle.for_replicas(params, ids)
    eta = distinct_positions(oracle, np.arange(starts[0], starts[1] + 1), t0, steps)
    hat = distinct_positions(
        oracle, np.arange(hat_starts[0], hat_starts[1] + 1), t0, steps, *hat_window
    )
    return eta, hat


def _occupancy_task(
    params: ModelParams, size: int, t_grid: tuple[int, ...], ids: np.ndarray
) -> np.ndarray:
    return occupancy_curve(EnvOracle.for_replicas(params, ids), size, t_grid)


def _escape_task(
    params: ModelParams, k: int, level: float, horizon: int, ids: np.ndarray
) -> np.ndarray:
    return escape_events(EnvOracle.for_replicas(params, ids), k, level, horizon)


def _pair_change_task(params: ModelParams, m: int, ids: np.ndarray) -> np.ndarray:
    return pair_step_changes(EnvOracle.for_replicas(params, ids), m, ids.size)


def _increment_task(params: ModelParams, ids: np.ndarray) -> np.ndarray:
    return sample_increments(EnvOracle.for_replicas(params, ids), ids.size)


# -- estimators ---------------------------------------------------------------


def tail_curve(
    params: ModelParams,
    k: int,
    t_grid: Sequence[int],
    replicas: int,
    *,
    workers: int = 1,
    chunk_size: int = 256,
    confidence: float = 0.99,
    progress: Progress | None = None,
) -> EstimateSeries:
    """P(tau_k > t) over the grid; c_hat = max sqrt(t) P / |k|."""
    if k == 0:
        raise ValueError("k must be nonzero")
    if any(t < 0 for t in t_grid):
        raise ValueError("times must be nonnegative")
    horizon = max(1, max(t_grid))
    times = _run(
        partial(_coalescence_task, params, k, horizon), replicas, workers, chunk_size, progress
    )

    rows = [_proportion_row(t, int(np.sum(times > t)), replicas, confidence) for t in t_grid]
    scaled = [math.sqrt(r.grid) * r.estimate for r in rows if r.grid > 0]
    positive = [s for s in scaled if s > 0]
    derived = {
        "c_hat": max(scaled) / abs(k) if scaled else 0.0,
        "flatness": max(positive) / min(positive) if positive else math.inf,
        "scaled": scaled,
    }
    return EstimateSeries(
        name="tail",
        style="tail",
        rows=rows,
        derived=derived,
        meta={"k": k, "horizon": horizon},
        grid_label="t",
    )


def pair_meeting_cdf(
    params: ModelParams,
    d: float,
    t_grid: Sequence[float],
    n: int,
    replicas: int,
    *,
    workers: int = 1,
    chunk_size: int = 256,
    confidence: float = 0.99,
    progress: Progress | None = None,
) -> EstimateSeries:
    """P(walkers from (0, 0) and (floor(d n), 0) meet by t n^2), on common replicas.

    The reference 2 Phi(-d / (sigma sqrt(2t))) uses sigma from the exact increment law.
    """
    if d < 0 or n < 1:
        raise ValueError("need d >= 0 and n >= 1")
    if any(t <= 0 for t in t_grid):
        raise ValueError("times must be positive")
    sigma = _sigma(params)
    k = max(1, math.floor(d * n))
    steps = [math.ceil(t * n * n) for t in t_grid]
    horizon = max(steps)
    times = _run(
        partial(_coalescence_task, params, k, horizon), replicas, workers, chunk_size, progress
    )

    rows = [
        _proportion_row(t, int(np.sum(times <= s)), replicas, confidence)
        for t, s in zip(t_grid, steps, strict=True)
    ]
    reference = [2.0 * float(sps.norm.cdf(-d / (sigma * math.sqrt(2.0 * t)))) for t in t_grid]
    errors = [abs(r.estimate - ref) for r, ref in zip(rows, reference, strict=True)]
    return EstimateSeries(
        name="pair",
        style="pair",
        rows=rows,
        derived={"sigma": sigma, "reference": reference, "max_abs_error": max(errors)},
        meta={"d": d, "n": n, "k": k, "horizon": horizon},
        grid_label="t",
    )


def _ks_distance(sample: np.ndarray, s: float) -> float:
    if s <= 0:
        # Point mass at 0: the ECDF jump is the only discrepancy.
        return float(max(np.mean(sample < 0), np.mean(sample > 0)))
    return float(sps.kstest(sample, "norm", args=(0.0, math.sqrt(s))).statistic)


def joint_marginal_check(
    params: ModelParams,
    n: int,
    s_grid: Sequence[float],
    replicas: int,
    *,
    workers: int = 1,
    chunk_size: int = 256,
    confidence: float = 0.99,
    progress: Progress | None = None,
) -> EstimateSeries:
    """KS distance between X_{floor(s n^2)} / (sigma n) and N(0, s) per s."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if any(s < 0 for s in s_grid):
        raise ValueError("s must be nonnegative")
    sigma = _sigma(params)
    steps = tuple(math.floor(s * n * n) for s in s_grid)
    positions = _run(
        partial(_marginal_task, params, steps), replicas, workers, chunk_size, progress
    )

    band = dkw_band(replicas, confidence)
    rows: list[EstimateRow] = []
    ratios: list[float] = []
    for j, (s, m) in enumerate(zip(s_grid, steps, strict=True)):
        x = positions[:, j].astype(np.float64)
        dist = _ks_distance(x / (sigma * n), s)
        rows.append(EstimateRow(s, dist, max(0.0, dist - band), min(1.0, dist + band), replicas))
        ratios.append(float(x.var()) / (sigma * sigma * m) if m > 0 else math.nan)
    return EstimateSeries(
        name="donsker",
        style="donsker",
        rows=rows,
        derived={"sigma": sigma, "variance_ratio": ratios, "dkw_band": band},
        meta={"n": n, "steps": list(steps)},
        grid_label="s",
    )


def box_exit_prob(
    params: ModelParams,
    u: float,
    t_grid: Sequence[float],
    c_box: float,
    delta: float,
    replicas: int,
    *,
    workers: int = 1,
    chunk_size: int = 256,
    confidence: float = 0.99,
    progress: Progress | None = None,
) -> EstimateSeries:
    """P(some path born in R(u, t) leaves R(c_box u, 2t) through a side), per t.

    Paths are born at every lattice site of the rescaled segment [-u, u] at each
    lattice time up to t / delta^2.
    """
    if c_box <= 1:
        raise ValueError(f"c_box must exceed 1, got {c_box}")
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if u <= 0 or any(t <= 0 for t in t_grid):
        raise ValueError("u and t must be positive")
    sigma = _sigma(params)
    half = math.floor(u * sigma / delta)
    bound = math.floor(c_box * u * sigma / delta)

    rows: list[EstimateRow] = []
    for t in t_grid:
        births = math.floor(t / delta**2)
        horizon = max(1, math.floor(2 * t / delta**2))
        exited = _run(
            partial(_box_task, params, half, births, bound, horizon),
            replicas,
            workers,
            chunk_size,
            progress,
        )
        rows.append(_proportion_row(t, int(exited.sum()), replicas, confidence))

    ratio = [r.estimate / r.grid for r in rows]
    by_t = [ratio[i] for i in np.argsort([r.grid for r in rows])]
    return EstimateSeries(
        name="boxexit",
        style="boxexit",
        rows=rows,
        derived={
            "ratio": ratio,
            "ratio_decreasing_as_t_shrinks": bool(np.all(np.diff(by_t) >= 0)),
        },
        meta={"u": u, "c_box": c_box, "delta": delta, "half_width": half, "bound": bound},
        grid_label="t",
    )


def eta_counts(
    params: ModelParams,
    delta: float,
    t0: float,
    t: float,
    a: float,
    b: float,
    replicas: int,
    *,
    margin: float = 4.0,
    workers: int = 1,
    chunk_size: int = 256,
    progress: Progress | None = None,
) -> EtaCount:
    """Distinct-class counts at rescaled time t0 + t.

    eta starts a walker at every lattice site of [a, b]; eta-hat starts them on
    [a - margin sqrt(t), b + margin sqrt(t)] and counts distinct positions in (a, b).
    """
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    if b <= a:
        raise ValueError("need b > a")
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    sigma = _sigma(params)
    scale = sigma / delta
    start_row = round(t0 / delta**2)
    steps = max(1, round(t / delta**2))

    starts = (math.ceil(a * scale), math.floor(b * scale))
    reach = margin * math.sqrt(t)
    hat_starts = (math.ceil((a - reach) * scale), math.floor((b + reach) * scale))
    hat_window = (math.floor(a * scale) + 1, math.ceil(b * scale) - 1)

    eta, hat = _run(
        partial(_eta_task, params, starts, hat_starts, hat_window, start_row, steps),
        replicas,
        workers,
        chunk_size,
        progress,
    )
    values, counts = np.unique(eta, return_counts=True)
    hat_values, hat_counts = np.unique(hat, return_counts=True)
    return EtaCount(
        t0=t0,
        t=t,
        a=a,
        b=b,
        delta=delta,
        counts={int(v): int(c) for v, c in zip(values, counts, strict=True)},
        hat_counts={int(v): int(c) for v, c in zip(hat_values, hat_counts, strict=True)},
    )


def eta_trend(
    params: ModelParams,
    delta: float,
    t0: float,
    t: float,
    a: float,
    eps_grid: Sequence[float],
    replicas: int,
    *,
    workers: int = 1,
    chunk_size: int = 256,
    confidence: float = 0.99,
    progress: Progress | None = None,
) -> EstimateSeries:
    """P(eta >= 2) for segments [a, a + eps] over the eps grid."""
    rows: list[EstimateRow] = []
    for eps in eps_grid:
        count = eta_counts(
            params,
            delta,
            t0,
            t,
            a,
            a + eps,
            replicas,
            workers=workers,
            chunk_size=chunk_size,
            progress=progress,
        )
        hits = sum(c for v, c in count.counts.items() if v >= 2)
        rows.append(_proportion_row(eps, hits, replicas, confidence))

    ordered = [rows[i].estimate for i in np.argsort([r.grid for r in rows])]
    return EstimateSeries(
        name="eta",
        style="eta",
        rows=rows,
        derived={"monotone_in_eps": bool(np.all(np.diff(ordered) >= 0))},
        meta={"delta": delta, "t0": t0, "t": t, "a": a, "start_set": "born_on_segment"},
        grid_label="eps",
    )


def eta_hat_curve(
    params: ModelParams,
    t0: float,
    t: float,
    a: float,
    width: float,
    delta_grid: Sequence[float],
    replicas: int,
    *,
    margin: float = 4.0,
    workers: int = 1,
    chunk_size: int = 256,
    confidence: float = 0.99,
    progress: Progress | None = None,
) -> EstimateSeries:
    """Mean eta-hat on (a, a + width) per delta against (b - a) / sqrt(pi t)."""
    bound = width / math.sqrt(math.pi * t)
    rows: list[EstimateRow] = []
    for delta in delta_grid:
        count = eta_counts(
            params,
            delta,
            t0,
            t,
            a,
            a + width,
            replicas,
            margin=margin,
            workers=workers,
            chunk_size=chunk_size,
            progress=progress,
        )
        mean, lo, hi = mean_interval(count.hat_values(), confidence)
        rows.append(EstimateRow(delta, mean, lo, hi, replicas))

    finest = min(rows, key=lambda r: r.grid)
    return EstimateSeries(
        name="eta-hat",
        style="eta_hat",
        rows=rows,
        derived={
            "bound": bound,
            "slack": ETA_HAT_SLACK,
            "within_slack": finest.estimate <= bound * (1.0 + ETA_HAT_SLACK),
        },
        meta={"t0": t0, "t": t, "a": a, "b": a + width},
        grid_label="delta",
    )


def crossing_coalesce_prob(
    params: ModelParams,
    m_grid: Sequence[int],
    method: str = "exact",
    replicas: int = 1000,
    *,
    workers: int = 1,
    chunk_size: int = 256,
    confidence: float = 0.99,
    progress: Progress | None = None,
) -> EstimateSeries:
    """P(Z^m_1 = Z^0_1 | Z^m_1 <= Z^0_1) per m, with the infimum over the grid."""
    if any(m < 1 for m in m_grid):
        raise ValueError("separations must be >= 1")
    rows: list[EstimateRow] = []
    for m in m_grid:
        if method == "exact":
            law = pair_step_law(params, m)
            meet = law.p_meet
            cond = law.p_cross_or_meet
            tb = law.truncation_bound
            if cond <= tb:
                raise ConditioningError(
                    f"P(cross or meet) = {cond:.3g} at m = {m} is within truncation {tb:.3g}"
                )
            value = meet / cond
            lo = max(0.0, (meet - tb) / (cond + tb))
            hi = min(1.0, (meet + tb) / (cond - tb))
            rows.append(EstimateRow(m, value, min(lo, value), max(hi, value), 1))
        elif method == "mc":
            change = _run(
                partial(_pair_change_task, params, m), replicas, workers, chunk_size, progress
            )
            cond = int(np.sum(change <= -m))
            if cond == 0:
                raise ConditioningError(f"no crossing or meeting observed at m = {m}")
            rows.append(_proportion_row(m, int(np.sum(change == -m)), cond, confidence))
        else:
            raise ValueError(f"unknown method {method!r}; expected 'exact' or 'mc'")

    worst = min(rows, key=lambda r: r.estimate)
    return EstimateSeries(
        name="crossing",
        style="crossing",
        rows=rows,
        derived={
            "inf": worst.estimate,
            "argmin": worst.grid,
            "inf_ci_low": worst.ci_low,
            "positive": worst.ci_low > 0,
        },
        meta={"method": method},
        grid_label="m",
    )


def p00_bounds(params: ModelParams) -> tuple[float, float]:
    """(lower, upper) bracket for sup_m P(separation unchanged), r = min support of q."""
    p = params.p
    r = params.min_rank
    qr = params.q[r]
    lower = min(0.5 * qr**2 * p ** (2.5 * r), 0.25 * qr**2 * p ** (2 * r))
    upper = 1.0 - 0.5 * qr**2 * p ** (3 * r)
    return lower, upper


def p00_curve(params: ModelParams, m_grid: Sequence[int]) -> EstimateSeries:
    """P(Z^m_1 - Z^0_1 = m) per m by exact enumeration."""
    if any(m < 1 for m in m_grid):
        raise ValueError("separations must be >= 1")
    rows = []
    for m in m_grid:
        law = pair_step_law(params, m)
        rows.append(_exact_row(m, law.p_unchanged, law.truncation_bound))

    best = max(rows, key=lambda r: r.estimate)
    lower, upper = p00_bounds(params)
    return EstimateSeries(
        name="p00",
        style="p00",
        rows=rows,
        derived={
            "sup": best.estimate,
            "argmax": best.grid,
            "lower_bound": lower,
            "upper_bound": upper,
            "within_bracket": lower <= best.estimate <= upper,
        },
        grid_label="m",
    )


def density_curve(
    params: ModelParams,
    t_grid: Sequence[int],
    replicas: int,
    *,
    guard: float = 1.0,
    workers: int = 1,
    chunk_size: int = 256,
    confidence: float = 0.99,
    progress: Progress | None = None,
) -> EstimateSeries:
    """Occupied density of the central window per t, with sqrt(t) flatness."""
    if guard < 1:
        raise ValueError(f"guard must be >= 1, got {guard}")
    size = max(1, math.ceil(8.0 * guard * math.sqrt(max(t_grid))))
    dens = _run(
        partial(_occupancy_task, params, size, tuple(int(t) for t in t_grid)),
        replicas,
        workers,
        chunk_size,
        progress,
    )
    rows = []
    for j, t in enumerate(t_grid):
        mean, lo, hi = mean_interval(dens[:, j], confidence)
        rows.append(EstimateRow(t, mean, max(0.0, lo), min(1.0, hi), replicas))
    scaled = [math.sqrt(r.grid) * r.estimate for r in rows if r.grid > 0]
    return EstimateSeries(
        name="density",
        style="density",
        rows=rows,
        derived={
            "scaled": scaled,
            "flatness": max(scaled) / min(scaled) if scaled and min(scaled) > 0 else math.inf,
        },
        meta={"L": size},
        grid_label="t",
    )


def escape_curve(
    params: ModelParams,
    k: int,
    u: float,
    t: float,
    delta_grid: Sequence[float],
    replicas: int,
    *,
    workers: int = 1,
    chunk_size: int = 256,
    confidence: float = 0.99,
    progress: Progress | None = None,
) -> EstimateSeries:
    """P(nu_k(u / delta) < tau_k and t / delta^2) per delta, with the log-log slope."""
    if any(not 0 < d <= 1 for d in delta_grid):
        raise ValueError("delta values must lie in (0, 1]")
    rows = []
    for delta in delta_grid:
        horizon = max(1, math.floor(t / delta**2))
        hits = _run(
            partial(_escape_task, params, k, u / delta, horizon),
            replicas,
            workers,
            chunk_size,
            progress,
        )
        rows.append(_proportion_row(delta, int(hits.sum()), replicas, confidence))

    slope = math.nan
    if len(rows) > 1 and all(r.estimate > 0 for r in rows):
        log_delta = np.log([r.grid for r in rows])
        log_prob = np.log([r.estimate for r in rows])
        slope = float(np.polyfit(log_delta, log_prob, 1)[0])
    return EstimateSeries(
        name="escape",
        style="escape",
        rows=rows,
        derived={"slope": slope},
        meta={"k": k, "u": u, "t": t},
        grid_label="delta",
    )


def increment_table(
    params: ModelParams, window: int | None = None, zmax: int = 12
) -> EstimateSeries:
    """Exact displacement law with the printed closed form alongside."""
    law = increment_pmf_enumerated(params, window)
    printed = increment_pmf_closed_form(params, zmax)
    rows = [
        _exact_row(z, law.prob(z), law.truncation_bound) for z in range(-zmax, zmax + 1)
    ]
    gaps = [abs(law.prob(z) - printed.prob(z)) for z in range(-zmax, zmax + 1)]
    return EstimateSeries(
        name="increment",
        style="increment",
        rows=rows,
        derived={
            "sigma2": law.sigma2,
            "truncation_bound": law.truncation_bound,
            "abs_moments": [[m, v, b] for m, v, b in moments(law, range(1, 6))],
            "closed_form": [printed.prob(z) for z in range(-zmax, zmax + 1)],
            "closed_form_max_gap": max(gaps),
        },
        meta={"window": law.window},
        grid_label="z",
    )


def increment_frequencies(
    params: ModelParams,
    zmax: int,
    samples: int,
    *,
    workers: int = 1,
    chunk_size: int = 256,
    confidence: float = 0.99,
    progress: Progress | None = None,
) -> EstimateSeries:
    """Monte Carlo one-step frequencies, one independent environment per sample."""
    draws = _run(partial(_increment_task, params), samples, workers, chunk_size, progress)
    law = increment_pmf_enumerated(params)
    rows = [
        _proportion_row(z, int(np.sum(draws == z)), samples, confidence)
        for z in range(-zmax, zmax + 1)
    ]
    # 3-sigma binomial band around the exact value
    inside = [
        abs(r.estimate - law.prob(int(r.grid)))
        <= 3.0 * math.sqrt(law.prob(int(r.grid)) * (1 - law.prob(int(r.grid))) / samples)
        for r in rows
        if law.prob(int(r.grid)) > 1e-4
    ]
    return EstimateSeries(
        name="increment-mc",
        style="increment",
        rows=rows,
        derived={"within_3sigma": all(inside), "variance": float(draws.var())},
        grid_label="z",
    )


def embedding_check(
    pmf: dict[int, float],
    intervals: Sequence[Sequence[float]],
    draws: int,
    rng: np.random.Generator,
    accuracy: float = 1e-10,
) -> EstimateSeries:
    """Mean exit time per interval against -uv, plus pair-law and embedding checks for pmf."""
    rows = []
    errors = []
    for j, (u, v) in enumerate(intervals):
        sample = embedding.exit_time_sample(u, v, rng, accuracy, size=draws)
        mean, lo, hi = mean_interval(sample, 0.997)
        rows.append(EstimateRow(j, mean, lo, hi, draws))
        errors.append((mean + u * v) / (float(sample.std(ddof=1)) / math.sqrt(draws)))

    law = embedding.skorohod_pair_law(pmf)
    pushed = law.pushforward()
    push_error = max(abs(pushed.get(z, 0.0) - w) for z, w in pmf.items())
    out = embedding.embed_one_step(pmf, rng, size=draws)
    values, counts = np.unique(out, return_counts=True)
    freq = dict(zip(values.tolist(), (counts / draws).tolist(), strict=True))
    support = set(pmf) | set(freq)
    tv = 0.5 * sum(abs(freq.get(z, 0.0) - pmf.get(z, 0.0)) for z in support)
    closed = [embedding.bm_level_hit_tail(HIT_LEVEL, x) for x in HIT_TIMES]
    return EstimateSeries(
        name="embed",
        style="embed",
        rows=rows,
        derived={
            "expected": [-u * v for u, v in intervals],
            "z_scores": errors,
            "pushforward_error": push_error,
            "tv_distance": tv,
            "zero_atom": law.zero_atom,
            "level_hit": {
                "level": HIT_LEVEL,
                "x": list(HIT_TIMES),
                "closed_form": closed,
                "scaled": [c * math.sqrt(x) for c, x in zip(closed, HIT_TIMES, strict=True)],
                "standard": [
                    embedding.hitting_tail_quadrature(HIT_LEVEL, x, "standard")[0]
                    for x in HIT_TIMES
                ],
                "printed": [
                    embedding.hitting_tail_quadrature(HIT_LEVEL, x, "printed")[0]
                    for x in HIT_TIMES
                ],
            },
        },
        meta={"intervals": [list(iv) for iv in intervals], "accuracy": accuracy},
        grid_label="interval",
    )
