"""Evolution of finitely many walkers in one shared environment.

Walkers at the same site at the same time take the same step, so coalescence
needs no bookkeeping: it falls out of the step being a pure function of the site.
The batched functions run one row of walkers per replica seed of the oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from gdnm.env import EnvOracle, Site
from gdnm.kernel import step_array

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike

# Boundary-effect guard for occupancy windows: L >= 8 sqrt(t)
DENSITY_GUARD = 8.0


class Censored(Enum):
    """Marker for stopping times beyond the simulated horizon."""

    CENSORED = "censored"

    def __repr__(self) -> str:
        return "CENSORED"


CENSORED = Censored.CENSORED


class PreconditionError(Exception):
    """Raised when an estimator is asked for a regime its guard excludes."""


@dataclass
class PathEnsemble:
    """Trajectories of a finite set of walkers started at a common time.

    positions[n, w] is the position of walker w after n steps; classes[n, w] is
    the smallest walker index sharing that position (its coalescence class).
    crossings holds (a, b, n): walkers a < b swap order between n and n + 1.
    """

    starts: list[Site]
    horizon: int
    positions: np.ndarray
    classes: np.ndarray
    crossings: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def t0(self) -> int:
        return self.starts[0].t

    @property
    def n_walkers(self) -> int:
        return len(self.starts)

    def site(self, walker: int, n: int) -> Site:
        return Site(int(self.positions[n, walker]), self.t0 + n)

    def class_count(self, n: int) -> int:
        return int(np.unique(self.classes[n]).size)

    def class_counts(self) -> np.ndarray:
        return np.array([self.class_count(n) for n in range(self.horizon + 1)])


@dataclass
class RescaledEnsemble:
    """Piecewise-linear images of the walker paths under (x, t) -> (delta x / sigma, delta^2 t)."""

    delta: float
    sigma: float
    times: np.ndarray
    values: np.ndarray

    def evaluate(self, walker: int, s: float | ArrayLike) -> float | np.ndarray:
        """Position of a rescaled path at real time s, linear between nodes."""
        s_arr = np.asarray(s, dtype=np.float64)
        lo, hi = self.times[0], self.times[-1]
        if np.any(s_arr < lo) or np.any(s_arr > hi):
            raise ValueError(f"time outside the rescaled path range [{lo:g}, {hi:g}]")
        out = np.interp(s_arr, self.times, self.values[:, walker])
        return float(out) if out.ndim == 0 else out


def _row_seeds(oracle: EnvOracle) -> np.ndarray:
    return np.atleast_1d(oracle.seeds)


def _advance(oracle: EnvOracle, x: np.ndarray, t: int, seeds: np.ndarray) -> np.ndarray:
    """One step for rows of walkers; row i lives in the environment of seeds[i]."""
    if x.size == 0:
        return x
    return step_array(oracle, x, t, seeds=seeds[:, None])


def _class_labels(row: np.ndarray) -> np.ndarray:
    _, first, inverse = np.unique(row, return_index=True, return_inverse=True)
    return first[inverse.ravel()]


def _check_paths(ensemble: PathEnsemble) -> None:
    """Coalescence is absorbing and the class count never grows."""
    pos, cls = ensemble.positions, ensemble.classes
    for n in range(ensemble.horizon):
        same = cls[n][:, None] == cls[n][None, :]
        if np.any(same & (pos[n + 1][:, None] != pos[n + 1][None, :])):
            raise AssertionError(f"coalesced walkers separated at step {n + 1}")
    counts = ensemble.class_counts()
    if np.any(np.diff(counts) > 0):
        raise AssertionError("class count increased")


def evolve(
    oracle: EnvOracle,
    starts: Sequence[Site],
    horizon: int,
    track_crossings: bool = True,
) -> PathEnsemble:
    """Run every walker for `horizon` steps in the oracle's environment."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if not starts:
        raise ValueError("at least one start site is required")
    if oracle.seeds.ndim != 0:
        raise ValueError("evolve needs a single-environment oracle; use oracle.replica(i)")
    t0 = starts[0].t
    if any(z.t != t0 for z in starts):
        raise ValueError("all walkers must start at the same time")

    positions = np.empty((horizon + 1, len(starts)), dtype=np.int64)
    positions[0] = [z.x for z in starts]
    classes = np.empty_like(positions)
    classes[0] = _class_labels(positions[0])
    crossings: list[tuple[int, int, int]] = []

    for n in range(horizon):
        # Step each occupied site once; walkers sharing a site share the result.
        sites, inverse = np.unique(positions[n], return_inverse=True)
        positions[n + 1] = step_array(oracle, sites, t0 + n)[inverse.ravel()]
        classes[n + 1] = _class_labels(positions[n + 1])
        if track_crossings and len(starts) > 1:
            before = positions[n][:, None] - positions[n][None, :]
            after = positions[n + 1][:, None] - positions[n + 1][None, :]
            a_idx, b_idx = np.nonzero(np.triu(before * after < 0, k=1))
            crossings.extend((int(a), int(b), n) for a, b in zip(a_idx, b_idx, strict=True))

    ensemble = PathEnsemble(
        starts=list(starts),
        horizon=horizon,
        positions=positions,
        classes=classes,
        crossings=crossings,
    )
    _check_paths(ensemble)
    return ensemble


def rescale(ensemble: PathEnsemble, delta: float, sigma: float) -> RescaledEnsemble:
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    nodes = ensemble.t0 + np.arange(ensemble.horizon + 1, dtype=np.float64)
    return RescaledEnsemble(
        delta=delta,
        sigma=sigma,
        times=delta * delta * nodes,
        values=delta * ensemble.positions.astype(np.float64) / sigma,
    )


# -- stopping times of the difference walk ------------------------------------


def _difference_walk(
    oracle: EnvOracle,
    k: int,
    horizon: int,
    level: float | None,
    stop_at_level: bool,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Meeting and level times of Y = X^k - X^0 per replica.

    Returns (tau, tau_censored, nu, nu_censored). Censored entries hold horizon + 1.
    A replica is retired once its walkers meet, or once Y reaches `level` when
    stop_at_level is set.
    """
    seeds = _row_seeds(oracle)
    n_rep = seeds.size
    tau = np.full(n_rep, horizon + 1, dtype=np.int64)
    nu = np.full(n_rep, horizon + 1, dtype=np.int64)
    tau_done = np.zeros(n_rep, dtype=bool)
    nu_done = np.zeros(n_rep, dtype=bool)

    x = np.zeros((n_rep, 2), dtype=np.int64)
    x[:, 1] = k
    if level is not None and k >= level:
        nu[:] = 0
        nu_done[:] = True
    active = np.ones(n_rep, dtype=bool)
    if stop_at_level:
        active &= ~nu_done

    for n in range(horizon):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        x[idx] = _advance(oracle, x[idx], n, seeds[idx])
        y = x[idx, 1] - x[idx, 0]

        met = idx[y == 0]
        tau[met] = n + 1
        tau_done[met] = True
        if level is not None:
            reached = idx[(y >= level) & ~nu_done[idx]]
            nu[reached] = n + 1
            nu_done[reached] = True

        active[met] = False
        if stop_at_level:
            active &= ~nu_done

    return tau, ~tau_done, nu, ~nu_done


def coalescence_times(oracle: EnvOracle, k: int, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """First meeting times of walkers from (0, 0) and (k, 0), one per replica seed.

    Returns (times, censored); censored replicas carry horizon + 1 so that
    `times > t` is the survival event for every t <= horizon.
    """
    if k == 0:
        raise ValueError("k must be nonzero")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    tau, tau_cens, _, _ = _difference_walk(oracle, k, horizon, None, stop_at_level=False)
    return tau, tau_cens


def coalescence_time(oracle: EnvOracle, k: int, horizon: int) -> int | Censored:
    times, censored = coalescence_times(oracle.replica(0), k, horizon)
    return CENSORED if censored[0] else int(times[0])


def exit_times_nu(
    oracle: EnvOracle, k: int, u: float, horizon: int
) -> tuple[np.ndarray, np.ndarray]:
    """First times the difference walk reaches at least u, one per replica seed."""
    if u <= 0:
        raise ValueError(f"u must be positive, got {u}")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    n_rep = _row_seeds(oracle).size
    if math.isinf(u):
        return np.full(n_rep, horizon + 1, dtype=np.int64), np.ones(n_rep, dtype=bool)
    _, _, nu, nu_cens = _difference_walk(oracle, k, horizon, u, stop_at_level=True)
    return nu, nu_cens


def exit_time_nu(oracle: EnvOracle, k: int, u: float, horizon: int) -> int | Censored:
    times, censored = exit_times_nu(oracle.replica(0), k, u, horizon)
    return CENSORED if censored[0] else int(times[0])


def escape_events(oracle: EnvOracle, k: int, level: float, horizon: int) -> np.ndarray:
    """Per replica: does Y reach `level` strictly before meeting and before `horizon`?"""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    tau, _, nu, nu_cens = _difference_walk(oracle, k, horizon, level, stop_at_level=True)
    return ~nu_cens & (nu < tau) & (nu < horizon)


def sign_change_times(oracle: EnvOracle, k: int, horizon: int) -> list[int]:
    """Times n + 1 at which the difference walk changes sign, up to its meeting time."""
    if k == 0:
        raise ValueError("k must be nonzero")
    single = oracle.replica(0)
    seeds = _row_seeds(single)
    x = np.array([[0, k]], dtype=np.int64)
    times: list[int] = []
    y_prev = k
    for n in range(horizon):
        x = _advance(single, x, n, seeds)
        y = int(x[0, 1] - x[0, 0])
        if y == 0:
            break
        if y * y_prev < 0:
            times.append(n + 1)
        y_prev = y
    return times


# -- set-valued evolution -----------------------------------------------------


def compact_rows(x: np.ndarray) -> np.ndarray:
    """Sort each row, move repeated values to the end and drop the common tail.

    Rows keep their distinct values; padding entries repeat values already present.
    """
    if x.ndim != 2 or x.size == 0:
        return x
    s = np.sort(x, axis=1)
    dup = np.zeros(s.shape, dtype=bool)
    dup[:, 1:] = s[:, 1:] == s[:, :-1]
    order = np.argsort(dup, axis=1, kind="stable")
    s = np.take_along_axis(s, order, axis=1)
    width = int((~dup).sum(axis=1).max())
    return s[:, :width]


def _distinct_in(x: np.ndarray, lo: float = -math.inf, hi: float = math.inf) -> np.ndarray:
    """Number of distinct values per row within [lo, hi]."""
    if x.size == 0:
        return np.zeros(x.shape[0], dtype=np.int64)
    s = np.sort(x, axis=1)
    first = np.ones(s.shape, dtype=bool)
    first[:, 1:] = s[:, 1:] != s[:, :-1]
    return (first & (s >= lo) & (s <= hi)).sum(axis=1)


def _evolve_sets(
    oracle: EnvOracle, start_x: np.ndarray, t0: int, steps: int
) -> np.ndarray:
    seeds = _row_seeds(oracle)
    x = np.broadcast_to(start_x, (seeds.size, start_x.size)).astype(np.int64)
    x = compact_rows(x)
    for n in range(steps):
        x = compact_rows(_advance(oracle, x, t0 + n, seeds))
    return x


def distinct_positions(
    oracle: EnvOracle,
    start_x: ArrayLike,
    t0: int,
    steps: int,
    lo: float = -math.inf,
    hi: float = math.inf,
) -> np.ndarray:
    """Per replica, the number of distinct positions in [lo, hi] after `steps` steps
    of walkers started at every x in start_x at time t0."""
    start = np.unique(np.asarray(start_x, dtype=np.int64))
    if start.size == 0:
        return np.zeros(_row_seeds(oracle).size, dtype=np.int64)
    return _distinct_in(_evolve_sets(oracle, start, t0, steps), lo, hi)


def _density_guard(size: int, t: int) -> None:
    if size < DENSITY_GUARD * math.sqrt(t):
        raise PreconditionError(
            f"window size {size} is below the boundary guard "
            f"8*sqrt(t) = {DENSITY_GUARD * math.sqrt(t):.1f}"
        )


def occupancy_curve(oracle: EnvOracle, size: int, t_grid: Sequence[int]) -> np.ndarray:
    """Occupied fraction of the central window [-size//2, size//2] at each t of the grid.

    Walkers start from every site of [-size, size] at time 0. Returns an array of shape
    (replicas, len(t_grid)).
    """
    if size < 1:
        raise ValueError(f"size must be >= 1, got {size}")
    if any(t < 0 for t in t_grid):
        raise ValueError("times must be nonnegative")
    for t in t_grid:
        _density_guard(size, t)

    seeds = _row_seeds(oracle)
    half = size // 2
    width = 2 * half + 1
    out = np.empty((seeds.size, len(t_grid)), dtype=np.float64)
    order = np.argsort(t_grid, kind="stable")

    x = np.broadcast_to(np.arange(-size, size + 1, dtype=np.int64), (seeds.size, 2 * size + 1))
    now = 0
    for j in order:
        target = int(t_grid[j])
        while now < target:
            x = compact_rows(_advance(oracle, x, now, seeds))
            now += 1
        out[:, j] = _distinct_in(x, -half, half) / width
    return out


def occupied_density(oracle: EnvOracle, size: int, t: int) -> float:
    curve = occupancy_curve(oracle.replica(0), size, [t])
    return float(curve[0, 0])


def box_exit_events(
    oracle: EnvOracle,
    half_width: int,
    birth_steps: int,
    bound: int,
    horizon: int,
) -> np.ndarray:
    """Per replica: does any path born on [-half_width, half_width] at a time in
    [0, birth_steps] leave [-bound, bound] before `horizon`?"""
    if bound < half_width:
        raise ValueError("the outer box must contain the birth segment")
    seeds = _row_seeds(oracle)
    births = np.arange(-half_width, half_width + 1, dtype=np.int64)
    exited = np.zeros(seeds.size, dtype=bool)
    live = np.arange(seeds.size)
    x = np.broadcast_to(births, (seeds.size, births.size)).copy()

    for n in range(horizon):
        if live.size == 0:
            break
        x = _advance(oracle, x, n, seeds[live])
        out = np.any(np.abs(x) > bound, axis=1)
        exited[live[out]] = True
        live, x = live[~out], x[~out]
        if n + 1 <= birth_steps:
            x = np.concatenate([x, np.broadcast_to(births, (live.size, births.size))], axis=1)
        x = compact_rows(x)
    return exited
