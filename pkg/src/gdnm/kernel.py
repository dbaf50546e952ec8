"""One-step dynamics: the k-th closest open site above, the walker step, and exact one-step laws."""

from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass, field
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import comb
from scipy.stats import binom

from gdnm.env import EnvOracle, Site

if TYPE_CHECKING:
    from numpy.typing import ArrayLike

    from gdnm.config import ModelParams

LEFT_FIRST = 0
RIGHT_FIRST = 1

# Residual mass targets
_STEP_START_RESIDUAL = 1e-3
_SCAN_LIMIT_RESIDUAL = 1e-12
_SCAN_LIMIT_FACTOR = 4
_ENUMERATION_RESIDUAL = 1e-10
_DEFAULT_WINDOW_RESIDUAL = 1e-13
_PAIR_WINDOW_RESIDUAL = 1e-15

_MAX_RADIUS_SEARCH = 2**40


class ScanLimitError(Exception):
    """Raised when no k-th open site exists within the maximum scan radius."""


class WindowTooSmallError(Exception):
    """Raised when an enumeration window leaves too much probability mass outside."""


@dataclass
class IncrementLaw:
    """Symmetric law of the one-step displacement."""

    pmf: dict[int, float]
    truncation_bound: float
    sigma2: float
    abs_moments: list[tuple[int, float]] = field(default_factory=list)
    window: int = 0
    source: str = "enumerated"

    def prob(self, z: int) -> float:
        return self.pmf.get(int(z), 0.0)

    @property
    def total_mass(self) -> float:
        return math.fsum(self.pmf.values())

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        support = np.array(sorted(self.pmf), dtype=np.int64)
        return support, np.array([self.pmf[int(z)] for z in support], dtype=np.float64)


@dataclass
class PairStepLaw:
    """Law of the change in separation of two walkers started m apart, after one step."""

    m: int
    pmf: dict[int, float]
    truncation_bound: float
    window: int

    @property
    def p_unchanged(self) -> float:
        return self.pmf.get(0, 0.0)

    @property
    def p_meet(self) -> float:
        return self.pmf.get(-self.m, 0.0)

    @property
    def p_cross_or_meet(self) -> float:
        return math.fsum(v for d, v in self.pmf.items() if d <= -self.m)

    def separation_pmf(self) -> dict[int, float]:
        return {self.m + d: v for d, v in self.pmf.items()}


# -- windows ------------------------------------------------------------------


def residual_mass(p: float, ranks: Iterable[int], probs: Iterable[float], radius: int) -> float:
    """Probability that fewer than zeta open sites lie within distance `radius`."""
    n = 2 * radius + 1
    return math.fsum(w * float(binom.cdf(k - 1, n, p)) for k, w in zip(ranks, probs, strict=True))


@lru_cache(maxsize=256)
def _scan_radius(p: float, ranks: tuple[int, ...], probs: tuple[float, ...], tol: float) -> int:
    if residual_mass(p, ranks, probs, 0) < tol:
        return 0
    hi = 1
    while residual_mass(p, ranks, probs, hi) >= tol:
        hi *= 2
        if hi > _MAX_RADIUS_SEARCH:
            raise ScanLimitError(f"no radius reaches residual mass {tol:g} (p = {p:g})")
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if residual_mass(p, ranks, probs, mid) < tol:
            hi = mid
        else:
            lo = mid
    return hi


def scan_radius(params: ModelParams, tol: float) -> int:
    """Smallest radius whose residual mass is below `tol`."""
    return _scan_radius(params.p, tuple(params.q), tuple(params.q.values()), tol)


def max_scan_radius(params: ModelParams) -> int:
    return _SCAN_LIMIT_FACTOR * max(scan_radius(params, _SCAN_LIMIT_RESIDUAL), 1)


def _max_radius_for_rank(p: float, k: int) -> int:
    return _SCAN_LIMIT_FACTOR * max(_scan_radius(p, (k,), (1.0,), _SCAN_LIMIT_RESIDUAL), 1)


# -- orderings ----------------------------------------------------------------


@lru_cache(maxsize=64)
def _orders(radius: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Window offsets listed in the left-first and right-first distance orders."""
    offsets = np.arange(-radius, radius + 1, dtype=np.int64)
    dist = 2 * np.abs(offsets)
    left = offsets[np.argsort(dist + (offsets > 0), kind="stable")]
    right = offsets[np.argsort(dist + (offsets < 0), kind="stable")]
    return offsets, left, right


def kth_open_offset(open_offsets: Iterable[int], k: int, side: int) -> int:
    """k-th element of the open offsets in the order picked by `side`.

    side 0: distance ascending, left before right at equal distance.
    side 1: distance ascending, right before left.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    tiebreak = (lambda d: d > 0) if side == LEFT_FIRST else (lambda d: d < 0)
    ordered = sorted(set(open_offsets), key=lambda d: (abs(d), tiebreak(d)))
    if len(ordered) < k:
        raise ScanLimitError(f"only {len(ordered)} open sites given, rank {k} requested")
    return ordered[k - 1]


def _kth_offsets(
    oracle: EnvOracle,
    x: np.ndarray,
    t: np.ndarray,
    seeds: np.ndarray,
    k: np.ndarray,
    radius: int,
    max_radius: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Rank-k offsets in both side orders for flat arrays of walkers."""
    n = x.shape[0]
    d_left = np.zeros(n, dtype=np.int64)
    d_right = np.zeros(n, dtype=np.int64)
    pending = np.arange(n)
    radius = max(1, min(radius, max_radius))

    while pending.size:
        offsets, left, right = _orders(radius)
        sites = x[pending, None] + offsets
        open_ = oracle.omega(sites, t[pending, None] + 1, seeds=seeds[pending, None])
        kk = k[pending, None]
        cum_left = np.cumsum(open_[:, left + radius], axis=1)
        cum_right = np.cumsum(open_[:, right + radius], axis=1)
        done = cum_left[:, -1] >= kk[:, 0]

        resolved = pending[done]
        d_left[resolved] = left[np.argmax(cum_left[done] >= kk[done], axis=1)]
        d_right[resolved] = right[np.argmax(cum_right[done] >= kk[done], axis=1)]
        pending = pending[~done]

        if pending.size and radius >= max_radius:
            raise ScanLimitError(
                f"{pending.size} walker(s) found no rank-{int(k[pending].max())} open site "
                f"within radius {max_radius}"
            )
        radius = min(2 * radius, max_radius)

    return d_left, d_right


def _flat_inputs(
    oracle: EnvOracle, x: ArrayLike, t: ArrayLike, seeds: ArrayLike | None
) -> tuple[np.ndarray, np.ndarray, np.ndarray, tuple[int, ...]]:
    x = np.asarray(x, dtype=np.int64)
    shape = np.broadcast_shapes(x.shape, np.shape(t))
    if seeds is None:
        seeds = oracle.seed_grid(shape)
    shape = np.broadcast_shapes(shape, np.shape(seeds))
    flat_x = np.broadcast_to(x, shape).ravel()
    flat_t = np.broadcast_to(np.asarray(t, dtype=np.int64), shape).ravel()
    flat_s = np.broadcast_to(np.asarray(seeds, dtype=np.uint64), shape).ravel()
    return flat_x, flat_t, flat_s, shape


def step_array(
    oracle: EnvOracle,
    x: ArrayLike,
    t: ArrayLike,
    seeds: ArrayLike | None = None,
    max_radius: int | None = None,
) -> np.ndarray:
    """Next positions (row t + 1) of walkers at positions x in row t.

    Seeds default to the oracle's, replicas along the leading axis of x.
    """
    flat_x, flat_t, flat_s, shape = _flat_inputs(oracle, x, t, seeds)
    if flat_x.size == 0:
        return np.zeros(shape, dtype=np.int64)

    params = oracle.params
    k = oracle.zeta(flat_x, flat_t, seeds=flat_s)
    side = oracle.theta(flat_x, flat_t, seeds=flat_s)
    limit = max_radius if max_radius is not None else max_scan_radius(params)
    start = scan_radius(params, _STEP_START_RESIDUAL)

    d_left, d_right = _kth_offsets(oracle, flat_x, flat_t, flat_s, k, start, limit)
    disp = np.where(side == RIGHT_FIRST, d_right, d_left)
    return (flat_x + disp).reshape(shape)


def kth_open_above(
    oracle: EnvOracle, z: Site, k: int, side: int, max_radius: int | None = None
) -> Site:
    """The k-th closest open site in the row above z, ties ordered by `side`."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    limit = max_radius if max_radius is not None else _max_radius_for_rank(oracle.params.p, k)
    seeds = oracle.seed_grid((1,))
    d_left, d_right = _kth_offsets(
        oracle,
        np.array([z.x], dtype=np.int64),
        np.array([z.t], dtype=np.int64),
        np.asarray(seeds, dtype=np.uint64),
        np.array([k], dtype=np.int64),
        k,
        limit,
    )
    disp = d_right[0] if side == RIGHT_FIRST else d_left[0]
    return Site(z.x + int(disp), z.t + 1)


def step(oracle: EnvOracle, z: Site, max_radius: int | None = None) -> Site:
    """One walker step from z: rank zeta(z), ties resolved by theta(z)."""
    nxt = step_array(oracle, np.array([z.x]), np.array([z.t]), max_radius=max_radius)
    return Site(int(nxt[0]), z.t + 1)


def sample_increments(oracle: EnvOracle, n: int, t0: int = 0) -> np.ndarray:
    """One-step displacements from the origin of n distinct rows (independent draws)."""
    rows = t0 + np.arange(n, dtype=np.int64)
    return step_array(oracle, np.zeros(n, dtype=np.int64), rows)


# -- exact laws ----------------------------------------------------------------


def default_window(params: ModelParams) -> int:
    return max(scan_radius(params, _DEFAULT_WINDOW_RESIDUAL), 1)


def _abs_moments(pmf: dict[int, float], orders: Iterable[int]) -> list[tuple[int, float]]:
    return [(m, math.fsum(abs(z) ** m * v for z, v in pmf.items())) for m in orders]


def increment_pmf_enumerated(params: ModelParams, window: int | None = None) -> IncrementLaw:
    """Exact displacement law by a recursion over distance layers of the row above.

    The state is the law of the number of open sites strictly closer than the
    current distance, capped at the largest rank.
    """
    if window is None:
        window = default_window(params)
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")

    p = params.p
    top = params.max_rank
    q = params.q
    both_open = p * p
    one_open = p * (1.0 - p)

    pmf: dict[int, float] = {0: p * q.get(1, 0.0)}
    state = np.zeros(top + 1)
    state[0] = 1.0 - p
    state[min(1, top)] += p
    layer = np.array([(1.0 - p) ** 2, 2.0 * one_open, both_open])

    for d in range(1, window + 1):
        mass = 0.0
        for k, w in q.items():
            mass += w * (one_open + 0.5 * both_open) * state[k - 1]
            if k >= 2:
                mass += w * 0.5 * both_open * state[k - 2]
        pmf[d] = mass
        pmf[-d] = mass

        grown = np.convolve(state, layer)
        state = grown[: top + 1].copy()
        state[top] += grown[top + 1 :].sum()

    residual = math.fsum(w * float(state[:k].sum()) for k, w in q.items())
    if residual >= _ENUMERATION_RESIDUAL:
        raise WindowTooSmallError(
            f"window {window} leaves residual mass {residual:.3g} "
            f"(needs < {_ENUMERATION_RESIDUAL:g})"
        )

    sigma2 = math.fsum(z * z * v for z, v in pmf.items())
    return IncrementLaw(
        pmf=dict(sorted(pmf.items())),
        truncation_bound=residual,
        sigma2=sigma2,
        abs_moments=_abs_moments(pmf, range(1, 6)),
        window=window,
        source="enumerated",
    )


def increment_pmf_closed_form(params: ModelParams, zmax: int) -> IncrementLaw:
    """The closed-form display for the displacement law, evaluated as printed.

    The display covers z >= 1 only; the mass at 0 is taken as p*q(1).
    """
    if zmax < 1:
        raise ValueError(f"zmax must be >= 1, got {zmax}")
    p = params.p
    q = params.q

    pmf: dict[int, float] = {0: p * q.get(1, 0.0)}
    for z in range(1, zmax + 1):
        value = 2.0 * p * (1.0 - p) ** (2 * z) * q.get(1, 0.0)
        value += p ** (2 * z + 1) * q.get(2 * z + 1, 0.0)
        for k in range(2, 2 * z + 1):
            if k not in q:
                continue
            weight = 2.0 * comb(2 * z - 1, k - 1) + comb(2 * z - 1, k - 2)
            value += p**k * (1.0 - p) ** (2 * z - k + 1) * weight * q[k]
        pmf[z] = value
        pmf[-z] = value

    pmf = dict(sorted(pmf.items()))
    sigma2 = math.fsum(z * z * v for z, v in pmf.items())
    return IncrementLaw(
        pmf=pmf,
        truncation_bound=1.0 - math.fsum(pmf.values()),
        sigma2=sigma2,
        abs_moments=_abs_moments(pmf, range(1, 6)),
        window=zmax,
        source="closed_form",
    )


def moments(law: IncrementLaw, orders: Iterable[int]) -> list[tuple[int, float, float]]:
    """Absolute moments (m, E|xi|^m, error bound)."""
    window = max((abs(z) for z in law.pmf), default=0)
    bound_base = window * abs(law.truncation_bound)
    return [
        (m, value, bound_base * float(window) ** m)
        for m, value in _abs_moments(law.pmf, orders)
    ]


# -- joint one-step law of two walkers -----------------------------------------


@dataclass(frozen=True)
class _Landing:
    """One way a walker at the origin lands at `disp`: a fixed-site pattern plus
    a required number of open sites on the interval [lo, hi]."""

    disp: int
    weight: float
    lo: int
    hi: int
    count: int
    fixed: tuple[tuple[int, int], ...]

    def shifted(self, m: int) -> _Landing:
        return _Landing(
            self.disp,
            self.weight,
            self.lo + m,
            self.hi + m,
            self.count,
            tuple((s + m, v) for s, v in self.fixed),
        )

    @property
    def span(self) -> tuple[int, int]:
        sites = [s for s, _ in self.fixed]
        if self.hi >= self.lo:
            sites += [self.lo, self.hi]
        return min(sites), max(sites)


def _landings(params: ModelParams, radius: int) -> list[_Landing]:
    cases: list[_Landing] = []
    for k, w in params.q.items():
        if k == 1:
            cases.append(_Landing(0, w, 1, 0, 0, ((0, 1),)))
        for r in range(1, radius + 1):
            for target in (r, -r):
                other = -target
                cases.append(_Landing(target, w, -r + 1, r - 1, k - 1, ((target, 1), (other, 0))))
                cases.append(
                    _Landing(target, 0.5 * w, -r + 1, r - 1, k - 1, ((target, 1), (other, 1)))
                )
                if k >= 2:
                    cases.append(
                        _Landing(target, 0.5 * w, -r + 1, r - 1, k - 2, ((target, 1), (other, 1)))
                    )
    return cases


def _site_prob(fixed: dict[int, int], p: float) -> float:
    return math.prod(p if v else 1.0 - p for v in fixed.values())


def _single_prob(case: _Landing, table: np.ndarray, p: float) -> float:
    length = max(0, case.hi - case.lo + 1)
    return case.weight * _site_prob(dict(case.fixed), p) * table[length, case.count]


def _joint_prob(a: _Landing, b: _Landing, table: np.ndarray, p: float) -> float:
    fixed = dict(a.fixed)
    for site, state in b.fixed:
        if fixed.get(site, state) != state:
            return 0.0
        fixed[site] = state

    def inside(lo: int, hi: int) -> tuple[int, int]:
        sites = [v for s, v in fixed.items() if lo <= s <= hi]
        return len(sites), sum(sites)

    n_a, open_a = inside(a.lo, a.hi)
    n_b, open_b = inside(b.lo, b.hi)
    need_a = a.count - open_a
    need_b = b.count - open_b
    if need_a < 0 or need_b < 0:
        return 0.0

    len_a = max(0, a.hi - a.lo + 1)
    len_b = max(0, b.hi - b.lo + 1)
    lo_ab, hi_ab = max(a.lo, b.lo), min(a.hi, b.hi)
    len_ab = max(0, hi_ab - lo_ab + 1)
    n_ab = inside(lo_ab, hi_ab)[0] if len_ab else 0

    free_ab = len_ab - n_ab
    free_a = len_a - len_ab - (n_a - n_ab)
    free_b = len_b - len_ab - (n_b - n_ab)

    total = 0.0
    for c in range(min(need_a, need_b, free_ab) + 1):
        total += table[free_ab, c] * table[free_a, need_a - c] * table[free_b, need_b - c]
    return a.weight * b.weight * _site_prob(fixed, p) * total


def pair_step_law(params: ModelParams, m: int, window: int | None = None) -> PairStepLaw:
    """Exact law of Z^m_1 - Z^0_1 - m for walkers at 0 and m sharing one row.

    Each walker's landing event is a pattern on at most two sites plus a count
    on an interval; the row splits into fixed sites and gaps whose open counts
    are independent binomials.
    """
    if m < 1:
        raise ValueError(f"separation must be >= 1, got {m}")
    if window is None:
        window = max(scan_radius(params, _PAIR_WINDOW_RESIDUAL), 1)

    p = params.p
    table = binom.pmf(
        np.arange(params.max_rank + 1)[None, :],
        np.arange(2 * window + m + 2)[:, None],
        p,
    )
    left = _landings(params, window)
    right = [case.shifted(m) for case in left]
    single = [_single_prob(case, table, p) for case in left]

    pmf: dict[int, float] = {}
    for a, pa in zip(left, single, strict=True):
        a_hi = a.span[1]
        for b, pb in zip(right, single, strict=True):
            if a_hi < b.span[0]:
                prob = pa * pb
            else:
                prob = _joint_prob(a, b, table, p)
            if prob:
                key = b.disp - a.disp
                pmf[key] = pmf.get(key, 0.0) + prob

    marginal = 1.0 - increment_pmf_enumerated(params, window).truncation_bound
    residual = max(0.0, 1.0 - math.fsum(pmf.values()))
    return PairStepLaw(
        m=m,
        pmf=dict(sorted(pmf.items())),
        truncation_bound=max(residual, 2.0 * (1.0 - marginal)),
        window=window,
    )


def pair_step_changes(oracle: EnvOracle, m: int, samples: int, t0: int = 0) -> np.ndarray:
    """Z^m_1 - Z^0_1 - m for walkers at 0 and m, one draw per row.

    A single-seed oracle uses rows t0, t0 + 1, ...; a batched oracle uses row t0
    of each replica environment.
    """
    if m < 1:
        raise ValueError(f"separation must be >= 1, got {m}")
    starts = np.zeros((samples, 2), dtype=np.int64)
    starts[:, 1] = m
    if oracle.seeds.ndim == 0:
        rows = t0 + np.arange(samples, dtype=np.int64)
        nxt = step_array(oracle, starts, rows[:, None])
    else:
        if oracle.n_replicas != samples:
            raise ValueError("a batched oracle needs one sample per replica")
        nxt = step_array(oracle, starts, t0, seeds=oracle.seeds[:, None])
    return (nxt[:, 1] - nxt[:, 0]) - m


def pair_step_law_mc(oracle: EnvOracle, m: int, samples: int, t0: int = 0) -> dict[int, int]:
    """Counts of Z^m_1 - Z^0_1 - m over `samples` independent rows."""
    values, counts = np.unique(pair_step_changes(oracle, m, samples, t0), return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts, strict=True)}
