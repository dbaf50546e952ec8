"""Two-point Skorohod representation of a centered integer law by Brownian interval exits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Literal

import numpy as np
from scipy import integrate
from scipy.special import erf
from scipy.stats import norm

if TYPE_CHECKING:
    from collections.abc import Mapping

    from numpy.typing import ArrayLike

_CENTER_TOLERANCE = 1e-12
_MASS_TOLERANCE = 1e-9

# Below this multiple of L^2 the image series is used for the exit-time law
_IMAGE_SWITCH = 0.05
_IMAGE_TERMS = 3
_SPECTRAL_MAX_TERMS = 20_001
# Exit-time samples are searched on [0, _SAMPLE_SPAN * L^2]
_SAMPLE_SPAN = 50.0
_BISECTION_STEPS = 64


class NonCenteredError(Exception):
    """Raised when a pmf handed to the embedding has nonzero mean."""


class AccuracyError(Exception):
    """Raised when a truncated series cannot meet the requested accuracy."""


class Side(Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass
class PairLaw:
    """Law of the random interval (U, V): atoms u < 0 < v plus a point mass at (0, 0)."""

    atoms: list[tuple[int, int, float]] = field(default_factory=list)
    zero_atom: float = 0.0

    @property
    def total_mass(self) -> float:
        return math.fsum([self.zero_atom, *(w for _, _, w in self.atoms)])

    def pushforward(self) -> dict[int, float]:
        """Law of the exit value B(T) when B exits (U, V) from 0."""
        out: dict[int, float] = {}
        if self.zero_atom:
            out[0] = self.zero_atom
        for u, v, w in self.atoms:
            span = v - u
            out[v] = out.get(v, 0.0) + w * (-u) / span
            out[u] = out.get(u, 0.0) + w * v / span
        return dict(sorted(out.items()))


def skorohod_pair_law(pmf: Mapping[int, float], tol: float = _CENTER_TOLERANCE) -> PairLaw:
    """Pair law with weight(u, v) proportional to (v - u) pmf(u) pmf(v), for u < 0 < v."""
    if not pmf:
        raise ValueError("pmf must be nonempty")
    total = math.fsum(pmf.values())
    if abs(total - 1.0) > _MASS_TOLERANCE:
        raise ValueError(f"pmf sums to {total:g}, expected 1")
    if any(w < 0 for w in pmf.values()):
        raise ValueError("pmf has negative entries")
    mean = math.fsum(z * w for z, w in pmf.items())
    if abs(mean) > tol:
        raise NonCenteredError(f"pmf has mean {mean:.3g}, expected 0")

    negative = sorted((int(z), w) for z, w in pmf.items() if z < 0 and w > 0)
    positive = sorted((int(z), w) for z, w in pmf.items() if z > 0 and w > 0)
    scale = math.fsum(v * w for v, w in positive)

    atoms: list[tuple[int, int, float]] = []
    if scale > 0:
        for u, pu in negative:
            for v, pv in positive:
                atoms.append((u, v, (v - u) * pu * pv / scale))
    return PairLaw(atoms=atoms, zero_atom=float(pmf.get(0, 0.0)))


def _check_interval(u: float, v: float) -> None:
    if not u < 0 < v:
        raise ValueError(f"need u < 0 < v, got ({u}, {v})")


def exit_probability_right(u: float, v: float) -> float:
    _check_interval(u, v)
    return -u / (v - u)


def exit_side(u: float, v: float, rng: np.random.Generator) -> Side:
    """Side through which standard BM from 0 leaves (u, v)."""
    return Side.RIGHT if rng.random() < exit_probability_right(u, v) else Side.LEFT


def exit_sides(u: float, v: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """Vectorized exit_side: True where the exit is on the right."""
    return rng.random(size) < exit_probability_right(u, v)


# -- exit-time law ------------------------------------------------------------


def _spectral_survival(
    a: float, width: float, x: np.ndarray, accuracy: float
) -> tuple[np.ndarray, float]:
    c = math.pi**2 * x / (2.0 * width**2)
    c_min = float(c.min())
    n = 1
    total = np.zeros_like(x)
    while True:
        total += 4.0 / (n * math.pi) * math.sin(n * math.pi * a / width) * np.exp(-n * n * c)
        nxt = n + 2
        bound = 4.0 / (nxt * math.pi) * math.exp(-nxt * nxt * c_min) / -math.expm1(-nxt * c_min)
        if bound <= accuracy:
            return total, bound
        if nxt > _SPECTRAL_MAX_TERMS:
            raise AccuracyError(
                f"spectral series needs more than {_SPECTRAL_MAX_TERMS} terms "
                f"at t = {float(x.min()):.3g} for accuracy {accuracy:g}"
            )
        n = nxt


def _image_survival(a: float, width: float, x: np.ndarray) -> tuple[np.ndarray, float]:
    root = np.sqrt(x)
    total = np.zeros_like(x)
    for k in range(-_IMAGE_TERMS, _IMAGE_TERMS + 1):
        shift = 2 * k * width
        total += (
            norm.cdf((width - a + shift) / root)
            - norm.cdf((-a + shift) / root)
            - norm.cdf((width + a + shift) / root)
            + norm.cdf((a + shift) / root)
        )
    ratio = width / float(root.max())
    bound = 8.0 * float(norm.sf((2 * _IMAGE_TERMS + 1) * ratio))
    return total, bound


def exit_time_cdf(
    u: float, v: float, x: float | ArrayLike, accuracy: float = 1e-12
) -> tuple[np.ndarray, float]:
    """P(T <= x) for the exit time T of (u, v) by standard BM from 0, with a truncation bound.

    Small times use the image series, larger ones the spectral series.
    """
    _check_interval(u, v)
    width = v - u
    a = -u
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    cdf = np.zeros_like(xs)
    bound = 0.0

    positive = xs > 0
    small = positive & (xs < _IMAGE_SWITCH * width**2)
    large = positive & ~small
    if small.any():
        survival, b = _image_survival(a, width, xs[small])
        cdf[small] = 1.0 - survival
        bound = max(bound, b)
    if large.any():
        survival, b = _spectral_survival(a, width, xs[large], accuracy)
        cdf[large] = 1.0 - survival
        bound = max(bound, b)
    if bound > accuracy:
        raise AccuracyError(f"truncation bound {bound:.3g} exceeds accuracy {accuracy:g}")
    return np.clip(cdf, 0.0, 1.0), bound


def exit_time_sample(
    u: float,
    v: float,
    rng: np.random.Generator,
    accuracy: float = 1e-10,
    size: int | None = None,
) -> float | np.ndarray:
    """Exit time samples by inverting exit_time_cdf with bisection."""
    _check_interval(u, v)
    n = 1 if size is None else size
    target = rng.random(n)
    lo = np.zeros(n)
    hi = np.full(n, _SAMPLE_SPAN * (v - u) ** 2)
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        below = exit_time_cdf(u, v, mid, accuracy)[0] < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = 0.5 * (lo + hi)
    return float(out[0]) if size is None else out


def exit_time_laplace(u: float, v: float, lam: float | ArrayLike) -> float | np.ndarray:
    """E[exp(-lam T)] for the exit time of (u, v)."""
    _check_interval(u, v)
    root = np.sqrt(2.0 * np.asarray(lam, dtype=np.float64))
    out = np.cosh(root * (u + v) / 2.0) / np.cosh(root * (v - u) / 2.0)
    return float(out) if out.ndim == 0 else out


def embed_one_step(
    pmf: Mapping[int, float], rng: np.random.Generator, size: int | None = None
) -> int | np.ndarray:
    """Draw (U, V) from the pair law, then the exit value of BM from (U, V)."""
    law = skorohod_pair_law(pmf)
    n = 1 if size is None else size
    lows = np.array([0] + [u for u, _, _ in law.atoms], dtype=np.int64)
    highs = np.array([0] + [v for _, v, _ in law.atoms], dtype=np.int64)
    weights = np.array([law.zero_atom] + [w for _, _, w in law.atoms])
    weights /= weights.sum()

    pick = rng.choice(weights.size, size=n, p=weights)
    u, v = lows[pick], highs[pick]
    span = np.where(pick == 0, 1, v - u)
    right = rng.random(n) < np.where(pick == 0, 0.0, -u / span)
    out = np.where(right, v, u)
    return int(out[0]) if size is None else out


# -- level hitting ------------------------------------------------------------


def bm_level_hit_tail(a: float, x: float | ArrayLike) -> float | np.ndarray:
    """P(first hitting time of level a >= x) = 2 Phi(a / sqrt(x)) - 1."""
    if a <= 0:
        raise ValueError(f"level must be positive, got {a}")
    xs = np.asarray(x, dtype=np.float64)
    if np.any(xs <= 0):
        raise ValueError("x must be positive")
    out = erf(a / np.sqrt(2.0 * xs))
    return float(out) if out.ndim == 0 else out


def hitting_density(
    a: float, y: float | ArrayLike, form: Literal["standard", "printed"] = "standard"
) -> float | np.ndarray:
    """Density of the level-a hitting time.

    "standard" has exponent -a^2/(2y); "printed" keeps the exponent -a/(2y) as it
    appears in the tail estimate, for side-by-side comparison.
    """
    ys = np.asarray(y, dtype=np.float64)
    if form == "standard":
        exponent = -(a * a) / (2.0 * ys)
    elif form == "printed":
        exponent = -a / (2.0 * ys)
    else:
        raise ValueError(f"unknown form {form!r}")
    out = a / np.sqrt(2.0 * math.pi * ys**3) * np.exp(exponent)
    return float(out) if out.ndim == 0 else out


def hitting_tail_quadrature(
    a: float, x: float, form: Literal["standard", "printed"] = "standard"
) -> tuple[float, float]:
    """Integral of hitting_density over [x, inf) as (value, absolute error estimate)."""
    if a <= 0 or x <= 0:
        raise ValueError("a and x must be positive")
    value, err = integrate.quad(lambda y: hitting_density(a, y, form), x, np.inf)
    return float(value), float(err)
