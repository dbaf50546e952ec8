"""Lazily evaluated random environment: site openness, tie-break coins and jump ranks.

Every value is a pure function of (seed, x, t, family tag). Nothing is stored, so
an environment can be scanned without bounds and replicas run independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from numpy.typing import ArrayLike

    from gdnm.config import ModelParams

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_KEY_X = np.uint64(0xD6E8FEB86659FD93)
_KEY_T = np.uint64(0xA0761D6478BD642F)
_KEY_TAG = np.uint64(0xE7037ED1A0B428DB)
_INV_2_53 = 1.0 / float(2**53)


class Family(IntEnum):
    """Independent environment families."""

    OMEGA = 1
    THETA = 2
    ZETA = 3


@dataclass(frozen=True)
class Site:
    """Lattice point: x is space, t is time."""

    x: int
    t: int


def _u64(values: ArrayLike) -> np.ndarray:
    """Reinterpret signed integers as uint64 (two's complement wrap)."""
    arr = np.asarray(values)
    if arr.dtype == np.uint64:
        return arr
    return arr.astype(np.int64).view(np.uint64)


def _finalize(h: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, a bijection on 64-bit words."""
    with np.errstate(over="ignore"):
        h = h ^ (h >> np.uint64(30))
        h = (h * _MIX1) & _MASK
        h = h ^ (h >> np.uint64(27))
        h = (h * _MIX2) & _MASK
        h = h ^ (h >> np.uint64(31))
    return h


def mix(seed: ArrayLike, counter: ArrayLike) -> np.ndarray:
    """Derive a 64-bit word from a seed and a counter."""
    s = np.atleast_1d(_u64(seed))
    c = np.atleast_1d(_u64(counter))
    with np.errstate(over="ignore"):
        h = _finalize((s + _GOLDEN) & _MASK)
        h = _finalize(h ^ ((c * _GOLDEN) & _MASK))
    return h


def replica_seed(master: int, index: int) -> int:
    """Seed of replica `index` derived from the master seed."""
    return int(mix(np.uint64(master), np.int64(index))[0])


def replica_seeds(master: int, indices: ArrayLike) -> np.ndarray:
    return mix(np.uint64(master), np.asarray(indices, dtype=np.int64))


def field_words(seeds: ArrayLike, x: ArrayLike, t: ArrayLike, family: Family) -> np.ndarray:
    """Counter-based 64-bit words keyed by (seed, x, t, family); broadcasts its inputs."""
    s = np.atleast_1d(_u64(seeds))
    xs = np.atleast_1d(_u64(x))
    ts = np.atleast_1d(_u64(t))
    tag = np.uint64(int(family))
    with np.errstate(over="ignore"):
        h = _finalize((s + _GOLDEN) & _MASK)
        h = _finalize(h ^ ((xs * _KEY_X) & _MASK))
        h = _finalize(h ^ ((ts * _KEY_T) & _MASK))
        h = _finalize(h ^ ((tag * _KEY_TAG) & _MASK))
    return h


def field_uniform(seeds: ArrayLike, x: ArrayLike, t: ArrayLike, family: Family) -> np.ndarray:
    """Uniform [0, 1) doubles from the top 53 bits of the field words."""
    words = field_words(seeds, x, t, family)
    return (words >> np.uint64(11)).astype(np.float64) * _INV_2_53


@dataclass(frozen=True, eq=False)
class EnvOracle:
    """Environment of one model: a single seed (0-d) or a batch of replica seeds (1-d).

    Batched oracles broadcast their seeds along the leading axis of every query.
    """

    params: ModelParams
    seeds: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        seeds = np.uint64(self.params.seed) if self.seeds is None else self.seeds
        object.__setattr__(self, "seeds", np.asarray(seeds, dtype=np.uint64))
        cdf = np.cumsum(self.params.rank_probs)
        cdf[-1] = 1.0
        object.__setattr__(self, "_rank_cdf", cdf)

    @classmethod
    def for_replicas(cls, params: ModelParams, indices: ArrayLike) -> EnvOracle:
        return cls(params, replica_seeds(params.seed, indices))

    @property
    def n_replicas(self) -> int:
        return 1 if self.seeds.ndim == 0 else int(self.seeds.shape[0])

    def replica(self, i: int) -> EnvOracle:
        """Single-seed oracle for replica i of a batch."""
        if self.seeds.ndim == 0:
            return self
        return EnvOracle(self.params, self.seeds[i])

    def seed_grid(self, shape: tuple[int, ...]) -> np.ndarray:
        """Seeds broadcast to `shape`, replicas along the leading axis."""
        if self.seeds.ndim == 0:
            return np.broadcast_to(self.seeds, shape)
        lead = self.seeds.reshape(self.seeds.shape + (1,) * (len(shape) - 1))
        return np.broadcast_to(lead, shape)

    def _uniform(
        self, family: Family, x: ArrayLike, t: ArrayLike, seeds: ArrayLike | None
    ) -> np.ndarray:
        if seeds is None:
            seeds = self.seed_grid(np.broadcast_shapes(np.shape(x), np.shape(t)))
        shape = np.broadcast_shapes(np.shape(seeds), np.shape(x), np.shape(t))
        return field_uniform(seeds, x, t, family).reshape(shape)

    def omega(self, x: ArrayLike, t: ArrayLike, seeds: ArrayLike | None = None) -> np.ndarray:
        """Openness bits, 1 with probability p."""
        return (self._uniform(Family.OMEGA, x, t, seeds) < self.params.p).astype(np.int8)

    def theta(self, x: ArrayLike, t: ArrayLike, seeds: ArrayLike | None = None) -> np.ndarray:
        """Fair tie-break coins."""
        return (self._uniform(Family.THETA, x, t, seeds) < 0.5).astype(np.int8)

    def zeta(self, x: ArrayLike, t: ArrayLike, seeds: ArrayLike | None = None) -> np.ndarray:
        """Jump ranks drawn from q by inverse CDF over the sorted support."""
        u = self._uniform(Family.ZETA, x, t, seeds)
        idx = np.searchsorted(self._rank_cdf, u, side="right")
        return self.params.ranks[np.minimum(idx, len(self._rank_cdf) - 1)]


def omega(oracle: EnvOracle, z: Site) -> int:
    return int(np.asarray(oracle.omega(z.x, z.t)))


def theta(oracle: EnvOracle, z: Site) -> int:
    return int(np.asarray(oracle.theta(z.x, z.t)))


def zeta(oracle: EnvOracle, z: Site) -> int:
    return int(np.asarray(oracle.zeta(z.x, z.t)))
