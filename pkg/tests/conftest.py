"""Shared pytest fixtures for gdnm tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from gdnm.config import ModelParams
from gdnm.env import EnvOracle


@dataclass(frozen=True, eq=False)
class FixedRowOracle(EnvOracle):
    """Environment with a fixed set of open sites in every row and constant coins."""

    open_sites: frozenset[int] = frozenset()
    rank: int = 1
    side: int = 0

    def _shape(self, x, t, seeds):
        shapes = [np.shape(x), np.shape(t)]
        if seeds is not None:
            shapes.append(np.shape(seeds))
        return np.broadcast_shapes(*shapes)

    def omega(self, x, t, seeds=None):
        shape = self._shape(x, t, seeds)
        sites = np.broadcast_to(np.asarray(x), shape)
        return np.isin(sites, sorted(self.open_sites)).astype(np.int8)

    def theta(self, x, t, seeds=None):
        return np.full(self._shape(x, t, seeds), self.side, dtype=np.int8)

    def zeta(self, x, t, seeds=None):
        return np.full(self._shape(x, t, seeds), self.rank, dtype=np.int64)


@pytest.fixture
def drainage():
    """Drainage special case: p = 1/2, always the nearest open site."""
    return ModelParams(p=0.5, q={1: 1.0}, seed=11)


@pytest.fixture
def mixed():
    """Ranks 1 and 2 with equal weight, where walkers can cross."""
    return ModelParams(p=0.5, q={1: 0.5, 2: 0.5}, seed=5)


@pytest.fixture
def fixed_row():
    def make(open_sites, rank=1, side=0, q=None):
        params = ModelParams(p=0.5, q=q or {rank: 1.0}, seed=0)
        return FixedRowOracle(params, open_sites=frozenset(open_sites), rank=rank, side=side)

    return make
