"""Tests for the counter-based environment."""

import numpy as np
import pytest
from scipy.stats import chisquare

from gdnm.config import ModelParams
from gdnm.env import (
    EnvOracle,
    Family,
    Site,
    field_uniform,
    field_words,
    mix,
    omega,
    replica_seed,
    replica_seeds,
    theta,
    zeta,
)


class TestMix:
    def test_deterministic(self):
        assert np.array_equal(mix(7, 3), mix(7, 3))

    def test_counter_changes_word(self):
        assert mix(7, 3)[0] != mix(7, 4)[0]

    def test_negative_counter_accepted(self):
        assert mix(7, -1)[0] != mix(7, 1)[0]

    def test_replica_seed_matches_batch(self):
        batch = replica_seeds(123, [0, 1, 2])
        assert [replica_seed(123, i) for i in range(3)] == [int(s) for s in batch]


class TestFieldWords:
    def test_families_are_independent_streams(self):
        a = field_words(1, 5, 9, Family.OMEGA)
        b = field_words(1, 5, 9, Family.THETA)
        assert a[0] != b[0]

    def test_broadcasting(self):
        x = np.arange(-3, 4)[None, :]
        t = np.arange(2)[:, None]
        words = field_words(np.uint64(4), x, t, Family.ZETA)
        assert words.shape == (2, 7)
        assert words[1, 3] == field_words(np.uint64(4), 0, 1, Family.ZETA)[0]

    def test_uniform_range(self):
        u = field_uniform(np.uint64(99), np.arange(10_000), 0, Family.OMEGA)
        assert u.min() >= 0.0
        assert u.max() < 1.0
        assert abs(u.mean() - 0.5) < 0.02


class TestEnvOracle:
    def test_scalar_queries_match_array_queries(self, mixed):
        oracle = EnvOracle(mixed)
        xs = np.arange(-5, 6)
        bits = oracle.omega(xs, 3)
        coins = oracle.theta(xs, 3)
        ranks = oracle.zeta(xs, 3)
        for i, x in enumerate(xs):
            z = Site(int(x), 3)
            assert omega(oracle, z) == bits[i]
            assert theta(oracle, z) == coins[i]
            assert zeta(oracle, z) == ranks[i]

    def test_openness_frequency(self):
        params = ModelParams(p=0.3, seed=17)
        bits = EnvOracle(params).omega(np.arange(50_000), 0)
        assert abs(bits.mean() - 0.3) < 0.01

    def test_rank_frequencies(self):
        params = ModelParams(q={1: 0.2, 3: 0.8}, seed=2)
        ranks = EnvOracle(params).zeta(np.arange(50_000), 1)
        assert set(np.unique(ranks)) == {1, 3}
        assert abs(np.mean(ranks == 3) - 0.8) < 0.01

    def test_single_rank_always_returned(self, drainage):
        ranks = EnvOracle(drainage).zeta(np.arange(100), 0)
        assert np.all(ranks == 1)

    def test_same_seed_same_environment(self, mixed):
        a = EnvOracle(mixed).omega(np.arange(100), 4)
        b = EnvOracle(mixed).omega(np.arange(100), 4)
        assert np.array_equal(a, b)

    def test_different_seeds_differ(self, mixed):
        a = EnvOracle(mixed).omega(np.arange(200), 4)
        b = EnvOracle(mixed.with_seed(6)).omega(np.arange(200), 4)
        assert not np.array_equal(a, b)


class TestEnvLaws:
    """Marginal laws and cross-stream independence over 10^5 sites."""

    # 1000 x 100 block of sites
    X = np.arange(-500, 500)[None, :]
    T = np.arange(100)[:, None]

    def test_coin_mean(self, mixed):
        coins = EnvOracle(mixed).theta(np.arange(1_000_000), 0)
        assert abs(coins.mean() - 0.5) < 0.002

    def test_openness_and_coins_uncorrelated(self, mixed):
        oracle = EnvOracle(mixed)
        bits = oracle.omega(self.X, self.T).ravel()
        coins = oracle.theta(self.X, self.T).ravel()
        assert abs(np.corrcoef(bits, coins)[0, 1]) < 0.01

    def test_seeds_uncorrelated(self, mixed):
        a = EnvOracle(mixed).omega(self.X, self.T).ravel()
        b = EnvOracle(mixed.with_seed(6)).omega(self.X, self.T).ravel()
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.01

    def test_openness_goodness_of_fit(self):
        params = ModelParams(p=0.3, seed=8)
        bits = EnvOracle(params).omega(self.X, self.T).ravel()
        observed = np.bincount(bits, minlength=2)
        expected = bits.size * np.array([0.7, 0.3])
        assert chisquare(observed, expected).pvalue > 0.001

    def test_coin_goodness_of_fit(self, mixed):
        coins = EnvOracle(mixed).theta(self.X, self.T).ravel()
        observed = np.bincount(coins, minlength=2)
        assert chisquare(observed, np.full(2, coins.size / 2)).pvalue > 0.001

    def test_rank_goodness_of_fit(self):
        params = ModelParams(q={1: 0.5, 2: 0.3, 4: 0.2}, seed=9)
        ranks = EnvOracle(params).zeta(self.X, self.T).ravel()
        observed = np.array([np.sum(ranks == k) for k in (1, 2, 4)])
        assert observed.sum() == ranks.size
        expected = ranks.size * np.array([0.5, 0.3, 0.2])
        assert chisquare(observed, expected).pvalue > 0.001


class TestReplicaBatch:
    def test_n_replicas(self, drainage):
        batch = EnvOracle.for_replicas(drainage, np.arange(5))
        assert batch.n_replicas == 5
        assert EnvOracle(drainage).n_replicas == 1

    def test_batch_rows_match_single_replicas(self, drainage):
        batch = EnvOracle.for_replicas(drainage, np.arange(4))
        x = np.broadcast_to(np.arange(-10, 10), (4, 20))
        bits = batch.omega(x, 7)
        for i in range(4):
            assert np.array_equal(bits[i], batch.replica(i).omega(np.arange(-10, 10), 7))

    def test_replica_of_single_oracle_is_itself(self, drainage):
        oracle = EnvOracle(drainage)
        assert oracle.replica(3) is oracle

    def test_seed_grid_shape(self, drainage):
        batch = EnvOracle.for_replicas(drainage, np.arange(3))
        grid = batch.seed_grid((3, 8))
        assert grid.shape == (3, 8)
        assert np.all(grid[:, 0] == batch.seeds)

    def test_seed_grid_rejects_mismatch(self, drainage):
        batch = EnvOracle.for_replicas(drainage, np.arange(3))
        with pytest.raises(ValueError):
            batch.seed_grid((4, 8))
