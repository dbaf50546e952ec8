"""Tests for the estimators and their interval helpers."""

import math

import numpy as np
import pytest
from scipy.stats import norm

from gdnm.config import ModelParams
from gdnm.kernel import increment_pmf_enumerated
from gdnm.stats import (
    ETA_HAT_SLACK,
    ConditioningError,
    EstimateRow,
    EstimateSeries,
    box_exit_prob,
    crossing_coalesce_prob,
    density_curve,
    dkw_band,
    embedding_check,
    escape_curve,
    eta_counts,
    eta_hat_curve,
    eta_trend,
    increment_frequencies,
    increment_table,
    joint_marginal_check,
    mean_interval,
    p00_bounds,
    p00_curve,
    pair_meeting_cdf,
    tail_curve,
    wilson_interval,
)


class TestIntervals:
    def test_wilson_contains_estimate(self):
        lo, hi = wilson_interval(30, 100, 0.95)
        assert lo < 0.3 < hi

    def test_wilson_edges(self):
        assert wilson_interval(0, 10)[0] == 0.0
        assert wilson_interval(10, 10)[1] == 1.0

    def test_wilson_rejects_bad_counts(self):
        with pytest.raises(ValueError, match="n must be >= 1"):
            wilson_interval(0, 0)
        with pytest.raises(ValueError, match="successes"):
            wilson_interval(11, 10)

    def test_mean_interval(self):
        mean, lo, hi = mean_interval(np.array([1.0, 2.0, 3.0]))
        assert mean == 2.0
        assert lo < 2.0 < hi
        assert mean_interval(np.array([4.0])) == (4.0, 4.0, 4.0)

    def test_dkw_band(self):
        assert dkw_band(100, 0.99) == pytest.approx(math.sqrt(math.log(200) / 200))


class TestEstimateRow:
    def test_rejects_zero_n(self):
        with pytest.raises(ValueError, match="n must be >= 1"):
            EstimateRow(1.0, 0.5, 0.4, 0.6, 0)

    def test_rejects_estimate_outside_interval(self):
        with pytest.raises(ValueError, match="outside"):
            EstimateRow(1.0, 0.7, 0.4, 0.6, 10)

    def test_series_lookup(self):
        series = EstimateSeries("x", "tail", rows=[EstimateRow(2.0, 0.5, 0.4, 0.6, 10)])
        assert series.row(2.0).estimate == 0.5
        assert list(series.grid) == [2.0]
        with pytest.raises(KeyError):
            series.row(3.0)


class TestTailCurve:
    def test_survival_non_increasing(self, drainage):
        series = tail_curve(drainage, 1, [4, 16, 64], 64)
        est = series.estimates
        assert np.all(np.diff(est) <= 0)
        assert series.meta["horizon"] == 64
        assert series.derived["c_hat"] == pytest.approx(max(series.derived["scaled"]))

    def test_chunking_does_not_change_result(self, drainage):
        a = tail_curve(drainage, 2, [8, 32], 40, chunk_size=7)
        b = tail_curve(drainage, 2, [8, 32], 40, chunk_size=40)
        assert list(a.estimates) == list(b.estimates)

    def test_progress_called_per_chunk(self, drainage):
        calls = []
        tail_curve(drainage, 1, [4], 30, chunk_size=10, progress=lambda d, t: calls.append(d))
        assert calls == [1, 2, 3]

    def test_rejects_zero_offset(self, drainage):
        with pytest.raises(ValueError, match="nonzero"):
            tail_curve(drainage, 0, [4], 10)

    @pytest.mark.slow
    def test_sqrt_t_scaling_is_flat(self, mixed):
        series = tail_curve(mixed, 1, [64, 256, 1024], 20_000)
        assert series.derived["flatness"] <= 1.5


class TestPairMeeting:
    def test_cdf_non_decreasing(self, drainage):
        series = pair_meeting_cdf(drainage, 0.5, [0.25, 1.0], 8, 64)
        assert series.estimates[0] <= series.estimates[1]
        assert series.meta["k"] == 4
        assert series.derived["sigma"] == pytest.approx(math.sqrt(10 / 9))

    def test_start_offset_at_least_one(self, drainage):
        series = pair_meeting_cdf(drainage, 0.0, [1.0], 4, 8)
        assert series.meta["k"] == 1

    def test_rejects_bad_times(self, drainage):
        with pytest.raises(ValueError, match="positive"):
            pair_meeting_cdf(drainage, 1.0, [0.0], 4, 8)

    @pytest.mark.slow
    def test_matches_brownian_meeting_probability(self, drainage):
        series = pair_meeting_cdf(drainage, 1.0, [1.0, 4.0], 60, 2000)
        sigma = math.sqrt(10 / 9)
        expected = [2.0 * norm.cdf(-1.0 / (sigma * math.sqrt(2.0 * t))) for t in (1.0, 4.0)]
        assert series.derived["reference"] == pytest.approx(expected)
        assert expected[0] == pytest.approx(0.502, abs=1e-3)
        assert series.derived["max_abs_error"] <= 0.05


class TestJointMarginal:
    def test_point_mass_at_time_zero(self, mixed):
        series = joint_marginal_check(mixed, 4, [0.0, 1.0], 100)
        assert series.row(0.0).estimate == 0.0
        assert 0.0 <= series.row(1.0).estimate <= 1.0
        assert math.isnan(series.derived["variance_ratio"][0])

    def test_rejects_negative_s(self, mixed):
        with pytest.raises(ValueError, match="nonnegative"):
            joint_marginal_check(mixed, 4, [-1.0], 10)

    @pytest.mark.slow
    def test_marginal_close_to_normal(self, drainage):
        n = 40
        series = joint_marginal_check(drainage, n, [1.0], 10_000)
        sigma = series.derived["sigma"]
        # one lattice atom of the rescaled walk on top of the sampling band
        atom = 1.0 / (math.sqrt(2.0 * math.pi) * sigma * n)
        assert series.rows[0].estimate <= series.derived["dkw_band"] + atom
        assert series.derived["variance_ratio"][0] == pytest.approx(1.0, abs=0.05)


class TestBoxExit:
    def test_small_run(self, drainage):
        series = box_exit_prob(drainage, 1.0, [0.25], 2.0, 0.5, 20)
        assert series.meta["half_width"] == 2
        assert series.meta["bound"] == 4
        assert 0.0 <= series.rows[0].estimate <= 1.0

    def test_rejects_small_box(self, drainage):
        with pytest.raises(ValueError, match="c_box"):
            box_exit_prob(drainage, 1.0, [0.25], 1.0, 0.5, 20)


class TestEta:
    def test_single_site_segment(self, drainage):
        count = eta_counts(drainage, 0.5, 0.0, 0.25, 0.0, 0.3, 16)
        assert count.counts == {1: 16}
        assert count.replicas == 16
        assert count.prob_at_least(2) == 0.0
        assert count.mean == 1.0

    def test_trend_rows(self, drainage):
        series = eta_trend(drainage, 0.25, 0.0, 0.25, 0.0, [1.0, 0.5], 16)
        assert series.name == "eta"
        assert [r.grid for r in series.rows] == [1.0, 0.5]

    def test_hat_curve(self, drainage):
        series = eta_hat_curve(drainage, 0.0, 1.0, 0.0, 1.0, [0.5, 0.25], 16)
        assert series.name == "eta-hat"
        assert series.derived["bound"] == pytest.approx(1.0 / math.sqrt(math.pi))
        assert series.derived["slack"] == ETA_HAT_SLACK

    def test_trend_records_start_set(self, drainage):
        series = eta_trend(drainage, 0.5, 0.0, 0.25, 0.0, [0.5], 4)
        assert series.meta["start_set"] == "born_on_segment"

    def test_rejects_empty_segment(self, drainage):
        with pytest.raises(ValueError, match="b > a"):
            eta_counts(drainage, 0.5, 0.0, 1.0, 1.0, 1.0, 4)

    @pytest.mark.slow
    def test_hat_mean_within_slack(self, drainage):
        series = eta_hat_curve(drainage, 0.0, 1.0, 0.0, 1.0, [0.0625], 1000)
        bound = 1.0 / math.sqrt(math.pi)
        assert series.rows[0].estimate <= bound * (1.0 + ETA_HAT_SLACK)
        assert series.derived["within_slack"]


class TestCrossing:
    def test_drainage_always_coalesces(self, drainage):
        series = crossing_coalesce_prob(drainage, [1, 2, 3])
        assert all(r.estimate == pytest.approx(1.0) for r in series.rows)
        assert series.derived["inf"] == pytest.approx(1.0)
        assert all(r.n == 1 for r in series.rows)

    def test_rank_two_can_cross(self, mixed):
        series = crossing_coalesce_prob(mixed, [1])
        assert 0.0 < series.rows[0].estimate < 1.0
        assert series.derived["positive"]

    def test_infimum_bounded_away_from_zero(self, mixed):
        series = crossing_coalesce_prob(mixed, list(range(1, 21)))
        assert series.derived["inf"] == pytest.approx(0.742, abs=0.01)
        assert series.derived["argmin"] == 1
        assert series.derived["inf_ci_low"] > 0
        assert series.derived["positive"]

    def test_monte_carlo(self, drainage):
        series = crossing_coalesce_prob(drainage, [1], method="mc", replicas=200)
        assert series.rows[0].estimate == 1.0

    def test_unconditionable_separation(self, drainage):
        with pytest.raises(ConditioningError, match="m = 200"):
            crossing_coalesce_prob(drainage, [200])

    def test_unknown_method(self, drainage):
        with pytest.raises(ValueError, match="unknown method"):
            crossing_coalesce_prob(drainage, [1], method="other")


class TestP00:
    def test_bounds_for_drainage(self, drainage):
        lower, upper = p00_bounds(drainage)
        assert lower == pytest.approx(0.0625)
        assert upper == pytest.approx(0.9375)

    def test_curve_within_bracket(self, drainage):
        series = p00_curve(drainage, [1, 5, 20])
        assert series.derived["within_bracket"]
        assert series.row(20).estimate == pytest.approx(0.325, abs=1e-4)

    def test_sparse_higher_ranks_within_bracket(self):
        params = ModelParams(p=0.3, q={2: 0.6, 3: 0.4})
        lower, upper = p00_bounds(params)
        assert lower == pytest.approx(0.5 * 0.36 * 0.3**5)
        assert upper == pytest.approx(1.0 - 0.5 * 0.36 * 0.3**6)
        series = p00_curve(params, list(range(1, 21)))
        assert series.derived["sup"] == pytest.approx(0.0958, abs=2e-3)
        assert series.derived["within_bracket"]

    def test_drainage_sup_within_bracket(self, drainage):
        series = p00_curve(drainage, list(range(1, 21)))
        assert 0.0625 <= series.derived["sup"] <= 0.9375


class TestDensity:
    def test_small_run(self, drainage):
        series = density_curve(drainage, [1, 4], 4)
        assert series.meta["L"] == 16
        assert all(0.0 < r.estimate <= 1.0 for r in series.rows)

    def test_rejects_small_guard(self, drainage):
        with pytest.raises(ValueError, match="guard"):
            density_curve(drainage, [4], 4, guard=0.5)

    @pytest.mark.slow
    def test_sqrt_t_scaling_is_flat(self, mixed):
        series = density_curve(mixed, [16, 64, 256], 200)
        assert series.meta["L"] == 128
        assert series.derived["flatness"] <= 1.5


class TestEscape:
    def test_small_run(self, drainage):
        series = escape_curve(drainage, 1, 1.0, 1.0, [0.5, 0.25], 32)
        assert len(series.rows) == 2
        assert all(0.0 <= r.estimate <= 1.0 for r in series.rows)

    def test_rejects_bad_delta(self, drainage):
        with pytest.raises(ValueError, match="delta"):
            escape_curve(drainage, 1, 1.0, 1.0, [0.0], 4)


class TestIncrementSeries:
    def test_table(self, drainage):
        series = increment_table(drainage, zmax=3)
        assert [r.grid for r in series.rows] == [-3, -2, -1, 0, 1, 2, 3]
        assert series.row(0).estimate == pytest.approx(0.5)
        assert series.derived["sigma2"] == pytest.approx(10 / 9, abs=1e-9)
        assert series.derived["closed_form"][4] == pytest.approx(0.25)
        assert series.derived["closed_form_max_gap"] == pytest.approx(1 / 16)

    def test_frequencies(self, drainage):
        series = increment_frequencies(drainage, 2, 500)
        assert [r.grid for r in series.rows] == [-2, -1, 0, 1, 2]
        assert sum(series.estimates) <= 1.0
        assert all(r.n == 500 for r in series.rows)

    @pytest.mark.slow
    @pytest.mark.parametrize(
        "q", [{1: 1.0}, {1: 0.5, 2: 0.5}, {1: 0.2, 3: 0.8}], ids=["drainage", "mixed", "sparse"]
    )
    def test_frequencies_match_enumeration(self, q):
        params = ModelParams(p=0.5, q=q, seed=21)
        samples = 200_000
        law = increment_pmf_enumerated(params)
        series = increment_frequencies(params, 12, samples)
        checked = [r for r in series.rows if law.prob(int(r.grid)) > 1e-4]
        assert len(checked) >= 5
        # simultaneous band at level 0.001 over the checked displacements
        z = norm.ppf(1.0 - 0.001 / (2 * len(checked)))
        for r in checked:
            prob = law.prob(int(r.grid))
            assert abs(r.estimate - prob) <= z * math.sqrt(prob * (1.0 - prob) / samples)


class TestEmbeddingCheck:
    def test_lazy_walk(self):
        rng = np.random.default_rng(0)
        pmf = {-1: 0.25, 0: 0.5, 1: 0.25}
        series = embedding_check(pmf, [(-1, 1), (-1, 2)], 2000, rng)
        assert series.derived["expected"] == [1, 2]
        assert series.derived["pushforward_error"] == pytest.approx(0.0, abs=1e-12)
        assert series.derived["tv_distance"] < 0.05
        assert series.derived["zero_atom"] == 0.5

    def test_level_hit_comparison(self):
        rng = np.random.default_rng(1)
        series = embedding_check({-1: 0.5, 1: 0.5}, [(-1, 1)], 200, rng)
        hit = series.derived["level_hit"]
        assert hit["standard"] == pytest.approx(hit["closed_form"], abs=1e-6)
        # The -a/(2y) exponent puts more mass on the tail than the reflection law.
        assert hit["printed"][0] == pytest.approx(math.sqrt(2.0) * math.erf(1.0), abs=1e-6)
        assert hit["printed"][0] > hit["standard"][0]
