"""Tests for replica fan-out."""

from functools import partial

import numpy as np
import pytest

from gdnm.replicas import chunk_ids, fan_out
from gdnm.stats import _coalescence_task


def _pair_task(ids):
    return ids * 2, ids + 1


class TestChunkIds:
    def test_covers_every_id_once(self):
        chunks = chunk_ids(10, 4)
        assert [c.tolist() for c in chunks] == [[0, 1, 2, 3], [4, 5, 6, 7], [8, 9]]

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError, match="n_replicas"):
            chunk_ids(0, 4)
        with pytest.raises(ValueError, match="chunk_size"):
            chunk_ids(4, 0)


class TestFanOut:
    def test_merges_in_order(self):
        out = fan_out(np.square, 10, chunk_size=3)
        assert out.tolist() == [i * i for i in range(10)]

    def test_tuple_results(self):
        doubled, shifted = fan_out(_pair_task, 5, chunk_size=2)
        assert doubled.tolist() == [0, 2, 4, 6, 8]
        assert shifted.tolist() == [1, 2, 3, 4, 5]

    def test_workers_do_not_change_result(self):
        serial = fan_out(np.square, 20, workers=1, chunk_size=4)
        parallel = fan_out(np.square, 20, workers=2, chunk_size=4)
        assert np.array_equal(serial, parallel)

    def test_simulation_independent_of_workers(self, drainage):
        task = partial(_coalescence_task, drainage, 1, 50)
        serial = fan_out(task, 24, workers=1, chunk_size=5)
        parallel = fan_out(task, 24, workers=3, chunk_size=5)
        assert np.array_equal(serial, parallel)

    def test_progress_callback(self):
        seen = []
        fan_out(np.square, 7, chunk_size=3, on_chunk=lambda done, total: seen.append((done, total)))
        assert seen == [(1, 3), (2, 3), (3, 3)]

    def test_rejects_zero_workers(self):
        with pytest.raises(ValueError, match="workers"):
            fan_out(np.square, 4, workers=0)
