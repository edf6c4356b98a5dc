from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinvtte import (
    GeometryError,
    InputError,
    InterferenceGraph,
    cycle_power,
    degree_stats,
    from_edge_list,
    load_edge_list,
    save_edge_list,
    sbm_sample,
    to_edge_list,
)
from conftest import random_graph


class TestInterferenceGraph:
    def test_self_membership_required(self):
        with pytest.raises(InputError):
            InterferenceGraph(n=2, in_neighbors=((0,), (0,)))

    def test_sorted_unique_required(self):
        with pytest.raises(InputError):
            InterferenceGraph(n=2, in_neighbors=((0, 0), (1,)))
        with pytest.raises(InputError):
            InterferenceGraph(n=2, in_neighbors=((1, 0), (1,)))

    def test_out_of_range_neighbor(self):
        with pytest.raises(InputError):
            InterferenceGraph(n=2, in_neighbors=((0, 2), (1,)))

    def test_degrees(self):
        g = InterferenceGraph(n=3, in_neighbors=((0, 1), (1,), (0, 1, 2)))
        assert list(g.degrees) == [2, 1, 3]


class TestFromEdgeList:
    def test_direction_src_affects_dst(self):
        # (src, dst) means src's treatment can move dst's outcome,
        # so src lands in dst's in-neighborhood
        g = from_edge_list([(0, 1)], 2)
        assert g.in_neighbors[1] == (0, 1)
        assert g.in_neighbors[0] == (0,)

    def test_duplicate_edges_collapse(self):
        g = from_edge_list([(0, 1), (0, 1)], 2)
        assert g.in_neighbors[1] == (0, 1)

    def test_endpoint_out_of_range_names_edge(self):
        with pytest.raises(InputError, match="edge 1"):
            from_edge_list([(0, 1), (0, 5)], 2)

    def test_round_trip_with_to_edge_list(self):
        g = from_edge_list([(0, 1), (2, 0), (1, 2)], 3)
        again = from_edge_list(to_edge_list(g), 3)
        assert again.in_neighbors == g.in_neighbors


class TestCyclePower:
    def test_radius_one_neighbors(self):
        g = cycle_power(5, 1)
        assert g.in_neighbors[0] == (0, 1, 4)
        assert g.in_neighbors[2] == (1, 2, 3)

    def test_radius_two_wraps(self):
        g = cycle_power(7, 2)
        assert g.in_neighbors[0] == (0, 1, 2, 5, 6)

    def test_all_degrees_equal(self):
        g = cycle_power(120, 3)
        stats = degree_stats(g)
        assert stats.d_max == 7
        assert stats.d_mean == 7.0

    def test_radius_zero_is_self_only(self):
        g = cycle_power(4, 0)
        assert all(g.in_neighbors[i] == (i,) for i in range(4))

    def test_too_large_radius_rejected(self):
        with pytest.raises(GeometryError):
            cycle_power(6, 3)
        with pytest.raises(GeometryError):
            cycle_power(5, -1)


class TestSbmSample:
    def test_no_cross_block_edges_when_pi_out_zero(self):
        g = sbm_sample(40, 4, 0.7, 0.0, seed=2)
        block = lambda i: i // 10
        for i in range(40):
            assert all(block(j) == block(i) for j in g.in_neighbors[i])

    def test_full_blocks_when_pi_in_one(self):
        g = sbm_sample(12, 3, 1.0, 0.0, seed=0)
        for i in range(12):
            lo = (i // 4) * 4
            assert g.in_neighbors[i] == tuple(range(lo, lo + 4))

    def test_symmetry(self):
        g = sbm_sample(30, 3, 0.5, 0.2, seed=5)
        for i in range(30):
            for j in g.in_neighbors[i]:
                assert i in g.in_neighbors[j]

    def test_seed_determinism(self):
        a = sbm_sample(30, 3, 0.5, 0.2, seed=9)
        b = sbm_sample(30, 3, 0.5, 0.2, seed=9)
        assert a.in_neighbors == b.in_neighbors
        c = sbm_sample(30, 3, 0.5, 0.2, seed=10)
        assert c.in_neighbors != a.in_neighbors

    def test_block_count_must_divide(self):
        with pytest.raises(GeometryError):
            sbm_sample(10, 3, 0.5, 0.0, seed=0)


class TestEdgeListFiles:
    def test_round_trip(self, tmp_path, rng):
        g = random_graph(rng, 17)
        path = tmp_path / "g.tsv"
        save_edge_list(g, str(path))
        back = load_edge_list(str(path))
        assert back.in_neighbors == g.in_neighbors

    def test_missing_header(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("0\t1\n")
        with pytest.raises(InputError, match="line 1"):
            load_edge_list(str(path))

    def test_bad_endpoint_line_number(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("n=3\n0\t1\n0\tx\n")
        with pytest.raises(InputError, match="line 3"):
            load_edge_list(str(path))

    def test_out_of_range_line_number(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("n=2\n# a comment\n0\t5\n")
        with pytest.raises(InputError, match="line 3"):
            load_edge_list(str(path))

    def test_comments_and_blanks_ignored(self, tmp_path):
        path = tmp_path / "g.tsv"
        path.write_text("n=2\n# comment\n\n0\t1\n")
        g = load_edge_list(str(path))
        assert g.in_neighbors[1] == (0, 1)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 20))
def test_edge_list_round_trip_property(tmp_path_factory, seed, n):
    g = random_graph(np.random.default_rng(seed), n)
    path = tmp_path_factory.mktemp("rt") / "g.tsv"
    save_edge_list(g, str(path))
    assert load_edge_list(str(path)).in_neighbors == g.in_neighbors
