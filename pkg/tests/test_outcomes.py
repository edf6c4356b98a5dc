from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinvtte import (
    Clustering,
    InputError,
    LowOrderModel,
    cluster_aggregate,
    cycle_power,
    evaluate,
    evaluate_clustered,
    from_edge_list,
    gen_cycle_model,
    gen_named_model,
    load_model,
    mixed_signs,
    outcome_bound,
    save_model,
    singleton_clustering,
    true_tte,
)
from conftest import random_clustering, random_graph, random_model


def pair_unit_model():
    # one unit whose outcome is the pure interaction of its two neighbors
    g = from_edge_list([(1, 0), (2, 0)], 3)
    model = LowOrderModel(
        beta_star=2,
        coeffs=(
            {(): 0.0, (1, 2): 1.0},
            {(): 0.0},
            {(): 0.0},
        ),
    )
    return g, model


class TestLowOrderModel:
    def test_baseline_required(self):
        with pytest.raises(InputError, match="baseline"):
            LowOrderModel(beta_star=1, coeffs=({(0,): 1.0},))

    def test_subset_size_capped(self):
        with pytest.raises(InputError):
            LowOrderModel(beta_star=1, coeffs=({(): 0.0, (0, 1): 1.0},))

    def test_unsorted_key_rejected(self):
        with pytest.raises(InputError):
            LowOrderModel(beta_star=2, coeffs=({(): 0.0, (1, 0): 1.0},))

    def test_subset_outside_neighborhood_rejected_on_use(self):
        g = from_edge_list([], 2)
        model = LowOrderModel(beta_star=1, coeffs=({(): 0.0, (1,): 1.0}, {(): 0.0}))
        with pytest.raises(InputError, match="neighborhood"):
            evaluate(model, g, [0, 0])


class TestEvaluate:
    def test_all_control_returns_baselines(self, rng):
        g = random_graph(rng, 9)
        model = random_model(rng, g, 2)
        y = evaluate(model, g, np.zeros(9, dtype=int))
        assert np.allclose(y, [cmap[()] for cmap in model.coeffs])

    def test_interaction_needs_both_treated(self):
        g, model = pair_unit_model()
        assert evaluate(model, g, [0, 1, 1])[0] == 1.0
        assert evaluate(model, g, [0, 1, 0])[0] == 0.0
        assert evaluate(model, g, [1, 0, 1])[0] == 0.0

    def test_weak_model_fully_treated(self):
        g = cycle_power(20, 2)
        model = gen_named_model(g, "weak", seed=4)
        y1 = evaluate(model, g, np.ones(20, dtype=int))
        y0 = evaluate(model, g, np.zeros(20, dtype=int))
        assert np.allclose(y1 - y0, 1.0)

    def test_only_neighborhood_read(self, rng):
        g = random_graph(rng, 10)
        model = random_model(rng, g, 2)
        z = rng.integers(0, 2, size=10)
        y = evaluate(model, g, z)
        for i in range(10):
            flipped = z.copy()
            outside = [j for j in range(10) if j not in g.in_neighbors[i]]
            for j in outside:
                flipped[j] = 1 - flipped[j]
            assert evaluate(model, g, flipped)[i] == pytest.approx(y[i], abs=1e-12)

    def test_z_validation(self):
        g, model = pair_unit_model()
        with pytest.raises(InputError):
            evaluate(model, g, [0, 1])
        with pytest.raises(InputError):
            evaluate(model, g, [0, 2, 0])


class TestTrueTte:
    def test_cycle_model_geometric_totals(self):
        g = cycle_power(120, 3)
        for beta_star, expect in [(1, 0.5), (2, 0.75), (3, 0.875), (4, 0.9375)]:
            assert true_tte(gen_cycle_model(g, beta_star)) == pytest.approx(
                expect, abs=1e-12
            )

    def test_named_models(self):
        g = cycle_power(30, 2)
        assert true_tte(gen_named_model(g, "null", seed=0)) == 0.0
        assert true_tte(gen_named_model(g, "weak", seed=0)) == pytest.approx(1.0)
        # strong: per-unit d/2 + (d-1)/2 with d = 5
        assert true_tte(gen_named_model(g, "strong", seed=0)) == pytest.approx(4.5)

    def test_equals_global_contrast(self, rng):
        g = random_graph(rng, 12)
        model = random_model(rng, g, 2)
        y1 = evaluate(model, g, np.ones(12, dtype=int))
        y0 = evaluate(model, g, np.zeros(12, dtype=int))
        assert true_tte(model) == pytest.approx(float(np.mean(y1 - y0)), abs=1e-12)


class TestGenCycleModel:
    def test_coefficient_values_degree_seven(self):
        g = cycle_power(120, 3)
        model = gen_cycle_model(g, 2)
        cmap = model.coeffs[0]
        assert cmap[()] == 1.0
        singles = [v for s, v in cmap.items() if len(s) == 1]
        pairs = [v for s, v in cmap.items() if len(s) == 2]
        assert len(singles) == 7 and all(v == pytest.approx(1 / 14) for v in singles)
        assert len(pairs) == 21 and all(v == pytest.approx(1 / 84) for v in pairs)

    def test_order_beyond_degree_rejected(self):
        g = cycle_power(9, 1)
        with pytest.raises(InputError):
            gen_cycle_model(g, 4)


class TestGenNamedModel:
    def test_unknown_kind(self):
        g = cycle_power(6, 1)
        with pytest.raises(InputError):
            gen_named_model(g, "mystery", seed=0)

    def test_seed_reproducibility(self):
        g = cycle_power(12, 1)
        a = gen_named_model(g, "weak", seed=5)
        b = gen_named_model(g, "weak", seed=5)
        assert a.coeffs == b.coeffs
        c = gen_named_model(g, "weak", seed=6)
        assert c.coeffs != a.coeffs

    def test_weak_coefficients(self):
        g = cycle_power(10, 2)
        model = gen_named_model(g, "weak", seed=1)
        cmap = model.coeffs[3]
        assert cmap[(3,)] == 0.5
        for j in g.in_neighbors[3]:
            if j != 3:
                assert cmap[(j,)] == pytest.approx(1 / 8)

    def test_weak_degree_one_unit_keeps_self_effect_only(self):
        # a unit with no neighbors has d_i = 1; the 1/(2(d_i-1)) spillover
        # has no recipients, so its whole effect is the self term
        g = from_edge_list([(1, 2), (2, 1)], 3)
        model = gen_named_model(g, "weak", seed=0)
        nonempty = {s: v for s, v in model.coeffs[0].items() if s}
        assert nonempty == {(0,): 0.5}

    def test_null_model_has_no_interference_terms(self):
        g = cycle_power(8, 1)
        model = gen_named_model(g, "null", seed=2)
        assert all(set(cmap) == {()} for cmap in model.coeffs)

    def test_baseline_scales_with_degree(self):
        edges = [(0, 1), (1, 0), (2, 1), (1, 2)]
        g = from_edge_list(edges, 3)  # degrees 2, 3, 2
        model = gen_named_model(g, "strong", seed=8)
        noise = np.random.default_rng(8).standard_normal(3)
        for i, d in enumerate([2, 3, 2]):
            assert model.coeffs[i][()] == pytest.approx((0.5 + 0.1 * noise[i]) * d / 3)


class TestClusterAggregate:
    def test_singleton_identity(self, rng):
        g = random_graph(rng, 8)
        model = random_model(rng, g, 2)
        agg = cluster_aggregate(model, g, singleton_clustering(8))
        for i in range(8):
            assert agg.x[i] == model.coeffs[i]

    def test_two_neighbors_one_cluster(self):
        g = from_edge_list([(1, 0), (2, 0)], 3)
        model = LowOrderModel(
            beta_star=1,
            coeffs=({(): 0.0, (1,): 0.25, (2,): 0.25}, {(): 0.0}, {(): 0.0}),
        )
        c = Clustering.from_labels([0, 1, 1])
        agg = cluster_aggregate(model, g, c)
        assert agg.x[0][(1,)] == pytest.approx(0.5)

    def test_mixed_cluster_pair_subsets(self):
        # beta_star = 2 with two units in one cluster and one in another:
        # {i}, {i'}, {i,i'} all aggregate into the same single-cluster key
        g = from_edge_list([(1, 0), (2, 0)], 3)
        model = LowOrderModel(
            beta_star=2,
            coeffs=(
                {(): 1.0, (0,): 1.0, (1,): 2.0, (0, 1): 4.0, (2,): 8.0, (0, 2): 16.0, (1, 2): 32.0},
                {(): 0.0},
                {(): 0.0},
            ),
        )
        c = Clustering.from_labels([0, 0, 1])
        agg = cluster_aggregate(model, g, c)
        assert agg.x[0][()] == 1.0
        assert agg.x[0][(0,)] == pytest.approx(1.0 + 2.0 + 4.0)
        assert agg.x[0][(1,)] == pytest.approx(8.0)
        assert agg.x[0][(0, 1)] == pytest.approx(16.0 + 32.0)

    def test_preserves_cluster_constant_outcomes(self, rng):
        g = random_graph(rng, 11)
        c = random_clustering(rng, 11, 4)
        model = random_model(rng, g, 2)
        agg = cluster_aggregate(model, g, c)
        for _ in range(8):
            w = rng.integers(0, 2, size=4)
            z = w[np.asarray(c.assignment)]
            assert np.allclose(
                evaluate_clustered(agg, w), evaluate(model, g, z), atol=1e-12
            )


class TestOutcomeBound:
    def test_flat_baseline(self):
        g = from_edge_list([], 4)
        model = LowOrderModel(beta_star=1, coeffs=tuple({(): 0.5} for _ in range(4)))
        assert outcome_bound(model, g) == 0.5

    def test_cycle_model_first_order(self):
        g = cycle_power(120, 3)
        assert outcome_bound(gen_cycle_model(g, 1), g) == pytest.approx(1.5)

    def test_opposite_signs(self):
        g = from_edge_list([(1, 0), (2, 0)], 3)
        model = LowOrderModel(
            beta_star=1,
            coeffs=({(): 0.0, (1,): 1.0, (2,): -1.0}, {(): 0.0}, {(): 0.0}),
        )
        assert outcome_bound(model, g) == 1.0

    def test_dominates_enumeration(self, rng):
        for trial in range(15):
            gen = np.random.default_rng(trial)
            g = random_graph(gen, 7)
            model = random_model(gen, g, 2)
            B = outcome_bound(model, g)
            worst = max(
                float(np.max(np.abs(evaluate(model, g, np.array(z)))))
                for z in itertools.product((0, 1), repeat=7)
            )
            assert worst <= B + 1e-12

    def test_exact_when_signs_agree(self, rng):
        for trial in range(10):
            gen = np.random.default_rng(100 + trial)
            g = random_graph(gen, 6)
            model = random_model(gen, g, 2, nonnegative=True)
            B = outcome_bound(model, g)
            worst = max(
                float(np.max(np.abs(evaluate(model, g, np.array(z)))))
                for z in itertools.product((0, 1), repeat=6)
            )
            assert worst == pytest.approx(B, abs=1e-12)

    def test_interaction_cancellation_keeps_bound_sound(self):
        # formula brackets at 3 while the true maximum is 1; soundness, not
        # tightness, is the contract
        g = from_edge_list([(1, 0), (2, 0)], 3)
        model = LowOrderModel(
            beta_star=2,
            coeffs=(
                {(): 0.0, (1,): 1.0, (2,): 1.0, (1, 2): -3.0},
                {(): 0.0},
                {(): 0.0},
            ),
        )
        B = outcome_bound(model, g)
        worst = max(
            abs(evaluate(model, g, np.array(z))[0])
            for z in itertools.product((0, 1), repeat=3)
        )
        assert worst == 1.0
        assert B == 3.0


class TestMixedSigns:
    def test_detects_both_signs(self):
        g = from_edge_list([(1, 0)], 2)
        c = singleton_clustering(2)
        pos = LowOrderModel(beta_star=1, coeffs=({(): 0.0, (1,): 1.0}, {(): 0.0}))
        assert not mixed_signs(cluster_aggregate(pos, g, c))
        mixed = LowOrderModel(
            beta_star=1, coeffs=({(): 0.0, (0,): -1.0, (1,): 1.0}, {(): 0.0})
        )
        assert mixed_signs(cluster_aggregate(mixed, g, c))

    def test_baseline_sign_irrelevant(self):
        g = from_edge_list([], 1)
        model = LowOrderModel(beta_star=1, coeffs=({(): -5.0, (0,): 1.0},))
        assert not mixed_signs(cluster_aggregate(model, g, singleton_clustering(1)))


class TestModelFiles:
    def test_round_trip(self, tmp_path, rng):
        g = random_graph(rng, 9)
        model = random_model(rng, g, 2)
        path = tmp_path / "m.tsv"
        save_model(model, str(path))
        back = load_model(str(path), 9)
        assert back.coeffs == model.coeffs
        assert back.beta_star <= model.beta_star

    def test_empty_subset_dash(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("0\t-\t2.5\n0\t0\t1.0\n")
        model = load_model(str(path), 1)
        assert model.coeffs[0][()] == 2.5
        assert model.coeffs[0][(0,)] == 1.0

    def test_beta_star_inferred(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("0\t0,1,2\t1.0\n")
        assert load_model(str(path), 3).beta_star == 3

    def test_missing_baseline_defaults_zero(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("1\t1\t1.0\n")
        model = load_model(str(path), 2)
        assert model.coeffs[0][()] == 0.0
        assert model.coeffs[1][()] == 0.0

    def test_duplicate_subset_names_line(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("0\t-\t1.0\n0\t-\t2.0\n")
        with pytest.raises(InputError, match="line 2"):
            load_model(str(path), 1)

    def test_unit_out_of_range_names_line(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("5\t-\t1.0\n")
        with pytest.raises(InputError, match="line 1"):
            load_model(str(path), 2)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_tte_matches_contrast_property(seed):
    gen = np.random.default_rng(seed)
    g = random_graph(gen, int(gen.integers(2, 12)))
    model = random_model(gen, g, int(gen.integers(1, 3)))
    y1 = evaluate(model, g, np.ones(g.n, dtype=int))
    y0 = evaluate(model, g, np.zeros(g.n, dtype=int))
    assert true_tte(model) == pytest.approx(float(np.mean(y1 - y0)), abs=1e-10)
