from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinvtte import (
    Clustering,
    InputError,
    PositivityError,
    bernoulli_gcr,
    bernoulli_unit,
    complete_gcr,
    crd_beta1_estimate,
    cycle_power,
    draw_from_w,
    enumerate_support,
    evaluate,
    from_edge_list,
    gcr_explicit_estimate,
    gen_cycle_model,
    ht_estimate,
    pinv_estimate,
    sample,
    singleton_clustering,
    true_tte,
)
from pinvtte.estimator import batch_ht_weights, batch_pinv_weights
from conftest import random_clustering, random_graph, random_model


def single_unit():
    g = from_edge_list([], 1)
    d = bernoulli_unit(1, 0.5)
    return g, d


class TestFrozenWeights:
    def test_single_unit_half(self):
        g, d = single_unit()
        for w, expect in [(0, -2.0), (1, 2.0)]:
            br = pinv_estimate(g, [1.0], draw_from_w(d, [w]), d, beta=1)
            assert br.weights[0] == pytest.approx(expect, abs=1e-12)
            assert br.tte_hat == pytest.approx(expect, abs=1e-12)

    def test_explicit_first_order_form(self):
        g = cycle_power(6, 1)
        c = Clustering.from_labels([0, 0, 1, 1, 2, 2])
        p = 0.3
        draw = draw_from_w(bernoulli_gcr(c, p), [1, 0, 1])
        br = gcr_explicit_estimate(g, np.zeros(6), draw, c, p, beta=1)
        w = draw.w
        assign = c.assignment
        for i in range(6):
            ground = sorted({assign[j] for j in g.in_neighbors[i]})
            expect = sum((w[cid] - p) / (p * (1 - p)) for cid in ground)
            assert br.weights[i] == pytest.approx(expect, abs=1e-12)

    def test_ht_inverse_probability_form(self):
        g = cycle_power(6, 1)
        d = bernoulli_unit(6, 0.25)
        draw = draw_from_w(d, [1, 1, 1, 0, 0, 0])
        br = ht_estimate(g, np.ones(6), draw, d)
        # unit 1 fully treated (nbhd {0,1,2}), unit 4 fully control
        assert br.weights[1] == pytest.approx(1 / 0.25**3)
        assert br.weights[4] == pytest.approx(-1 / 0.75**3)
        assert br.weights[0] == 0.0  # mixed neighborhood

    def test_crd_full_contact_weight(self):
        # two clusters, every unit touching both, one treated: weight 2/3
        g = cycle_power(4, 1)
        c = Clustering.from_labels([0, 1, 0, 1])
        br = crd_beta1_estimate(
            g, np.ones(4), draw_from_w(complete_gcr(c, 1), [1, 0]), c, k=1
        )
        assert np.allclose(br.weights, 2.0 / 3.0, atol=1e-14)


class TestRouteEquivalence:
    def test_pinv_matches_explicit_product_form(self, rng):
        for trial in range(10):
            gen = np.random.default_rng(900 + trial)
            n = int(gen.integers(4, 12))
            g = random_graph(gen, n)
            c = random_clustering(gen, n, int(gen.integers(2, n + 1)))
            p = float(gen.uniform(0.1, 0.9))
            beta = int(gen.integers(1, 4))
            d = bernoulli_gcr(c, p)
            Y = gen.standard_normal(n)
            for r in range(5):
                draw = sample(d, trial, r)
                a = pinv_estimate(g, Y, draw, d, beta)
                b = gcr_explicit_estimate(g, Y, draw, c, p, beta)
                assert np.allclose(a.weights, b.weights, atol=1e-10)
                assert a.tte_hat == pytest.approx(b.tte_hat, abs=1e-10)

    def test_pinv_saturated_order_equals_ht(self, rng):
        for trial in range(6):
            gen = np.random.default_rng(40 + trial)
            n = int(gen.integers(3, 9))
            g = random_graph(gen, n)
            d = bernoulli_unit(n, float(gen.uniform(0.2, 0.8)))
            Y = gen.standard_normal(n)
            beta = max(g.degrees)
            for r in range(6):
                draw = sample(d, trial, r)
                a = pinv_estimate(g, Y, draw, d, beta)
                b = ht_estimate(g, Y, draw, d)
                assert np.allclose(a.weights, b.weights, atol=1e-9)

    def test_crd_closed_form_matches_pinv_interior(self, rng):
        # every unit's contact set misses at least one cluster
        g = cycle_power(8, 1)
        c = Clustering.from_labels([i // 2 for i in range(8)])
        d = complete_gcr(c, 2)
        Y = rng.standard_normal(8)
        for r in range(8):
            draw = sample(d, 5, r)
            a = crd_beta1_estimate(g, Y, draw, c, k=2)
            b = pinv_estimate(g, Y, draw, d, beta=1)
            assert np.allclose(a.weights, b.weights, atol=1e-9)

    def test_crd_closed_form_matches_pinv_full_contact(self, rng):
        g = cycle_power(4, 1)
        c = Clustering.from_labels([0, 1, 0, 1])
        d = complete_gcr(c, 1)
        Y = rng.standard_normal(4)
        for _, w in enumerate_support(d):
            draw = draw_from_w(d, w)
            a = crd_beta1_estimate(g, Y, draw, c, k=1)
            b = pinv_estimate(g, Y, draw, d, beta=1)
            assert np.allclose(a.weights, b.weights, atol=1e-9)


class TestUnbiasedness:
    def test_exact_for_well_specified_bernoulli(self, rng):
        gen = np.random.default_rng(123)
        g = random_graph(gen, 6)
        c = random_clustering(gen, 6, 3)
        model = random_model(gen, g, 2)
        d = bernoulli_gcr(c, 0.3)
        mean = math.fsum(
            prob
            * pinv_estimate(
                g, evaluate(model, g, draw_from_w(d, w).z), draw_from_w(d, w), d, 2
            ).tte_hat
            for prob, w in enumerate_support(d)
        )
        assert mean == pytest.approx(true_tte(model), abs=1e-10)

    def test_ht_unbiased_under_positivity(self, rng):
        gen = np.random.default_rng(321)
        g = random_graph(gen, 5)
        model = random_model(gen, g, 2)
        d = bernoulli_unit(5, 0.4)
        mean = math.fsum(
            prob
            * ht_estimate(g, evaluate(model, g, draw_from_w(d, w).z), draw_from_w(d, w), d).tte_hat
            for prob, w in enumerate_support(d)
        )
        assert mean == pytest.approx(true_tte(model), abs=1e-10)


class TestPositivity:
    def test_ht_rejects_full_contact(self):
        g = cycle_power(4, 1)
        c = Clustering.from_labels([0, 1, 0, 1])
        d = complete_gcr(c, 1)
        draw = sample(d, 0, 0)
        with pytest.raises(PositivityError, match="unit 0"):
            ht_estimate(g, np.ones(4), draw, d)

    def test_error_names_failing_side(self):
        g = from_edge_list([(1, 0), (2, 0)], 3)
        c = Clustering.from_labels([0, 1, 2])
        d = complete_gcr(c, 1)
        draw = sample(d, 0, 0)
        # unit 0 touches all 3 clusters; with k=1 it can never be fully treated
        with pytest.raises(PositivityError, match="fully treated"):
            ht_estimate(g, np.ones(3), draw, d)


class TestBatchKernels:
    def test_pinv_batch_matches_per_draw(self, rng):
        gen = np.random.default_rng(7)
        g = random_graph(gen, 8)
        c = random_clustering(gen, 8, 4)
        d = bernoulli_gcr(c, 0.4)
        W = np.stack([sample(d, 1, r).w for r in range(12)])
        batch = batch_pinv_weights(g, d, 2, W)
        for r in range(12):
            per = pinv_estimate(g, np.zeros(8), draw_from_w(d, W[r]), d, 2)
            assert np.allclose(batch[r], per.weights, atol=1e-12)

    def test_ht_batch_matches_per_draw(self, rng):
        gen = np.random.default_rng(8)
        g = random_graph(gen, 7)
        d = bernoulli_unit(7, 0.35)
        W = np.stack([sample(d, 2, r).w for r in range(10)])
        batch = batch_ht_weights(g, d, W)
        for r in range(10):
            per = ht_estimate(g, np.zeros(7), draw_from_w(d, W[r]), d)
            assert np.allclose(batch[r], per.weights, atol=1e-12)

    def test_batch_positivity_guard(self):
        g = cycle_power(4, 1)
        c = Clustering.from_labels([0, 1, 0, 1])
        d = complete_gcr(c, 1)
        W = np.stack([sample(d, 0, r).w for r in range(3)])
        with pytest.raises(PositivityError):
            batch_ht_weights(g, d, W)


class TestContracts:
    def test_breakdown_identity(self, rng):
        g = cycle_power(10, 2)
        model = gen_cycle_model(g, 2)
        d = bernoulli_gcr(singleton_clustering(10), 0.25)
        draw = sample(d, 3, 0)
        Y = evaluate(model, g, draw.z)
        br = pinv_estimate(g, Y, draw, d, 2)
        assert br.tte_hat == pytest.approx(float(np.mean(Y * br.weights)), abs=1e-12)
        assert br.kind == "pinv" and br.beta == 2

    def test_weights_independent_of_outcomes(self, rng):
        g = cycle_power(8, 1)
        d = bernoulli_unit(8, 0.5)
        draw = sample(d, 0, 0)
        a = pinv_estimate(g, rng.standard_normal(8), draw, d, 1)
        b = pinv_estimate(g, rng.standard_normal(8), draw, d, 1)
        assert np.array_equal(a.weights, b.weights)

    def test_linearity_in_outcomes(self, rng):
        g = cycle_power(8, 1)
        d = bernoulli_unit(8, 0.5)
        draw = sample(d, 0, 1)
        Y1, Y2 = rng.standard_normal(8), rng.standard_normal(8)
        t1 = pinv_estimate(g, Y1, draw, d, 1).tte_hat
        t2 = pinv_estimate(g, Y2, draw, d, 1).tte_hat
        tsum = pinv_estimate(g, 2.0 * Y1 + Y2, draw, d, 1).tte_hat
        assert tsum == pytest.approx(2.0 * t1 + t2, abs=1e-10)

    def test_validation_errors(self):
        g = cycle_power(4, 1)
        d = bernoulli_unit(4, 0.5)
        draw = sample(d, 0, 0)
        with pytest.raises(InputError, match="Y has shape"):
            pinv_estimate(g, [1.0, 2.0], draw, d, 1)
        with pytest.raises(InputError, match="beta"):
            pinv_estimate(g, np.ones(4), draw, d, 0)
        with pytest.raises(InputError, match="covers"):
            pinv_estimate(cycle_power(6, 1), np.ones(6), draw, d, 1)
        other = bernoulli_unit(6, 0.5)
        with pytest.raises(InputError, match="clusters"):
            pinv_estimate(g, np.ones(4), sample(other, 0, 0), d, 1)
        with pytest.raises(InputError, match="p="):
            gcr_explicit_estimate(g, np.ones(4), draw, singleton_clustering(4), 1.5, 1)
        with pytest.raises(InputError, match="k="):
            crd_beta1_estimate(g, np.ones(4), draw, singleton_clustering(4), 0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_route_agreement_property(seed):
    gen = np.random.default_rng(seed)
    n = int(gen.integers(2, 9))
    g = random_graph(gen, n)
    m = int(gen.integers(1, n + 1))
    c = random_clustering(gen, n, m)
    p = float(gen.uniform(0.15, 0.85))
    beta = int(gen.integers(1, 3))
    d = bernoulli_gcr(c, p)
    Y = gen.standard_normal(n)
    draw = sample(d, int(gen.integers(0, 1000)), 0)
    a = pinv_estimate(g, Y, draw, d, beta)
    b = gcr_explicit_estimate(g, Y, draw, c, p, beta)
    assert np.allclose(a.weights, b.weights, atol=1e-9)
