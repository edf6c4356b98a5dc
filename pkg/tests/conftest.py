"""Shared instance factories for the test suite.

Randomized tests draw small instances from these helpers with explicit
numpy generators, so every test is reproducible from its own seed.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from pinvtte import Clustering, InterferenceGraph, LowOrderModel


def random_graph(rng: np.random.Generator, n: int, extra_max: int = 3) -> InterferenceGraph:
    """Directed graph on n units; every unit keeps itself plus up to
    extra_max random in-neighbors."""
    nbrs = []
    for i in range(n):
        count = int(rng.integers(0, min(extra_max, n - 1) + 1))
        others = [j for j in range(n) if j != i]
        extra = rng.choice(others, size=count, replace=False) if count else []
        nbrs.append(tuple(sorted({i, *map(int, extra)})))
    return InterferenceGraph(n=n, in_neighbors=tuple(nbrs))


def random_clustering(rng: np.random.Generator, n: int, m: int) -> Clustering:
    """Surjective assignment of n units onto exactly m clusters."""
    labels = rng.integers(0, m, size=n)
    labels[rng.permutation(n)[:m]] = np.arange(m)
    return Clustering.from_labels(labels)


def random_model(
    rng: np.random.Generator,
    g: InterferenceGraph,
    beta_star: int,
    keep: float = 0.6,
    nonnegative: bool = False,
    scale: float = 1.0,
) -> LowOrderModel:
    """Sparse coefficients on random neighborhood subsets up to beta_star.

    Every unit keeps a baseline; each candidate subset survives with
    probability keep. nonnegative=True yields a monotone instance (all
    coefficients, baseline included, are >= 0).
    """
    coeffs = []
    for i in range(g.n):
        base = float(rng.normal(0.0, 0.4)) * scale
        cmap = {(): abs(base) if nonnegative else base}
        nbrs = g.in_neighbors[i]
        for size in range(1, beta_star + 1):
            for S in itertools.combinations(nbrs, size):
                if rng.random() < keep:
                    val = float(rng.normal(0.0, 1.0)) * scale
                    cmap[S] = abs(val) if nonnegative else val
        coeffs.append(cmap)
    return LowOrderModel(beta_star=beta_star, coeffs=tuple(coeffs))


def ensure_tail(
    rng: np.random.Generator, model: LowOrderModel, g: InterferenceGraph, beta: int
) -> LowOrderModel:
    """Guarantee at least one coefficient of order > beta (a genuinely
    misspecified instance); adds one if the random draw left none."""
    if any(len(s) > beta for cmap in model.coeffs for s in cmap):
        return model
    for i in range(g.n):
        nbrs = g.in_neighbors[i]
        if len(nbrs) > beta:
            cmap = dict(model.coeffs[i])
            cmap[tuple(nbrs[: beta + 1])] = float(rng.normal(0.0, 1.0))
            coeffs = list(model.coeffs)
            coeffs[i] = cmap
            return LowOrderModel(
                beta_star=max(model.beta_star, beta + 1), coeffs=tuple(coeffs)
            )
    raise AssertionError("no unit has a neighborhood larger than beta")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260818)
