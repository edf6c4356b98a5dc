"""Treatment effect estimators.

Every estimator here is linear in the observed outcomes: it assigns each unit
a weight computed from the realized assignment and averages Y_i * weight_i.
The returned breakdown keeps the per-unit weights so callers can audit or
recombine them.

Four routes are implemented independently and cross-checked in tests:

  pinv_estimate          moment-matrix route, any design: weight_i is the
                         inner product of M^+ theta with the realized subset
                         products over unit i's cluster neighborhood
  gcr_explicit_estimate  product route for Bernoulli cluster designs, via
                         elementary symmetric polynomial sums
  ht_estimate            Horvitz-Thompson full-neighborhood route
  crd_beta1_estimate     closed first-order weights for the complete design
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import Clustering
from .design import AssignmentDraw, Design, joint_control_prob, joint_treat_prob
from .errors import InputError, PositivityError
from .graph import InterferenceGraph
from .moments import SubsetIndex, cached_cluster_system, cached_index

__all__ = [
    "EstimateBreakdown",
    "pinv_estimate",
    "gcr_explicit_estimate",
    "ht_estimate",
    "crd_beta1_estimate",
]


@dataclass(frozen=True)
class EstimateBreakdown:
    """One estimate with its per-unit weights; tte_hat = mean(Y * weights)."""

    kind: str
    beta: int | None
    tte_hat: float
    weights: np.ndarray


def _subset_products(index: SubsetIndex, wg: np.ndarray) -> np.ndarray:
    """Products of wg over every indexed subset, via the parent links."""
    out = np.empty(len(index))
    out[0] = 1.0
    for r in range(1, len(index)):
        out[r] = out[index.parent[r]] * wg[index.last_pos[r]]
    return out


def _subset_products_batch(index: SubsetIndex, Wg: np.ndarray) -> np.ndarray:
    """Row-parallel version of _subset_products for an (R, c) draw matrix."""
    out = np.empty((Wg.shape[0], len(index)))
    out[:, 0] = 1.0
    for r in range(1, len(index)):
        out[:, r] = out[:, index.parent[r]] * Wg[:, index.last_pos[r]]
    return out


def _check_lengths(g: InterferenceGraph, Y, draw: AssignmentDraw, d: Design) -> np.ndarray:
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != (g.n,):
        raise InputError(f"Y has shape {Y.shape}, expected ({g.n},)")
    if d.n != g.n:
        raise InputError(f"design covers {d.n} units but graph has {g.n}")
    if draw.w.shape != (d.m,):
        raise InputError(f"draw has {draw.w.shape[0]} clusters, design has {d.m}")
    return Y


def _cluster_grounds(g: InterferenceGraph, c: Clustering) -> list[np.ndarray]:
    assign = c.assignment
    return [
        np.array(sorted({assign[j] for j in g.in_neighbors[i]}), dtype=np.int64)
        for i in range(g.n)
    ]


def pinv_estimate(
    g: InterferenceGraph, Y, draw: AssignmentDraw, d: Design, beta: int
) -> EstimateBreakdown:
    """Pseudoinverse estimator of order beta.

    Unit i's weight is <M^+ theta, w~> where M is the design moment matrix
    over subsets of i's cluster neighborhood (size <= beta), theta selects
    the non-empty rows, and w~ holds the realized products of cluster
    treatments. Works for any design the moments module can describe; no
    positivity is required.
    """
    Y = _check_lengths(g, Y, draw, d)
    if beta < 1:
        raise InputError(f"estimator order must be at least 1, got beta={beta}")
    w = draw.w.astype(np.float64)
    weights = np.empty(g.n)
    for i, ground in enumerate(_cluster_grounds(g, d.clustering)):
        c_size = ground.size
        _, _, v = cached_cluster_system(d, c_size, beta)
        index = cached_index(c_size, beta)
        prods = _subset_products(index, w[ground])
        weights[i] = float(prods @ v)
    tte_hat = float(np.mean(Y * weights))
    return EstimateBreakdown(kind="pinv", beta=beta, tte_hat=tte_hat, weights=weights)


def _elementary_symmetric_sum(vals: np.ndarray, beta: int) -> float:
    """Sum of elementary symmetric polynomials e_0 + ... + e_beta of vals."""
    e = np.zeros(min(beta, vals.size) + 1)
    e[0] = 1.0
    for j, v in enumerate(vals):
        top = min(beta, j + 1, e.size - 1)
        for x in range(top, 0, -1):
            e[x] += e[x - 1] * v
    return float(e.sum())


def gcr_explicit_estimate(
    g: InterferenceGraph,
    Y,
    draw: AssignmentDraw,
    clustering: Clustering,
    p: float,
    beta: int,
) -> EstimateBreakdown:
    """Product-form pseudoinverse weights for Bernoulli cluster designs.

    The weight is the difference of two truncated products over unit i's
    cluster neighborhood, sum_{|U| <= beta} [prod_{C in U} (w_C - p)/p -
    prod_{C in U} (w_C - p)/(p - 1)], evaluated by elementary symmetric
    polynomial recursion rather than subset enumeration.
    """
    if not (0.0 < p < 1.0):
        raise InputError(f"treatment probability p={p} not in (0, 1)")
    if beta < 1:
        raise InputError(f"estimator order must be at least 1, got beta={beta}")
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != (g.n,):
        raise InputError(f"Y has shape {Y.shape}, expected ({g.n},)")
    w = draw.w.astype(np.float64)
    weights = np.empty(g.n)
    for i, ground in enumerate(_cluster_grounds(g, clustering)):
        centered = w[ground] - p
        weights[i] = _elementary_symmetric_sum(
            centered / p, beta
        ) - _elementary_symmetric_sum(centered / (p - 1.0), beta)
    tte_hat = float(np.mean(Y * weights))
    return EstimateBreakdown(
        kind="gcr_explicit", beta=beta, tte_hat=tte_hat, weights=weights
    )


def ht_estimate(
    g: InterferenceGraph, Y, draw: AssignmentDraw, d: Design
) -> EstimateBreakdown:
    """Horvitz-Thompson estimator on full neighborhood exposure.

    Raises
    ------
    PositivityError
        If some unit's neighborhood can never be fully treated or fully
        untreated under the design (only possible for the complete design).
    """
    Y = _check_lengths(g, Y, draw, d)
    w = draw.w
    weights = np.empty(g.n)
    for i, ground in enumerate(_cluster_grounds(g, d.clustering)):
        c_size = ground.size
        p1 = joint_treat_prob(d, c_size)
        p0 = joint_control_prob(d, c_size)
        if p1 == 0.0 or p0 == 0.0:
            side = "treated" if p1 == 0.0 else "untreated"
            raise PositivityError(
                f"unit {i} has zero probability of a fully {side} neighborhood"
            )
        treated = int(w[ground].sum())
        weights[i] = (treated == c_size) / p1 - (treated == 0) / p0
    tte_hat = float(np.mean(Y * weights))
    return EstimateBreakdown(kind="ht", beta=None, tte_hat=tte_hat, weights=weights)


def crd_beta1_estimate(
    g: InterferenceGraph, Y, draw: AssignmentDraw, clustering: Clustering, k: int
) -> EstimateBreakdown:
    """Closed-form first-order weights under the complete design.

    For a unit touching c of the m clusters the weight is a rescaled sum of
    centered cluster treatments; units in contact with every cluster use the
    rank-deficient pseudoinverse form instead.
    """
    m = clustering.m
    if not (1 <= k <= m - 1):
        raise InputError(f"k={k} outside [1, m-1] for m={m}")
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != (g.n,):
        raise InputError(f"Y has shape {Y.shape}, expected ({g.n},)")
    w = draw.w.astype(np.float64)
    weights = np.empty(g.n)
    for i, ground in enumerate(_cluster_grounds(g, clustering)):
        c_size = ground.size
        if c_size < m:
            pref = m * m * (m - 1) / (k * (m - k) * (m - c_size))
            weights[i] = pref * float(np.sum(w[ground] - k / m))
        else:
            pref = m * k * k / (k * k + m) ** 2
            weights[i] = pref * float(np.sum(w[ground] + 1.0 / k))
    tte_hat = float(np.mean(Y * weights))
    return EstimateBreakdown(kind="crd1", beta=1, tte_hat=tte_hat, weights=weights)


# ---------------------------------------------------------------------------
# batched weight kernels for the experiment harness
# ---------------------------------------------------------------------------
#
# These share the per-unit math with the public functions above but take a
# full (R, m) matrix of cluster draws, so a replication sweep costs one pass
# over units instead of one pass per draw. Equality with the public
# per-draw functions is pinned by tests.


def batch_pinv_weights(
    g: InterferenceGraph, d: Design, beta: int, W: np.ndarray
) -> np.ndarray:
    if beta < 1:
        raise InputError(f"estimator order must be at least 1, got beta={beta}")
    R = W.shape[0]
    weights = np.empty((R, g.n))
    Wf = W.astype(np.float64)
    for i, ground in enumerate(_cluster_grounds(g, d.clustering)):
        c_size = ground.size
        _, _, v = cached_cluster_system(d, c_size, beta)
        index = cached_index(c_size, beta)
        prods = _subset_products_batch(index, Wf[:, ground])
        weights[:, i] = prods @ v
    return weights


def batch_ht_weights(g: InterferenceGraph, d: Design, W: np.ndarray) -> np.ndarray:
    R = W.shape[0]
    weights = np.empty((R, g.n))
    for i, ground in enumerate(_cluster_grounds(g, d.clustering)):
        c_size = ground.size
        p1 = joint_treat_prob(d, c_size)
        p0 = joint_control_prob(d, c_size)
        if p1 == 0.0 or p0 == 0.0:
            side = "treated" if p1 == 0.0 else "untreated"
            raise PositivityError(
                f"unit {i} has zero probability of a fully {side} neighborhood"
            )
        treated = W[:, ground].sum(axis=1)
        weights[:, i] = (treated == c_size) / p1 - (treated == 0) / p0
    return weights
