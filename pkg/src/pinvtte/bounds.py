"""Exact bias, bias bounds, per-unit variance terms, and variance bounds.

The variance side revolves around the quadratic form theta' M^+ theta over a
unit's cluster moment matrix. Three sources are supported: closed forms
(exact for Bernoulli designs at any order, first-order only for the complete
design, where the closed value also carries the (c+1) scale factor its
variance analysis uses), numeric quadforms from analytic moment matrices,
and quadforms from Monte Carlo moment estimates.

The bias side evaluates the exact bias identity at the cluster level: with
x the cluster-aggregated coefficients, psi the non-empty-row selector, M_w
the cluster moment matrix and Cross the rectangular joint-treatment matrix
between tail subsets and indexed subsets,

    bias_i = <x_i (orders <= beta), (M_w M_w^+ - I) psi>
           + <x_i (orders > beta), Cross M_w^+ psi - 1>.

This is algebraically identical to the unit-level identity because a unit
subset is fully treated exactly when its cluster image is, and it keeps the
computation polynomial when neighborhoods are large but touch few clusters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .clustering import Clustering, ClusterStats
from .design import Design, joint_treat_prob
from .errors import InputError, PreconditionError
from .graph import InterferenceGraph, degree_stats
from .moments import (
    DesignMoments,
    cached_cluster_system,
    cached_index,
    monte_carlo_moments,
    theta_vector,
)
from .outcomes import ClusterAggregatedModel, LowOrderModel, cluster_aggregate, mixed_signs

__all__ = [
    "GammaProfile",
    "BoundReport",
    "BiasBoundGCR",
    "gamma_quadform",
    "gamma_gcr_closed",
    "gamma_gcr_envelope",
    "gamma_crd",
    "gamma_profile",
    "bias_exact",
    "bias_bound_gcr",
    "bias_crd",
    "variance_bound",
]


# ---------------------------------------------------------------------------
# per-unit gamma terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GammaProfile:
    """Per-unit variance contributions.

    gamma_sq holds theta' M^+ theta per unit. scaled is only set for the
    complete design, where the first-order variance analysis multiplies the
    quadform by (c+1); the two conventions are both reported rather than
    reconciled. provenance is "closed_form" or "quadform".
    """

    gamma_sq: np.ndarray
    scaled: np.ndarray | None
    provenance: str


def gamma_quadform(moments: DesignMoments) -> float:
    """theta' M^+ theta for an explicit moments object."""
    th = theta_vector(len(moments.index))
    return float(th @ moments.M_pinv @ th)


def gamma_gcr_closed(c_size: int, beta: int, p: float) -> float:
    """Exact quadform under Bernoulli cluster treatment, in closed form:
    sum over x = 1..min(beta, c) of binom(c, x) [((1-p)/p)^x - 2(-1)^x +
    (p/(1-p))^x]. Symmetric in p and 1-p."""
    if not (0.0 < p < 1.0):
        raise InputError(f"treatment probability p={p} not in (0, 1)")
    if c_size < 0 or beta < 0:
        raise InputError("c_size and beta must be nonnegative")
    r = (1.0 - p) / p
    total = 0.0
    for x in range(1, min(beta, c_size) + 1):
        total += math.comb(c_size, x) * (r**x - 2.0 * (-1.0) ** x + r**-x)
    return total


def gamma_gcr_envelope(c_size: int, beta: int, p: float) -> float:
    """The closed-form dominating envelope 2 min(q^-c, c^beta q^-beta) used
    by the per-pair variance bound for Bernoulli cluster designs.

    q = min(p, 1-p): the exact quadform is symmetric in p and 1-p while the
    raw powers of p are not, so the envelope is evaluated at the smaller
    side. At p above one half the raw-p expression sits below the quadform
    and would not be a bound at all.
    """
    if not (0.0 < p < 1.0):
        raise InputError(f"treatment probability p={p} not in (0, 1)")
    q = min(p, 1.0 - p)
    return 2.0 * min(q ** (-c_size), c_size**beta * q ** (-beta))


def gamma_crd(c_size: int, m: int, k: int) -> tuple[float, float]:
    """First-order quadform and its (c+1)-scaled variant under the complete
    design. The quadform grows in c until the neighborhood spans all m
    clusters, where the rank-deficient pseudoinverse takes over and the
    value drops."""
    if not (1 <= k <= m - 1):
        raise InputError(f"k={k} outside [1, m-1] for m={m}")
    if not (0 <= c_size <= m):
        raise InputError(f"c_size={c_size} outside [0, m]")
    if c_size < m:
        quadform = c_size * (m - 1) * m**2 / (k * (m - k) * (m - c_size))
    else:
        quadform = m**2 * k**2 / (k**2 + m) ** 2
    return quadform, (c_size + 1) * quadform


def gamma_profile(
    stats: ClusterStats,
    d: Design,
    beta: int,
    gamma_source: str = "closed",
    g: InterferenceGraph | None = None,
    mc_samples: int = 2000,
    mc_seed: int = 0,
) -> GammaProfile:
    """Per-unit gamma terms under the requested source.

    "closed" uses the exact closed forms (Bernoulli any order; complete
    design requires beta = 1 and also fills the scaled values). "quadform"
    computes theta' M^+ theta from analytic moment matrices, any design and
    order. "monte_carlo" does the same from estimated moments and needs the
    graph to locate each unit's cluster neighborhood.
    """
    n = stats.n
    gamma_sq = np.empty(n)
    scaled: np.ndarray | None = None
    if gamma_source == "closed":
        if d.is_bernoulli:
            by_c: dict[int, float] = {}
            for i, nb in enumerate(stats.cluster_nbhd):
                c = len(nb)
                if c not in by_c:
                    by_c[c] = gamma_gcr_closed(c, beta, d.p)
                gamma_sq[i] = by_c[c]
        else:
            if beta != 1:
                raise InputError(
                    "closed-form gamma for the complete design is first-order only"
                )
            scaled = np.empty(n)
            for i, nb in enumerate(stats.cluster_nbhd):
                gamma_sq[i], scaled[i] = gamma_crd(len(nb), d.m, d.k)
        provenance = "closed_form"
    elif gamma_source == "quadform":
        by_c = {}
        th_cache: dict[int, np.ndarray] = {}
        for i, nb in enumerate(stats.cluster_nbhd):
            c = len(nb)
            if c not in by_c:
                _, P, _ = cached_cluster_system(d, c, beta)
                th = th_cache.setdefault(P.shape[0], theta_vector(P.shape[0]))
                by_c[c] = float(th @ P @ th)
            gamma_sq[i] = by_c[c]
        provenance = "quadform"
    elif gamma_source == "monte_carlo":
        if g is None:
            raise InputError("monte_carlo gamma needs the interference graph")
        for i in range(n):
            dm = monte_carlo_moments(d, g, i, beta, mc_samples, mc_seed)
            gamma_sq[i] = gamma_quadform(dm)
        provenance = "quadform"
    else:
        raise InputError(f"unknown gamma_source {gamma_source!r}")
    return GammaProfile(gamma_sq=gamma_sq, scaled=scaled, provenance=provenance)


# ---------------------------------------------------------------------------
# bias
# ---------------------------------------------------------------------------


def bias_exact(
    model: LowOrderModel, g: InterferenceGraph, d: Design, beta: int
) -> float:
    """Exact bias of the order-beta pseudoinverse estimator under design d.

    Evaluated per unit at the cluster level (see module docstring). The
    moment and cross matrices are analytic for both supported designs, so
    this never enumerates the assignment support.
    """
    if beta < 1:
        raise InputError(f"estimator order must be at least 1, got beta={beta}")
    if model.n != g.n or d.n != g.n:
        raise InputError("model, graph, and design must agree on n")
    assign = d.clustering.assignment
    total = 0.0
    for i in range(g.n):
        ground = sorted({assign[j] for j in g.in_neighbors[i]})
        c = len(ground)
        rank = {cid: r for r, cid in enumerate(ground)}
        M, _, v = cached_cluster_system(d, c, beta)
        index = cached_index(c, beta)
        theta = theta_vector(len(index))
        proj = M @ v - theta
        x_lo = np.zeros(len(index))
        tail: dict[tuple[int, ...], float] = {}
        for s, val in model.coeffs[i].items():
            u = tuple(sorted({rank[assign[j]] for j in s}))
            if len(s) <= beta:
                x_lo[index.position[u]] += val
            else:
                tail[u] = tail.get(u, 0.0) + val
        contrib = float(x_lo @ proj)
        if tail:
            probs = np.array([joint_treat_prob(d, t) for t in range(c + 1)])
            for u, val in tail.items():
                u_ind = np.zeros(c, dtype=np.int64)
                u_ind[list(u)] = 1
                inter = index.membership @ u_ind
                union_sizes = index.sizes + len(u) - inter
                contrib += val * (float(probs[union_sizes] @ v) - 1.0)
        total += contrib
    return total / g.n


class BiasBoundGCR(NamedTuple):
    """Bias bounds for Bernoulli cluster designs, tightest first.

    refined sums, per unit and per cardinality above beta, the magnitude of
    the signed total of aggregated coefficients; x_norm drops the signed
    cancellation; c_norm ignores cluster aggregation altogether. The chain
    |bias| <= refined <= x_norm <= c_norm always holds.
    """

    x_norm: float
    c_norm: float
    refined: float


def bias_bound_gcr(
    model: LowOrderModel, g: InterferenceGraph, clustering: Clustering, beta: int
) -> BiasBoundGCR:
    """Worst-case bias magnitude of the order-beta estimator under any
    Bernoulli cluster design on this clustering."""
    if clustering.n != g.n or model.n != g.n:
        raise InputError("model, graph, and clustering must agree on n")
    assign = clustering.assignment
    x_total = c_total = refined_total = 0.0
    for i in range(g.n):
        tail: dict[tuple[int, ...], float] = {}
        for s, val in model.coeffs[i].items():
            if len(s) > beta:
                u = tuple(sorted({assign[j] for j in s}))
                tail[u] = tail.get(u, 0.0) + val
                c_total += abs(val)
        by_card: dict[int, float] = {}
        for u, val in tail.items():
            if len(u) > beta:
                x_total += abs(val)
                by_card[len(u)] = by_card.get(len(u), 0.0) + val
        refined_total += sum(abs(v) for v in by_card.values())
    n = g.n
    return BiasBoundGCR(x_total / n, c_total / n, refined_total / n)


def bias_crd(
    agg: ClusterAggregatedModel, stats: ClusterStats, m: int, k: int, B: float
) -> tuple[float, float]:
    """Exact bias and worst-case bound of the first-order estimator under
    the complete design for a first-order model.

    Only units in contact with every cluster contribute: for those,
    bias_i = m (k x_{i,empty} - sum_C x_{i,{C}}) / (k^2 + m). The bound
    multiplies the full-contact fraction by m (k+2) B / (k^2 + m).
    """
    if agg.beta_star != 1:
        raise InputError("complete-design bias formula needs a first-order model")
    if not (1 <= k <= m - 1):
        raise InputError(f"k={k} outside [1, m-1] for m={m}")
    if agg.n != stats.n:
        raise InputError("aggregated model and stats must agree on n")
    n = stats.n
    acc = 0.0
    for i, nb in enumerate(stats.cluster_nbhd):
        if len(nb) != m:
            continue
        xmap = agg.x[i]
        acc += k * xmap.get((), 0.0) - sum(
            val for u, val in xmap.items() if len(u) == 1
        )
    exact = m * acc / ((k**2 + m) * n)
    bound = (stats.full_contact_count / n) * (m * (k + 2) * B / (k**2 + m))
    return exact, bound


# ---------------------------------------------------------------------------
# variance bound report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    """Everything the variance bound knows about one configuration.

    bias_exact and bias_bound are filled only when a model was supplied.
    var_bound_pairwise sums per-pair gamma terms over dependent pairs;
    var_bound_simplified is the closed summary-statistic form (infinite for
    a complete design whose widest neighborhood spans all clusters).
    """

    var_bound_pairwise: float
    var_bound_simplified: float
    bias_exact: float | None
    bias_bound: float | None
    B: float
    C_max: int
    N_max: int
    d_max: int
    n: int
    m: int
    beta: int
    design_variant: str
    p: float | None
    k: int | None
    gamma_source: str
    gamma_provenance: str


def variance_bound(
    g: InterferenceGraph,
    stats: ClusterStats,
    d: Design,
    beta: int,
    B: float,
    gamma_source: str = "closed",
    *,
    model: LowOrderModel | None = None,
    monotone: bool = False,
    mc_samples: int = 2000,
    mc_seed: int = 0,
) -> BoundReport:
    """Worst-case variance bound for outcomes bounded by B.

    The pairwise term is (B^2/n^2) sum over dependent ordered pairs (i, j) of
    gamma_i gamma_j. Dependence is resolved through a cluster-to-units
    inverted index for Bernoulli designs; the complete design couples all
    pairs unless the caller asserts monotone effects, which enables the
    negative-covariance screen on disjoint cluster neighborhoods. Per-pair
    gamma values follow gamma_source: the closed source uses the dominating
    closed forms (Bernoulli: the min envelope; complete: the (c+1)-scaled
    first-order form), while quadform and monte_carlo use theta' M^+ theta
    directly.

    Raises
    ------
    PreconditionError
        If monotone is asserted, a model is supplied, and its aggregated
        coefficients carry mixed signs.
    """
    if B <= 0:
        raise InputError(f"outcome bound B={B} must be positive")
    if stats.n != g.n or d.n != g.n:
        raise InputError("graph, stats, and design must agree on n")
    n = g.n
    agg: ClusterAggregatedModel | None = None
    if model is not None:
        agg = cluster_aggregate(model, g, d.clustering)
    if monotone and agg is not None and mixed_signs(agg):
        raise PreconditionError(
            "monotone effects asserted but aggregated coefficients have mixed signs"
        )

    profile = gamma_profile(
        stats, d, beta, gamma_source, g=g, mc_samples=mc_samples, mc_seed=mc_seed
    )
    if gamma_source == "closed" and d.is_bernoulli:
        by_c: dict[int, float] = {}
        eff = np.empty(n)
        for i, nb in enumerate(stats.cluster_nbhd):
            c = len(nb)
            if c not in by_c:
                by_c[c] = gamma_gcr_envelope(c, beta, d.p)
            eff[i] = by_c[c]
    elif gamma_source == "closed":
        assert profile.scaled is not None
        eff = profile.scaled
    else:
        eff = profile.gamma_sq
    gam = np.sqrt(eff)

    screened = d.is_bernoulli or monotone
    if screened:
        members: list[list[int]] = [[] for _ in range(d.m)]
        for i, nb in enumerate(stats.cluster_nbhd):
            for cid in nb:
                members[cid].append(i)
        member_arrays = [np.array(lst, dtype=np.int64) for lst in members]
        per_unit = np.empty(n)
        for i, nb in enumerate(stats.cluster_nbhd):
            dependents = np.unique(np.concatenate([member_arrays[c] for c in nb]))
            per_unit[i] = gam[i] * gam[dependents].sum()
    else:
        per_unit = gam * gam.sum()
    pairwise = float(B) * float(B) / (n * n) * float(np.add.reduce(per_unit))

    C, N = stats.C_max, stats.N_max
    d_max = degree_stats(g).d_max
    if d.is_bernoulli:
        # evaluated at min(p, 1-p) for the same symmetry reason as the
        # per-unit envelope
        q = min(d.p, 1.0 - d.p)
        simplified = float(
            2.0 * B * B * C * N * d_max / n * min(q**-C, C**beta * q**-beta)
        )
    elif C == d.m:
        simplified = math.inf
    else:
        m, k = d.m, d.k
        frac = k / m
        simplified = float(
            B * B * m * C**3 * N * d_max / (n * frac * (1 - frac) * (m - C))
        )

    bias_val: float | None = None
    bias_bound_val: float | None = None
    if model is not None:
        bias_val = bias_exact(model, g, d, beta)
        if d.is_bernoulli:
            bias_bound_val = bias_bound_gcr(model, g, d.clustering, beta).x_norm
        elif beta == 1 and model.beta_star == 1 and agg is not None:
            bias_bound_val = bias_crd(agg, stats, d.m, d.k, B)[1]

    return BoundReport(
        var_bound_pairwise=pairwise,
        var_bound_simplified=simplified,
        bias_exact=bias_val,
        bias_bound=bias_bound_val,
        B=B,
        C_max=C,
        N_max=N,
        d_max=d_max,
        n=n,
        m=d.m,
        beta=beta,
        design_variant=d.variant,
        p=d.p,
        k=d.k,
        gamma_source=gamma_source,
        gamma_provenance=profile.provenance,
    )
