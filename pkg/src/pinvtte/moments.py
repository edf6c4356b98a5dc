"""Design moment matrices over subset indexes and their pseudoinverses.

Everything here lives at the cluster level. For a unit with cluster
neighborhood of size c, the relevant matrix is indexed by the subsets of
those c clusters up to size beta, in canonical order (empty set first, then
size ascending, lexicographic within a size). Entries are joint treatment
probabilities E[prod_{C in U union V} w_C], which depend only on |U union V|
for both designs in the package, so closed forms are available:

  Bernoulli(p):  entry p^{|U union V|}; the pseudoinverse has entries
                 (-1/p)^{|V|+|W|} sum over indexed supersets X of V union W
                 of (p/(1-p))^{|X|}.
  Complete(m,k): entry is the falling-factorial ratio
                 prod_{l<|U union V|} (k-l)/(m-l); at beta = 1 the inverse
                 (or pseudoinverse, when the neighborhood spans all clusters)
                 is written out explicitly.

Numeric SVD pseudoinversion and Monte Carlo moment estimation cover designs
or orders with no closed form, and double as cross-checks in tests.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .clustering import Clustering
from .design import Design, enumerate_support, sample
from .errors import CapacityError, InputError
from .graph import InterferenceGraph

__all__ = [
    "SubsetIndex",
    "DesignMoments",
    "BlockLift",
    "enumerate_subsets",
    "theta_vector",
    "bern_cluster_moments",
    "crd_cluster_moments",
    "crd_determinant",
    "numeric_pinv",
    "monte_carlo_moments",
    "support_moments",
    "analytic_cluster_moments",
    "cached_cluster_system",
    "cached_index",
    "block_lift",
    "lifted_moments",
    "lifted_pinv",
]

_MAX_INDEX = 1_000_000  # total subsets one index may hold


class SubsetIndex:
    """Canonically ordered subsets of a ground set, capped at size beta.

    Rows are the subsets themselves (tuples of ground elements); `position`
    inverts them. `parent` and `last_pos` link each non-empty subset to the
    row for the subset with its largest element removed, which lets callers
    build all subset products of a vector in one linear sweep.
    """

    def __init__(self, ground: tuple[int, ...], beta: int):
        if beta < 0:
            raise InputError(f"beta must be nonnegative, got {beta}")
        if tuple(sorted(set(ground))) != tuple(ground):
            raise InputError("ground set must be sorted and duplicate-free")
        c = len(ground)
        top = min(beta, c)
        total = sum(math.comb(c, x) for x in range(top + 1))
        if total > _MAX_INDEX:
            raise CapacityError(
                f"subset index would hold {total} rows, over the {_MAX_INDEX} guard"
            )
        subsets: list[tuple[int, ...]] = []
        for size in range(top + 1):
            subsets.extend(itertools.combinations(ground, size))
        self.ground = tuple(ground)
        self.beta = beta
        self.subsets = tuple(subsets)
        self.position = {s: r for r, s in enumerate(subsets)}
        self.sizes = np.array([len(s) for s in subsets], dtype=np.int64)
        pos_of = {g: idx for idx, g in enumerate(ground)}
        q = len(subsets)
        self.parent = np.zeros(q, dtype=np.int64)
        self.last_pos = np.zeros(q, dtype=np.int64)
        for r, s in enumerate(subsets):
            if s:
                self.parent[r] = self.position[s[:-1]]
                self.last_pos[r] = pos_of[s[-1]]
        # 0/1 membership over ground positions, used for union-size algebra
        self.membership = np.zeros((q, c), dtype=np.int64)
        for r, s in enumerate(subsets):
            for g in s:
                self.membership[r, pos_of[g]] = 1

    def __len__(self) -> int:
        return len(self.subsets)

    def union_sizes(self, other: "SubsetIndex | None" = None) -> np.ndarray:
        """Matrix of |U union V| for U in self and V in other (self by
        default). Requires the two indexes to share the ground set."""
        rhs = self if other is None else other
        if rhs.ground != self.ground:
            raise InputError("union sizes need a shared ground set")
        inter = self.membership @ rhs.membership.T
        return self.sizes[:, None] + rhs.sizes[None, :] - inter


def enumerate_subsets(ground, beta: int) -> SubsetIndex:
    """Index all subsets of the ground set with at most beta elements.

    A beta larger than the ground set is legal and yields the full power set.
    """
    return SubsetIndex(tuple(ground), beta)


def theta_vector(q: int) -> np.ndarray:
    """The effect-summing vector over a subset index: zero on the empty
    subset row, one on every other row."""
    theta = np.ones(q)
    theta[0] = 0.0
    return theta


@dataclass(frozen=True)
class DesignMoments:
    """A subset index together with its design moment matrix and a
    pseudoinverse. provenance records how the pseudoinverse was obtained:
    "analytic", "numeric", or "monte_carlo(R)"."""

    index: SubsetIndex
    M: np.ndarray
    M_pinv: np.ndarray
    provenance: str


def bern_cluster_moments(index: SubsetIndex, p: float) -> DesignMoments:
    """Closed-form moments and pseudoinverse for independent cluster
    treatments with probability p."""
    if not (0.0 < p < 1.0):
        raise InputError(f"treatment probability p={p} not in (0, 1)")
    c = len(index.ground)
    top = min(index.beta, c)
    usize = index.union_sizes()
    M = p**usize.astype(np.float64)
    # T[u] = sum over indexed supersets X of a size-u subset of (p/(1-p))^|X|
    r = p / (1.0 - p)
    T = np.zeros(usize.max() + 1)
    for u in range(top + 1):
        T[u] = sum(math.comb(c - u, x - u) * r**x for x in range(u, top + 1))
    sign = (-1.0 / p) ** index.sizes.astype(np.float64)
    P = sign[:, None] * sign[None, :] * T[usize]
    return DesignMoments(index=index, M=M, M_pinv=P, provenance="analytic")


def _crd_ff(m: int, k: int, t: int) -> float:
    num, den = 1.0, 1.0
    for off in range(t):
        num *= k - off
        den *= m - off
    return num / den if num > 0 else 0.0


def crd_cluster_moments(index: SubsetIndex, m: int, k: int) -> DesignMoments:
    """Moments for the design that treats a uniform k-subset of m clusters.

    The matrix entry for (U, V) is the probability that |U union V| specific
    clusters are all treated. With beta = 1 the pseudoinverse is written in
    closed form (ordinary inverse when the ground set misses at least one
    cluster, rank-deficient pseudoinverse when it spans all m); higher orders
    fall back to numeric SVD pseudoinversion.
    """
    if not (1 <= k <= m - 1):
        raise InputError(f"k={k} outside [1, m-1] for m={m}")
    c = len(index.ground)
    if c > m:
        raise InputError(f"ground set has {c} clusters but the design only {m}")
    usize = index.union_sizes()
    ff = np.array([_crd_ff(m, k, t) for t in range(usize.max() + 1)])
    M = ff[usize]
    if index.sizes.max(initial=0) <= 1:
        P = _crd_beta1_pinv(c, m, k)
        return DesignMoments(index=index, M=M, M_pinv=P, provenance="analytic")
    return DesignMoments(
        index=index, M=M, M_pinv=numeric_pinv(M), provenance="numeric"
    )


def _crd_beta1_pinv(c: int, m: int, k: int) -> np.ndarray:
    """Explicit (pseudo)inverse of the (c+1) x (c+1) first-order moment
    matrix: row/column 0 is the empty set, the rest are the c singletons."""
    P = np.zeros((c + 1, c + 1))
    if c < m:
        pref = m * (m - 1) / (k * (m - k) * (m - c))
        P[0, 0] = pref * k * (m + c * (k - 1) - k) / (m - 1)
        P[0, 1:] = P[1:, 0] = -pref * k
        P[1:, 1:] = pref * 1.0
        np.fill_diagonal(P[1:, 1:], pref * (m - (c - 1)))
        return P
    # Full contact: the ground set spans every cluster and the matrix is
    # singular with a one-dimensional null space.
    pref = m / (k * (m - k) * (k**2 + m) ** 2)
    star = (m - 2) * k**4 + k**3 + 2 * (m - 1) ** 2 * k**2 + m * (m - 1) ** 2
    diamond = -(k**4) + k**3 - 2 * (m - 1) * k**2 - m * (m - 1)
    P[0, 0] = pref * m * k * (m - k)
    P[0, 1:] = P[1:, 0] = pref * k**2 * (m - k)
    P[1:, 1:] = pref * diamond
    np.fill_diagonal(P[1:, 1:], pref * star)
    return P


def crd_determinant(m: int, k: int, c_size: int) -> float:
    """Determinant of the first-order moment matrix over c_size clusters
    under the complete design: k^c (m-k)^c (m-c) / (m^{c+1} (m-1)^c).
    Zero exactly when the neighborhood spans all m clusters."""
    if not (1 <= k <= m - 1):
        raise InputError(f"k={k} outside [1, m-1] for m={m}")
    if not (0 <= c_size <= m):
        raise InputError(f"c_size={c_size} outside [0, m]")
    c = c_size
    return (k**c * (m - k) ** c * (m - c)) / (m ** (c + 1) * (m - 1) ** c)


def numeric_pinv(M, tol: float | None = None) -> np.ndarray:
    """SVD pseudoinverse with an explicit truncation threshold.

    Singular values at or below tol are dropped; the default threshold is
    dim * sigma_max * 2^-52, the standard scale below which singular values
    are indistinguishable from rounding noise.

    Raises
    ------
    InputError
        For non-square or non-finite input.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError(f"pseudoinverse needs a square matrix, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InputError("matrix has non-finite entries")
    u, s, vt = np.linalg.svd(M)
    if tol is None:
        tol = M.shape[0] * (s[0] if s.size else 0.0) * 2.0**-52
    keep = s > tol
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (vt.T * inv) @ u.T


def _cluster_ground(d: Design, g: InterferenceGraph, i: int) -> tuple[int, ...]:
    assign = d.clustering.assignment
    return tuple(sorted({assign[j] for j in g.in_neighbors[i]}))


def monte_carlo_moments(
    d: Design, g: InterferenceGraph, i: int, beta: int, R: int, seed: int
) -> DesignMoments:
    """Estimate unit i's cluster moment matrix from R design draws.

    Replicate r uses the (seed, r) stream, so estimates are reproducible and
    draw-parallel. The estimate is symmetrized by averaging with its
    transpose; with this accumulation scheme that is already a no-op, but it
    guards any future estimator that breaks exchangeability. The
    pseudoinverse is numeric.
    """
    if R < 1:
        raise InputError(f"need at least one draw, got R={R}")
    ground = _cluster_ground(d, g, i)
    index = enumerate_subsets(ground, beta)
    cols = np.array(ground, dtype=np.int64)
    W = np.empty((R, len(ground)), dtype=np.float64)
    for r in range(R):
        W[r] = sample(d, seed, r).w[cols]
    counts = W @ index.membership.T.astype(np.float64)
    ind = (counts == index.sizes[None, :]).astype(np.float64)
    M = (ind.T @ ind) / R
    M = (M + M.T) / 2.0
    return DesignMoments(
        index=index, M=M, M_pinv=numeric_pinv(M), provenance=f"monte_carlo({R})"
    )


def support_moments(
    d: Design, g: InterferenceGraph, i: int, beta: int
) -> DesignMoments:
    """Exact moment matrix for unit i by full support enumeration. Slow and
    capacity-guarded; this is the oracle the closed forms are tested against."""
    ground = _cluster_ground(d, g, i)
    index = enumerate_subsets(ground, beta)
    cols = np.array(ground, dtype=np.int64)
    M = np.zeros((len(index), len(index)))
    for prob, w in enumerate_support(d):
        counts = index.membership @ w[cols].astype(np.int64)
        ind = (counts == index.sizes).astype(np.float64)
        M += prob * np.outer(ind, ind)
    return DesignMoments(index=index, M=M, M_pinv=numeric_pinv(M), provenance="numeric")


def analytic_cluster_moments(d: Design, ground, beta: int) -> DesignMoments:
    """Closed-form moments for the given design over an explicit cluster
    ground set."""
    index = enumerate_subsets(ground, beta)
    if d.is_bernoulli:
        return bern_cluster_moments(index, d.p)
    return crd_cluster_moments(index, d.m, d.k)


# Moment systems depend on the neighborhood only through its size, so one
# (variant, parameters, size, beta) entry serves every unit with that shape.
_SYSTEM_CACHE: dict[tuple, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
_INDEX_CACHE: dict[tuple[int, int], SubsetIndex] = {}


def cached_index(c_size: int, beta: int) -> SubsetIndex:
    """Subset index over the canonical ground set 0..c_size-1, cached. Any
    sorted ground set of the same size maps onto it positionally."""
    key = (c_size, beta)
    idx = _INDEX_CACHE.get(key)
    if idx is None:
        idx = enumerate_subsets(tuple(range(c_size)), beta)
        _INDEX_CACHE[key] = idx
    return idx


def cached_cluster_system(
    d: Design, c_size: int, beta: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(M, M_pinv, M_pinv @ theta) for a cluster neighborhood of c_size
    clusters under design d, cached across units and draws."""
    if d.is_bernoulli:
        key = ("bern", d.p, c_size, beta)
    else:
        key = ("crd", d.m, d.k, c_size, beta)
    hit = _SYSTEM_CACHE.get(key)
    if hit is not None:
        return hit
    dm = analytic_cluster_moments(d, tuple(range(c_size)), beta)
    v = dm.M_pinv @ theta_vector(len(dm.index))
    entry = (dm.M, dm.M_pinv, v)
    _SYSTEM_CACHE[key] = entry
    return entry


# ---------------------------------------------------------------------------
# unit-level lift
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockLift:
    """Bookkeeping tying a unit's subset index over N_i to the index over its
    cluster neighborhood.

    row_map[s] is the row of the cluster subset C(S) for unit subset row s.
    heights[u] counts how many unit subsets map to cluster subset row u; the
    empty set maps only to itself, so heights[0] = 1.
    """

    unit_index: SubsetIndex
    cluster_index: SubsetIndex
    row_map: np.ndarray
    heights: np.ndarray


def block_lift(
    g: InterferenceGraph, c: Clustering, i: int, beta: int
) -> BlockLift:
    """Materialize the unit-to-cluster subset correspondence for unit i.

    Heights are computed from the composition formula: for a cluster subset
    U, the count of unit subsets with image U is the number of ways to pick
    at least one neighbor from each cluster of U with at most beta picks in
    total, a truncated product of binomial generating polynomials.
    """
    if c.n != g.n:
        raise InputError(f"clustering over {c.n} units but graph has {g.n}")
    assign = c.assignment
    nbrs = g.in_neighbors[i]
    ground = tuple(sorted({assign[j] for j in nbrs}))
    unit_index = enumerate_subsets(nbrs, beta)
    cluster_index = enumerate_subsets(ground, beta)
    row_map = np.array(
        [
            cluster_index.position[tuple(sorted({assign[j] for j in s}))]
            for s in unit_index.subsets
        ],
        dtype=np.int64,
    )
    # members of each neighborhood cluster, counted once
    overlap = {cid: 0 for cid in ground}
    for j in nbrs:
        overlap[assign[j]] += 1
    heights = np.zeros(len(cluster_index), dtype=np.int64)
    for u_row, u in enumerate(cluster_index.subsets):
        poly = np.zeros(beta + 1, dtype=np.int64)
        poly[0] = 1
        for cid in u:
            nt = overlap[cid]
            factor = np.zeros(beta + 1, dtype=np.int64)
            for a in range(1, min(nt, beta) + 1):
                factor[a] = math.comb(nt, a)
            poly = np.convolve(poly, factor)[: beta + 1]
        heights[u_row] = int(poly.sum())
    return BlockLift(
        unit_index=unit_index,
        cluster_index=cluster_index,
        row_map=row_map,
        heights=heights,
    )


def lifted_moments(lift: BlockLift, cluster_M: np.ndarray) -> np.ndarray:
    """Unit-level moment matrix implied by a cluster-level one: entry (S, T)
    is the cluster entry at (C(S), C(T)), since a unit subset is fully
    treated exactly when its image clusters are."""
    return cluster_M[np.ix_(lift.row_map, lift.row_map)]


def lifted_pinv(lift: BlockLift, cluster_pinv: np.ndarray) -> np.ndarray:
    """Unit-level pseudoinverse from the cluster-level one: the cluster entry
    at (C(S), C(T)) divided by the block heights of C(S) and C(T)."""
    h = lift.heights.astype(np.float64)
    scaled = cluster_pinv / np.outer(h, h)
    return scaled[np.ix_(lift.row_map, lift.row_map)]
