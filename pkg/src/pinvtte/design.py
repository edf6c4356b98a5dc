"""Randomized treatment designs over clusters.

All three designs in the package assign treatment at the cluster level and
broadcast it to units; unit-level Bernoulli randomization is the singleton
clustering as a special case. Draws are indexed by (seed, replicate) through
counter-style generator construction, so replicate r of a run can be
regenerated in isolation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .clustering import Clustering, ClusterStats, singleton_clustering
from .errors import CapacityError, InputError

__all__ = [
    "Design",
    "AssignmentDraw",
    "bernoulli_unit",
    "bernoulli_gcr",
    "complete_gcr",
    "sample",
    "draw_from_w",
    "enumerate_support",
    "pair_dependence",
    "joint_treat_prob",
    "joint_control_prob",
]

# enumerate_support hard guards
_MAX_BERN_CLUSTERS = 20  # 2^20 support points
_MAX_CRD_SUPPORT = 1_000_000


@dataclass(frozen=True)
class Design:
    """A cluster-randomized design.

    variant is one of "bernoulli_unit", "bernoulli_gcr", "complete_gcr".
    Bernoulli designs treat each cluster independently with probability p;
    the complete design treats a uniformly random k-subset of the m clusters.
    """

    variant: str
    clustering: Clustering
    p: float | None = None
    k: int | None = None

    def __post_init__(self) -> None:
        if self.variant in ("bernoulli_unit", "bernoulli_gcr"):
            if self.p is None or not (0.0 < self.p < 1.0):
                raise InputError(f"treatment probability p={self.p} not in (0, 1)")
            if self.k is not None:
                raise InputError("bernoulli designs take no k")
        elif self.variant == "complete_gcr":
            m = self.clustering.m
            if self.k is None or not (1 <= self.k <= m - 1):
                raise InputError(f"k={self.k} outside [1, m-1] for m={m} clusters")
            if self.p is not None:
                raise InputError("complete design takes no p")
        else:
            raise InputError(f"unknown design variant {self.variant!r}")

    @property
    def m(self) -> int:
        return self.clustering.m

    @property
    def n(self) -> int:
        return self.clustering.n

    @property
    def is_bernoulli(self) -> bool:
        return self.variant != "complete_gcr"


@dataclass(frozen=True)
class AssignmentDraw:
    """One realized assignment: cluster treatments w and their unit lift z."""

    w: np.ndarray
    z: np.ndarray


def bernoulli_unit(n: int, p: float) -> Design:
    return Design("bernoulli_unit", singleton_clustering(n), p=p)


def bernoulli_gcr(c: Clustering, p: float) -> Design:
    return Design("bernoulli_gcr", c, p=p)


def complete_gcr(c: Clustering, k: int) -> Design:
    return Design("complete_gcr", c, k=k)


def draw_from_w(d: Design, w) -> AssignmentDraw:
    """Lift a cluster assignment to units via the design's clustering."""
    w = np.asarray(w, dtype=np.int8)
    if w.shape != (d.m,):
        raise InputError(f"w has shape {w.shape}, expected ({d.m},)")
    z = w[np.asarray(d.clustering.assignment)]
    return AssignmentDraw(w=w, z=z)


def sample(d: Design, seed: int, replicate: int) -> AssignmentDraw:
    """Draw the assignment for one replicate.

    The stream for (seed, replicate) is independent of how many other
    replicates are drawn, so parallel workers and re-runs agree.
    """
    if seed < 0 or replicate < 0:
        raise InputError("seed and replicate must be nonnegative")
    rng = np.random.default_rng([seed, replicate])
    if d.is_bernoulli:
        w = (rng.random(d.m) < d.p).astype(np.int8)
    else:
        w = np.zeros(d.m, dtype=np.int8)
        w[rng.choice(d.m, size=d.k, replace=False)] = 1
    return draw_from_w(d, w)


def enumerate_support(d: Design) -> list[tuple[float, np.ndarray]]:
    """All (probability, w) pairs of the design, in a fixed deterministic
    order. Probabilities sum to 1 exactly up to float rounding.

    Raises
    ------
    CapacityError
        Bernoulli supports are capped at 2^20 points (m <= 20); complete
        designs at binom(m, k) <= 1e6.
    """
    m = d.m
    if d.is_bernoulli:
        if m > _MAX_BERN_CLUSTERS:
            raise CapacityError(
                f"bernoulli support needs 2^{m} points, over the 2^{_MAX_BERN_CLUSTERS} guard"
            )
        p = d.p
        out = []
        for bits in range(2**m):
            w = np.array([(bits >> c) & 1 for c in range(m)], dtype=np.int8)
            t = int(w.sum())
            out.append((p**t * (1.0 - p) ** (m - t), w))
        return out
    count = math.comb(m, d.k)
    if count > _MAX_CRD_SUPPORT:
        raise CapacityError(
            f"complete design support has {count} points, over the {_MAX_CRD_SUPPORT} guard"
        )
    prob = 1.0 / count
    out = []
    for chosen in itertools.combinations(range(m), d.k):
        w = np.zeros(m, dtype=np.int8)
        w[list(chosen)] = 1
        out.append((prob, w))
    return out


def pair_dependence(d: Design, stats: ClusterStats, i: int, j: int) -> bool:
    """Whether the treatment vectors restricted to N_i and N_j can be
    statistically dependent under the design.

    Bernoulli designs make disjoint cluster neighborhoods independent; the
    complete design couples every pair through the fixed treatment count.
    """
    if d.is_bernoulli:
        return bool(set(stats.cluster_nbhd[i]) & set(stats.cluster_nbhd[j]))
    return True


def joint_treat_prob(d: Design, t: int) -> float:
    """Probability that t specific clusters are all treated."""
    if t < 0:
        raise InputError("subset size must be nonnegative")
    if d.is_bernoulli:
        return d.p**t
    num, den = 1.0, 1.0
    for off in range(t):
        num *= d.k - off
        den *= d.m - off
    return num / den if num > 0 else 0.0


def joint_control_prob(d: Design, t: int) -> float:
    """Probability that t specific clusters are all untreated."""
    if t < 0:
        raise InputError("subset size must be nonnegative")
    if d.is_bernoulli:
        return (1.0 - d.p) ** t
    num, den = 1.0, 1.0
    for off in range(t):
        num *= d.m - d.k - off
        den *= d.m - off
    return num / den if num > 0 else 0.0
