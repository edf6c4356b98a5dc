"""Low-order potential outcome models.

Outcomes are multilinear in the treatment vector: unit i's response is a
sparse combination of products of treatments over subsets of its neighborhood,
with subset order capped at beta_star. The empty subset carries the baseline
(the outcome under global control) and is always present.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .clustering import Clustering
from .errors import CapacityError, InputError
from .graph import InterferenceGraph

__all__ = [
    "LowOrderModel",
    "ClusterAggregatedModel",
    "evaluate",
    "evaluate_clustered",
    "true_tte",
    "gen_cycle_model",
    "gen_named_model",
    "cluster_aggregate",
    "outcome_bound",
    "mixed_signs",
    "load_model",
    "save_model",
]

# One flat-array cache per model holds at most this many subset keys.
_MAX_KEYS = 2_000_000


@dataclass(frozen=True, eq=True)
class _FlatModel:
    """Vectorized view of a sparse model: one row per non-empty subset."""

    owner: np.ndarray  # unit owning each subset
    members: np.ndarray  # padded member matrix; pad index means "always 1"
    values: np.ndarray
    baseline: np.ndarray
    pad: int


@dataclass(frozen=True)
class LowOrderModel:
    """Sparse potential-outcome model of order beta_star.

    coeffs[i] maps sorted member tuples S (subsets of N_i, here only checked
    for order and size) to the real coefficient multiplying prod_{j in S} z_j
    in unit i's outcome. The empty tuple key holds the baseline Y_i(0).
    """

    beta_star: int
    coeffs: tuple[dict[tuple[int, ...], float], ...]
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.beta_star < 0:
            raise InputError(f"beta_star must be nonnegative, got {self.beta_star}")
        for i, cmap in enumerate(self.coeffs):
            if () not in cmap:
                raise InputError(f"unit {i} has no baseline (empty subset) entry")
            for s in cmap:
                if len(s) > self.beta_star:
                    raise InputError(
                        f"unit {i}: subset {s} exceeds beta_star={self.beta_star}"
                    )
                if tuple(sorted(set(s))) != s:
                    raise InputError(f"unit {i}: subset key {s} not sorted unique")

    @property
    def n(self) -> int:
        return len(self.coeffs)

    def _flat(self, g: InterferenceGraph) -> _FlatModel:
        """Build (once) the flat arrays used by vectorized evaluation, and
        validate subset membership against the graph while doing so."""
        if "flat" in self._cache:
            return self._cache["flat"]
        if self.n != g.n:
            raise InputError(f"model has {self.n} units but graph has {g.n}")
        owners: list[int] = []
        rows: list[tuple[int, ...]] = []
        vals: list[float] = []
        baseline = np.zeros(self.n)
        width = max(self.beta_star, 1)
        total = sum(len(cmap) for cmap in self.coeffs)
        if total > _MAX_KEYS:
            raise CapacityError(
                f"model holds {total} subset keys, over the {_MAX_KEYS} flat-cache guard"
            )
        for i, cmap in enumerate(self.coeffs):
            nbrs = set(g.in_neighbors[i])
            for s, val in cmap.items():
                if not set(s) <= nbrs:
                    raise InputError(f"unit {i}: subset {s} not within its neighborhood")
                if s == ():
                    baseline[i] = val
                else:
                    owners.append(i)
                    rows.append(s + (g.n,) * (width - len(s)))
                    vals.append(val)
        flat = _FlatModel(
            owner=np.array(owners, dtype=np.int64),
            members=np.array(rows, dtype=np.int64).reshape(len(rows), width),
            values=np.array(vals, dtype=np.float64),
            baseline=baseline,
            pad=g.n,
        )
        self._cache["flat"] = flat
        return flat


@dataclass(frozen=True)
class ClusterAggregatedModel:
    """Coefficients re-keyed by the clusters their subsets touch.

    x[i] maps sorted cluster-id tuples U to x_{i,U}, the sum of c_{i,S} over
    keyed subsets S whose members' clusters are exactly U.
    """

    beta_star: int
    x: tuple[dict[tuple[int, ...], float], ...]

    @property
    def n(self) -> int:
        return len(self.x)


def evaluate(model: LowOrderModel, g: InterferenceGraph, z) -> np.ndarray:
    """Outcome vector under treatment assignment z (entries 0/1)."""
    z = np.asarray(z)
    if z.shape != (g.n,):
        raise InputError(f"z has shape {z.shape}, expected ({g.n},)")
    zf = z.astype(np.float64)
    if not np.all((zf == 0.0) | (zf == 1.0)):
        raise InputError("z entries must be 0 or 1")
    flat = model._flat(g)
    y = flat.baseline.copy()
    if flat.values.size:
        zpad = np.append(zf, 1.0)
        prods = zpad[flat.members].prod(axis=1)
        y += np.bincount(flat.owner, weights=flat.values * prods, minlength=g.n)
    return y


def evaluate_clustered(agg: ClusterAggregatedModel, w) -> np.ndarray:
    """Outcome vector from cluster-aggregated coefficients under a
    cluster-level assignment w. Only valid when every unit's treatment is
    cluster-constant, where Y_i = sum_U x_{i,U} prod_{C in U} w_C."""
    w = np.asarray(w, dtype=np.float64)
    out = np.zeros(agg.n)
    for i, xmap in enumerate(agg.x):
        acc = 0.0
        for u, val in xmap.items():
            term = val
            for cid in u:
                term *= w[cid]
            acc += term
        out[i] = acc
    return out


def true_tte(model: LowOrderModel) -> float:
    """Exact total treatment effect: the average over units of the sum of
    non-empty coefficients."""
    total = 0.0
    for cmap in model.coeffs:
        total += sum(val for s, val in cmap.items() if s)
    return total / model.n


def gen_cycle_model(g: InterferenceGraph, beta_star: int) -> LowOrderModel:
    """Ring response model: every k-subset of N_i gets coefficient
    binom(d_i, k)^{-1} 2^{-k}, so each order k contributes exactly 2^{-k}
    to every unit's treatment effect, and the baseline is 1."""
    deg = g.degrees
    if beta_star < 1 or beta_star > int(deg.min()):
        raise InputError(
            f"beta_star={beta_star} must lie in [1, min degree={int(deg.min())}]"
        )
    total_keys = 0
    coeffs = []
    for i in range(g.n):
        d = len(g.in_neighbors[i])
        cmap: dict[tuple[int, ...], float] = {(): 1.0}
        for k in range(1, beta_star + 1):
            coef = (0.5**k) / _binom(d, k)
            for s in itertools.combinations(g.in_neighbors[i], k):
                cmap[s] = coef
        total_keys += len(cmap)
        if total_keys > _MAX_KEYS:
            raise CapacityError(
                f"cycle model would exceed the {_MAX_KEYS} subset-key guard"
            )
        coeffs.append(cmap)
    return LowOrderModel(beta_star=beta_star, coeffs=tuple(coeffs))


def _binom(a: int, b: int) -> int:
    import math

    return math.comb(a, b)


def gen_named_model(g: InterferenceGraph, kind: str, seed: int) -> LowOrderModel:
    """The three first-order benchmark models (null, weak, strong).

    All share a baseline (0.5 + 0.1 * standard normal) * d_i / d_max drawn in
    unit order from default_rng(seed), so models with the same seed agree
    across designs.

      null    no interference coefficients; TTE = 0
      weak    c_{i,{i}} = 1/2 and c_{i,{j}} = 1/(2(d_i - 1)); TTE_i = 1
              whenever d_i >= 2
      strong  c_{i,{i}} = d_i/2 and c_{i,{j}} = 1/2; TTE_i grows with degree
    """
    if kind not in ("null", "weak", "strong"):
        raise InputError(f"unknown model kind {kind!r}")
    deg = g.degrees
    d_max = int(deg.max())
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(g.n)
    coeffs = []
    for i in range(g.n):
        d = int(deg[i])
        cmap: dict[tuple[int, ...], float] = {
            (): float((0.5 + 0.1 * noise[i]) * d / d_max)
        }
        if kind == "weak":
            cmap[(i,)] = 0.5
            for j in g.in_neighbors[i]:
                if j != i:
                    cmap[(j,)] = 1.0 / (2.0 * (d - 1))
        elif kind == "strong":
            cmap[(i,)] = d / 2.0
            for j in g.in_neighbors[i]:
                if j != i:
                    cmap[(j,)] = 0.5
        coeffs.append(cmap)
    return LowOrderModel(beta_star=1, coeffs=tuple(coeffs))


def cluster_aggregate(
    model: LowOrderModel, g: InterferenceGraph, c: Clustering
) -> ClusterAggregatedModel:
    """Sum coefficients over subsets with the same cluster image.

    x_{i,U} collects every keyed c_{i,S} whose members' clusters are exactly
    the set U, including the baseline at U = ().
    """
    if c.n != g.n or model.n != g.n:
        raise InputError("model, graph, and clustering must agree on n")
    assign = c.assignment
    rows = []
    for i in range(g.n):
        nbrs = set(g.in_neighbors[i])
        xmap: dict[tuple[int, ...], float] = {}
        for s, val in model.coeffs[i].items():
            if not set(s) <= nbrs:
                raise InputError(f"unit {i}: subset {s} not within its neighborhood")
            u = tuple(sorted({assign[j] for j in s}))
            xmap[u] = xmap.get(u, 0.0) + val
        rows.append(xmap)
    return ClusterAggregatedModel(beta_star=model.beta_star, x=tuple(rows))


def outcome_bound(model: LowOrderModel, g: InterferenceGraph) -> float:
    """Uniform outcome magnitude bound B with |Y_i(z)| <= B for all i, z.

    Multilinearity brackets each unit's outcome between the baseline plus all
    negative coefficients and the sum of all positive ones, so the bound is
    max over units of max(sum of positive coefficients, |baseline + sum of
    negative non-empty coefficients|). The bracket is attained whenever the
    non-empty coefficients share a sign (in particular for any first-order
    model).
    """
    model._flat(g)  # validates subsets against the graph
    best = 0.0
    for cmap in model.coeffs:
        pos = sum(v for v in cmap.values() if v > 0)
        low = cmap[()] + sum(v for s, v in cmap.items() if s and v < 0)
        best = max(best, pos, abs(low))
    return float(best)


def mixed_signs(agg: ClusterAggregatedModel) -> bool:
    """True when the non-empty aggregated coefficients contain both strictly
    positive and strictly negative entries."""
    has_pos = has_neg = False
    for xmap in agg.x:
        for u, val in xmap.items():
            if not u:
                continue
            if val > 0:
                has_pos = True
            elif val < 0:
                has_neg = True
    return has_pos and has_neg


# ---------------------------------------------------------------------------
# text round-trip: "unit<TAB>comma-separated-subset<TAB>value", empty subset
# written as "-"
# ---------------------------------------------------------------------------


def save_model(model: LowOrderModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, cmap in enumerate(model.coeffs):
            for s in sorted(cmap, key=lambda t: (len(t), t)):
                key = ",".join(str(j) for j in s) if s else "-"
                fh.write(f"{i}\t{key}\t{cmap[s]!r}\n")


def load_model(path: str, n: int) -> LowOrderModel:
    """Read a model saved by save_model. The order bound is inferred as the
    largest subset size present (at least 1); missing baselines default to 0."""
    coeffs: list[dict[tuple[int, ...], float]] = [dict() for _ in range(n)]
    beta_star = 1
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise InputError(f"line {lineno}: expected 'unit<TAB>subset<TAB>value'")
            try:
                unit = int(parts[0])
                subset = (
                    ()
                    if parts[1] == "-"
                    else tuple(sorted(int(tok) for tok in parts[1].split(",")))
                )
                value = float(parts[2])
            except ValueError:
                raise InputError(f"line {lineno}: malformed field")
            if not (0 <= unit < n):
                raise InputError(f"line {lineno}: unit {unit} out of range for n={n}")
            if subset in coeffs[unit]:
                raise InputError(f"line {lineno}: duplicate subset for unit {unit}")
            coeffs[unit][subset] = value
            beta_star = max(beta_star, len(subset))
    for cmap in coeffs:
        cmap.setdefault((), 0.0)
    return LowOrderModel(beta_star=beta_star, coeffs=tuple(coeffs))
