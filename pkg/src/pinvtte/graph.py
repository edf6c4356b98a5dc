"""Interference graphs.

A directed edge (u, v) means unit u's treatment can enter unit v's outcome,
so the object every estimator consumes is the in-neighborhood N_v. Each unit
is always a member of its own neighborhood; constructors enforce the implicit
self-loop so callers never have to remember it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, InputError

__all__ = [
    "InterferenceGraph",
    "DegreeStats",
    "from_edge_list",
    "to_edge_list",
    "cycle_power",
    "sbm_sample",
    "degree_stats",
    "load_edge_list",
    "save_edge_list",
]


@dataclass(frozen=True)
class InterferenceGraph:
    """Immutable in-neighborhood view of an interference network.

    Attributes
    ----------
    n : int
        Number of units, labeled 0..n-1.
    in_neighbors : tuple of tuple of int
        in_neighbors[i] lists every unit whose treatment can affect unit i,
        sorted ascending, always including i itself.
    """

    n: int
    in_neighbors: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise InputError(f"graph needs at least one unit, got n={self.n}")
        if len(self.in_neighbors) != self.n:
            raise InputError(
                f"in_neighbors has {len(self.in_neighbors)} rows for n={self.n}"
            )
        for i, nbrs in enumerate(self.in_neighbors):
            if i not in nbrs:
                raise InputError(f"unit {i} missing from its own neighborhood")
            if any(j < 0 or j >= self.n for j in nbrs):
                raise InputError(f"unit {i} has a neighbor outside [0, {self.n})")
            if tuple(sorted(set(nbrs))) != nbrs:
                raise InputError(f"neighborhood of unit {i} is not sorted and unique")

    @property
    def degrees(self) -> np.ndarray:
        """Neighborhood sizes |N_i| (self included), as an int array."""
        return np.array([len(nbrs) for nbrs in self.in_neighbors], dtype=np.int64)


@dataclass(frozen=True)
class DegreeStats:
    d_max: int
    d_mean: float


def _finish(n: int, nbr_sets: list[set[int]]) -> InterferenceGraph:
    # Self-loops are implicit in the model; force them here.
    for i in range(n):
        nbr_sets[i].add(i)
    return InterferenceGraph(n, tuple(tuple(sorted(s)) for s in nbr_sets))


def from_edge_list(edges: list[tuple[int, int]], n: int) -> InterferenceGraph:
    """Build a graph from directed (src, dst) pairs on n units.

    Each pair states that src's treatment reaches dst. Duplicate pairs are
    collapsed and self-loops are added for every unit regardless of input.

    Raises
    ------
    InputError
        If an endpoint falls outside [0, n); the message carries the
        0-based index of the offending pair.
    """
    if n <= 0:
        raise InputError(f"graph needs at least one unit, got n={n}")
    nbr_sets: list[set[int]] = [set() for _ in range(n)]
    for idx, (src, dst) in enumerate(edges):
        if not (0 <= src < n) or not (0 <= dst < n):
            raise InputError(
                f"edge {idx}: endpoint ({src}, {dst}) out of range for n={n}"
            )
        nbr_sets[dst].add(src)
    return _finish(n, nbr_sets)


def to_edge_list(g: InterferenceGraph) -> list[tuple[int, int]]:
    """All directed (src, dst) pairs except the implicit self-loops."""
    return [(j, i) for i in range(g.n) for j in g.in_neighbors[i] if j != i]


def cycle_power(n: int, r: int) -> InterferenceGraph:
    """Cycle power graph: unit i is affected by the r nearest units on each
    side of the cycle, so |N_i| = 2r + 1 for every unit.

    Raises
    ------
    GeometryError
        If r < 0 or n <= 2r, in which case the wrap-around neighborhoods
        would collide with themselves.
    """
    if r < 0:
        raise GeometryError(f"cycle power radius must be nonnegative, got r={r}")
    if n <= 2 * r:
        raise GeometryError(f"cycle power needs n > 2r, got n={n}, r={r}")
    nbrs = []
    for i in range(n):
        window = sorted((i + off) % n for off in range(-r, r + 1))
        nbrs.append(tuple(window))
    return InterferenceGraph(n, tuple(nbrs))


def sbm_sample(
    n: int, num_blocks: int, pi_in: float, pi_out: float, seed: int
) -> InterferenceGraph:
    """Sample a symmetric stochastic block model with equal contiguous blocks.

    Units [0, n) are split into num_blocks contiguous blocks of size
    n / num_blocks. Each unordered pair {i, j} is connected independently
    with probability pi_in when the two units share a block and pi_out
    otherwise; a realized connection adds both directed edges.

    Parameters
    ----------
    seed : int
        Feeds numpy's default_rng; the same seed always yields the same graph.

    Raises
    ------
    GeometryError
        If num_blocks does not divide n.
    InputError
        If either probability falls outside [0, 1].
    """
    if num_blocks <= 0 or n % num_blocks != 0:
        raise GeometryError(
            f"num_blocks={num_blocks} must be positive and divide n={n}"
        )
    for name, val in (("pi_in", pi_in), ("pi_out", pi_out)):
        if not (0.0 <= val <= 1.0):
            raise InputError(f"{name}={val} is not a probability")
    size = n // num_blocks
    block = np.repeat(np.arange(num_blocks), size)
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(block[iu] == block[ju], pi_in, pi_out)
    keep = rng.random(iu.size) < prob
    nbr_sets: list[set[int]] = [set() for _ in range(n)]
    for i, j in zip(iu[keep], ju[keep]):
        nbr_sets[int(i)].add(int(j))
        nbr_sets[int(j)].add(int(i))
    return _finish(n, nbr_sets)


def degree_stats(g: InterferenceGraph) -> DegreeStats:
    deg = g.degrees
    return DegreeStats(d_max=int(deg.max()), d_mean=float(deg.mean()))


# ---------------------------------------------------------------------------
# text round-trip: "n=<count>" header, then one "src<TAB>dst" line per edge
# ---------------------------------------------------------------------------


def save_edge_list(g: InterferenceGraph, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"n={g.n}\n")
        for src, dst in to_edge_list(g):
            fh.write(f"{src}\t{dst}\n")


def load_edge_list(path: str) -> InterferenceGraph:
    """Read a graph saved by save_edge_list.

    Lines starting with '#' and blank lines are skipped. The first payload
    line must be the "n=<count>" header. Malformed lines raise InputError
    with their 1-based line number.
    """
    n: int | None = None
    edges: list[tuple[int, int]] = []
    edge_lines: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if n is None:
                if not line.startswith("n="):
                    raise InputError(f"line {lineno}: expected 'n=<count>' header")
                try:
                    n = int(line[2:])
                except ValueError:
                    raise InputError(f"line {lineno}: bad unit count {line[2:]!r}")
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise InputError(f"line {lineno}: expected 'src<TAB>dst'")
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise InputError(f"line {lineno}: non-integer endpoint")
            edge_lines.append(lineno)
    if n is None:
        raise InputError("missing 'n=<count>' header")
    try:
        return from_edge_list(edges, n)
    except InputError as exc:
        # Re-map the edge index in the message to the file's line number.
        msg = str(exc)
        if msg.startswith("edge "):
            idx = int(msg.split()[1].rstrip(":"))
            raise InputError(f"line {edge_lines[idx]}: {msg.split(': ', 1)[1]}")
        raise
