"""Edge weights for compatible matching and half-approximate weighted matching.

The coarsening pairs unknowns by a maximum product matching on the weights

    c_ij = 1 - 2 a_ij w_i w_j / (a_ii w_i^2 + a_jj w_j^2),

turned into a maximum *weight* problem through a log transform.  The matching
itself is the locally dominant (suitor) matching, which is maximal and
carries at least half the optimal weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .sparse import SparseMatrix

__all__ = [
    "WeightedGraph",
    "Matching",
    "compute_edge_weights",
    "to_additive_weights",
    "suitor_matching",
    "exact_matching_oracle",
]

UNMATCHED = -1
ORACLE_MAX_VERTICES = 16


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Undirected graph on ``n`` vertices; edge k joins ``ei[k] < ej[k]``."""

    n: int
    ei: np.ndarray
    ej: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        ei = np.asarray(self.ei, dtype=np.int64)
        ej = np.asarray(self.ej, dtype=np.int64)
        w = np.asarray(self.weights, dtype=np.float64)
        if not (ei.shape == ej.shape == w.shape):
            raise ValueError("edge arrays must have equal length")
        if np.any(ei >= ej):
            raise ValueError("edges must satisfy i < j (no self-loops)")
        if ei.size and (ei.min() < 0 or ej.max() >= self.n):
            raise ValueError("edge endpoint out of range")
        if not np.all(np.isfinite(w)):
            raise ValueError("edge weights must be finite")
        key = ei * self.n + ej
        if np.unique(key).size != key.size:
            raise ValueError("duplicate edge")
        object.__setattr__(self, "ei", ei)
        object.__setattr__(self, "ej", ej)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_edges(cls, n: int, edges) -> "WeightedGraph":
        """From an iterable of ``(i, j, weight)``; endpoints may be in any order."""
        edges = list(edges)
        if not edges:
            return cls(n, np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))
        i, j, w = (np.array(col) for col in zip(*edges))
        return cls(n, np.minimum(i, j), np.maximum(i, j), w.astype(np.float64))

    @property
    def nedges(self) -> int:
        return self.ei.size

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return list(zip(self.ei.tolist(), self.ej.tolist(), self.weights.tolist()))

    def adjacency(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Symmetric CSR adjacency (offsets, neighbours, weights), neighbours sorted."""
        src = np.concatenate([self.ei, self.ej])
        dst = np.concatenate([self.ej, self.ei])
        wt = np.concatenate([self.weights, self.weights])
        order = np.lexsort((dst, src))
        offsets = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=self.n), out=offsets[1:])
        return offsets, dst[order], wt[order]

    def with_weights(self, weights) -> "WeightedGraph":
        return WeightedGraph(self.n, self.ei, self.ej, weights)


@dataclass(frozen=True, eq=False)
class Matching:
    """``mate[i]`` is the partner of ``i`` or ``UNMATCHED``."""

    mate: np.ndarray
    total_weight: float

    @property
    def n(self) -> int:
        return self.mate.size

    def pairs(self) -> list[tuple[int, int]]:
        i = np.flatnonzero(self.mate > np.arange(self.n))
        return list(zip(i.tolist(), self.mate[i].tolist()))

    @property
    def npairs(self) -> int:
        return int(np.count_nonzero(self.mate > np.arange(self.n)))

    @property
    def nsingletons(self) -> int:
        return int(np.count_nonzero(self.mate == UNMATCHED))


def compute_edge_weights(a: SparseMatrix, w) -> WeightedGraph:
    """Weight graph of a symmetric matrix for the smooth vector ``w``.

    Edges whose weight is exactly zero, or whose denominator vanishes because
    ``w`` is zero on both endpoints, are left out.
    """
    w = np.asarray(w, dtype=np.float64)
    if a.nrows != a.ncols:
        raise ValueError("matrix must be square")
    if w.size != a.nrows:
        raise ValueError(f"weight vector has length {w.size}, matrix has {a.nrows} rows")
    rows = a.row_indices()
    cols = a.col_indices
    upper = cols > rows
    i, j, aij = rows[upper], cols[upper], a.values[upper]
    d = a.diagonal()
    denom = d[i] * w[i] ** 2 + d[j] * w[j] ** 2
    num = 2.0 * aij * w[i] * w[j]
    bad = (denom == 0.0) & (w[i] != 0.0) & (w[j] != 0.0)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise ValueError(f"zero diagonal on both endpoints of edge ({i[k]}, {j[k]})")
    keep = denom != 0.0
    c = np.zeros_like(num)
    c[keep] = 1.0 - num[keep] / denom[keep]
    keep &= c != 0.0
    return WeightedGraph(a.nrows, i[keep], j[keep], c[keep])


def to_additive_weights(g: WeightedGraph) -> WeightedGraph:
    """Map |c| to log|c| - log(min|c|) + 1: monotone, and >= 1 everywhere."""
    if g.nedges == 0:
        return g
    mag = np.abs(g.weights)
    if np.any(mag == 0.0):
        raise ValueError("zero edge weight has no logarithm")
    return g.with_weights(np.log(mag) - np.log(mag.min()) + 1.0)


@nb.njit(cache=True, inline="always")
def _beats(w1, a1, b1, w2, a2, b2):
    # strict total order on edges: weight, then lower endpoints win ties
    if w1 != w2:
        return w1 > w2
    lo1, hi1 = min(a1, b1), max(a1, b1)
    lo2, hi2 = min(a2, b2), max(a2, b2)
    if lo1 != lo2:
        return lo1 < lo2
    return hi1 < hi2


@nb.njit(cache=True)
def _suitor(offsets, nbrs, wts):
    n = offsets.size - 1
    suitor = np.full(n, -1, dtype=np.int64)
    ws = np.full(n, -np.inf)
    for u in range(n):
        current = u
        done = False
        while not done:
            partner = -1
            best = -np.inf
            for k in range(offsets[current], offsets[current + 1]):
                v = nbrs[k]
                wt = wts[k]
                if partner >= 0 and not _beats(wt, current, v, best, current, partner):
                    continue
                s = suitor[v]
                if s >= 0 and not _beats(wt, current, v, ws[v], s, v):
                    continue
                partner = v
                best = wt
            done = True
            if partner >= 0:
                y = suitor[partner]
                suitor[partner] = current
                ws[partner] = best
                if y >= 0:
                    current = y
                    done = False
    mate = np.full(n, -1, dtype=np.int64)
    for u in range(n):
        s = suitor[u]
        if s >= 0 and suitor[s] == u:
            mate[u] = s
    return mate


def _matching_weight(g: WeightedGraph, mate: np.ndarray) -> float:
    if g.nedges == 0:
        return 0.0
    sel = mate[g.ei] == g.ej
    return float(g.weights[sel].sum())


def suitor_matching(g: WeightedGraph) -> Matching:
    """Locally dominant matching, computed with the sequential suitor scheme.

    Edges are totally ordered by weight, ties going to the edge with the lower
    smaller endpoint and then the lower larger endpoint; each vertex therefore
    prefers its lowest-index partner among equally heavy candidates.  The
    result is the unique matching in which every edge is the heaviest
    remaining edge at both of its endpoints, independent of processing order.
    """
    if g.nedges and np.any(g.weights <= 0.0):
        raise ValueError("suitor matching needs strictly positive weights")
    offsets, nbrs, wts = g.adjacency()
    mate = _suitor(offsets, nbrs, wts)
    return Matching(mate, _matching_weight(g, mate))


def exact_matching_oracle(g: WeightedGraph) -> Matching:
    """Maximum weight matching by exhaustive search (testing only, n <= 16)."""
    n = g.n
    if n > ORACLE_MAX_VERTICES:
        raise ValueError(f"oracle limited to {ORACLE_MAX_VERTICES} vertices, got {n}")
    adj = [dict() for _ in range(n)]
    for i, j, wt in g.edges:
        adj[i][j] = wt
        adj[j][i] = wt
    full = (1 << n) - 1
    best: dict[int, tuple[float, tuple]] = {}

    def solve(used: int) -> tuple[float, tuple]:
        if used == full:
            return 0.0, ()
        if used in best:
            return best[used]
        v = (~used & full & -(~used & full)).bit_length() - 1  # lowest free vertex
        result = solve(used | (1 << v))
        for u, wt in adj[v].items():
            if not used >> u & 1:
                sub_w, sub_p = solve(used | (1 << v) | (1 << u))
                if sub_w + wt > result[0]:
                    result = (sub_w + wt, sub_p + ((v, u),))
        best[used] = result
        return result

    weight, pairs = solve(0)
    mate = np.full(n, UNMATCHED, dtype=np.int64)
    for v, u in pairs:
        mate[v], mate[u] = u, v
    return Matching(mate, float(weight))
