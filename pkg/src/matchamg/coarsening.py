"""Aggregation coarsening by compatible weighted matching.

One pairwise sweep matches the adjacency graph of ``A`` and merges each pair
into an aggregate whose prolongator column is the normalized restriction of
``w``.  Composing ``m`` sweeps gives aggregates of up to ``2**m`` unknowns;
the composite prolongator may additionally be smoothed by one damped Jacobi
step before the Galerkin product.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .matching import (Matching, compute_edge_weights, suitor_matching,
                       to_additive_weights)
from .sparse import (BlockPartition, DimensionError, SparseMatrix, dinv_a_inf_norm,
                     galerkin)

__all__ = [
    "Prolongator",
    "Level",
    "Hierarchy",
    "CoarseningConfig",
    "pairwise_prolongator",
    "compose_sweeps",
    "smooth_prolongator",
    "restrict_weight",
    "build_hierarchy",
    "operator_complexity",
    "kcycle_operator_complexity",
]

_TINY = 1e-300


@dataclass(frozen=True, eq=False)
class Prolongator:
    matrix: SparseMatrix
    aggregate_of: np.ndarray
    smoothed: bool = False

    @property
    def n(self) -> int:
        return self.matrix.nrows

    @property
    def nc(self) -> int:
        return self.matrix.ncols

    def apply(self, xc) -> np.ndarray:
        return self.matrix.to_scipy() @ xc

    def restrict(self, x) -> np.ndarray:
        return self.matrix.to_scipy().T @ x

    def aggregate_sizes(self) -> np.ndarray:
        return np.bincount(self.aggregate_of, minlength=self.nc)


@dataclass(frozen=True)
class CoarseningConfig:
    sweeps_per_level: int = 3
    smooth_prolongator: bool = False
    max_coarse_size: Optional[int] = None  # None: 200 * number of blocks
    max_levels: int = 20
    min_coarsening_ratio: float = 1.2

    def __post_init__(self):
        if self.sweeps_per_level < 1:
            raise ValueError("sweeps_per_level must be >= 1")
        if self.max_coarse_size is not None and self.max_coarse_size < 1:
            raise ValueError("max_coarse_size must be >= 1")
        if self.max_levels < 1:
            raise ValueError("max_levels must be >= 1")


@dataclass(frozen=True, eq=False)
class Level:
    a: SparseMatrix
    w: np.ndarray
    partition: BlockPartition
    p_to_coarser: Optional[Prolongator] = None
    # unsmoothed prolongator; equals p_to_coarser when no smoothing is applied
    p_tentative: Optional[Prolongator] = None

    @property
    def n(self) -> int:
        return self.a.nrows


@dataclass(eq=False)
class Hierarchy:
    levels: list[Level]
    config: CoarseningConfig = field(default_factory=CoarseningConfig)

    @property
    def nl(self) -> int:
        return len(self.levels)

    @property
    def sizes(self) -> list[int]:
        return [lvl.n for lvl in self.levels]

    @property
    def nnz(self) -> list[int]:
        return [lvl.a.nnz for lvl in self.levels]

    def coarsening_ratios(self) -> list[float]:
        s = self.sizes
        return [s[i] / s[i + 1] for i in range(len(s) - 1)]

    def average_coarsening_ratio(self) -> float:
        """Mean of n_l / n_{l+1} over the nl - 1 level transitions (1.0 for one level)."""
        cr = self.coarsening_ratios()
        return float(np.mean(cr)) if cr else 1.0

    def summary(self) -> dict:
        cr = self.coarsening_ratios()
        return {
            "nl": self.nl,
            "opc": operator_complexity(self),
            "kopc": kcycle_operator_complexity(self),
            "avg_cr": self.average_coarsening_ratio(),
            "levels": [
                {"level": l, "n": lvl.n, "nnz": lvl.a.nnz,
                 "nblocks": lvl.partition.nblocks,
                 "cr": cr[l] if l < len(cr) else None}
                for l, lvl in enumerate(self.levels)
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.summary(), **kw)


def pairwise_prolongator(m: Matching, w) -> Prolongator:
    """Prolongator of one matching: pairs first (by smaller member), then
    singletons, each column the unit-norm restriction of ``w``.

    An aggregate on which ``w`` vanishes gets the unit vector at its lowest
    member instead.
    """
    w = np.asarray(w, dtype=np.float64)
    n = m.n
    if w.size != n:
        raise DimensionError(f"weight vector has length {w.size}, matching has {n} vertices")
    idx = np.arange(n)
    first = np.flatnonzero(m.mate > idx)
    second = m.mate[first]
    single = np.flatnonzero(m.mate < 0)
    npairs = first.size
    nc = npairs + single.size

    wi, wj = w[first], w[second]
    norm = np.hypot(wi, wj)
    zero = norm < _TINY
    safe = np.where(zero, 1.0, norm)
    vi = np.where(zero, 1.0, wi / safe)
    vj = np.where(zero, 0.0, wj / safe)
    ws = w[single]
    vs = np.where(np.abs(ws) < _TINY, 1.0, np.sign(ws))

    agg = np.empty(n, dtype=np.int64)
    agg[first] = np.arange(npairs)
    agg[second] = np.arange(npairs)
    agg[single] = npairs + np.arange(single.size)
    rows = np.concatenate([first, second, single])
    vals = np.concatenate([vi, vj, vs])
    mat = SparseMatrix.from_coo(rows, agg[rows], vals, (n, nc))
    return Prolongator(mat, agg, smoothed=False)


def restrict_weight(p: Prolongator, w) -> np.ndarray:
    """Coarse weight P^T w (tentative prolongators only)."""
    if p.smoothed:
        raise ValueError("restrict the weight with the unsmoothed prolongator")
    w = np.asarray(w, dtype=np.float64)
    if w.size != p.n:
        raise DimensionError(f"weight vector has length {w.size}, prolongator has {p.n} rows")
    return p.restrict(w)


def _compose(p1: Prolongator, p2: Prolongator) -> Prolongator:
    mat = SparseMatrix.from_scipy(p1.matrix.to_scipy() @ p2.matrix.to_scipy())
    return Prolongator(mat, p2.aggregate_of[p1.aggregate_of], smoothed=False)


def _identity_prolongator(n: int) -> Prolongator:
    return Prolongator(SparseMatrix.identity(n), np.arange(n, dtype=np.int64))


def compose_sweeps(a: SparseMatrix, w, m_sweeps: int):
    """Run ``m_sweeps`` pairwise aggregation sweeps.

    Returns ``(P, A_c, w_c)``.  Sweeps stop early when a matching is empty;
    if the very first one is, ``P`` is the identity.
    """
    if m_sweeps < 1:
        raise ValueError("m_sweeps must be >= 1")
    w_cur = np.asarray(w, dtype=np.float64)
    a_cur = a
    total = None
    for _ in range(m_sweeps):
        g = to_additive_weights(compute_edge_weights(a_cur, w_cur))
        match = suitor_matching(g)
        if match.npairs == 0:
            break
        p = pairwise_prolongator(match, w_cur)
        a_cur = galerkin(p.matrix, a_cur)
        w_cur = restrict_weight(p, w_cur)
        total = p if total is None else _compose(total, p)
    if total is None:
        total = _identity_prolongator(a.nrows)
    return total, a_cur, w_cur


def smooth_prolongator(a: SparseMatrix, p: Prolongator) -> Prolongator:
    """(I - omega D^{-1} A) P with omega = 1 / ||D^{-1} A||_inf.

    A diagonal ``a`` leaves ``p`` unchanged: the smoothing step would
    annihilate it.
    """
    if a.nrows != a.ncols or a.nrows != p.n:
        raise DimensionError("smooth_prolongator: shape mismatch")
    d = a.diagonal()
    if np.any(d == 0.0):
        raise ZeroDivisionError("zero diagonal entry")
    if a.nnz == np.count_nonzero(d):
        return p
    omega = 1.0 / dinv_a_inf_norm(a)
    ps = p.matrix.to_scipy()
    ap = a.to_scipy() @ ps
    pbar = ps - sp.diags(omega / d) @ ap
    return Prolongator(SparseMatrix.from_scipy(pbar), p.aggregate_of, smoothed=True)


def _renumber(p: Prolongator, a_c: SparseMatrix, w_c: np.ndarray):
    """Order aggregates by their lowest fine index (block-contiguous for any
    contiguous fine partition)."""
    nc = p.nc
    lowest = np.full(nc, p.n, dtype=np.int64)
    np.minimum.at(lowest, p.aggregate_of, np.arange(p.n))
    order = np.argsort(lowest, kind="stable")
    inv = np.empty(nc, dtype=np.int64)
    inv[order] = np.arange(nc)
    pm = p.matrix.to_scipy().tocoo()
    pnew = SparseMatrix.from_coo(pm.row, inv[pm.col], pm.data, (p.n, nc))
    am = a_c.to_scipy().tocoo()
    anew = SparseMatrix.from_coo(inv[am.row], inv[am.col], am.data, (nc, nc),
                                 symmetric=a_c.symmetric_hint)
    return (Prolongator(pnew, inv[p.aggregate_of], p.smoothed), anew,
            w_c[order], lowest[order])


def _coarse_partition(part: BlockPartition, lowest: np.ndarray) -> BlockPartition:
    counts = np.bincount(part.block_of(lowest), minlength=part.nblocks)
    counts = counts[counts > 0]
    return BlockPartition(np.concatenate([[0], np.cumsum(counts)]))


def build_hierarchy(a: SparseMatrix, w, part: BlockPartition | None = None,
                    cfg: CoarseningConfig | None = None) -> Hierarchy:
    """Recursive matching-based coarsening down to the coarse size target."""
    cfg = cfg or CoarseningConfig()
    part = part or BlockPartition.single(a.nrows)
    w = np.asarray(w, dtype=np.float64)
    if a.nrows != a.ncols:
        raise DimensionError("matrix must be square")
    if part.n != a.nrows or w.size != a.nrows:
        raise DimensionError("partition / weight vector do not match the matrix")
    if np.any(a.diagonal() <= 0.0):
        raise ValueError("matrix is not s.p.d.: non-positive diagonal entry")
    if not np.any(w):
        raise ValueError("weight vector is identically zero")
    maxsize = cfg.max_coarse_size or 200 * part.nblocks

    levels: list[Level] = []
    cur_a, cur_w, cur_part = a, w, part
    while True:
        if cur_a.nrows <= maxsize or len(levels) + 1 >= cfg.max_levels:
            break
        p, a_c, w_c = compose_sweeps(cur_a, cur_w, cfg.sweeps_per_level)
        if cur_a.nrows / p.nc < cfg.min_coarsening_ratio:
            break
        p, a_c, w_c, lowest = _renumber(p, a_c, w_c)
        transfer = p
        if cfg.smooth_prolongator:
            transfer = smooth_prolongator(cur_a, p)
            if transfer.smoothed:
                a_c = galerkin(transfer.matrix, cur_a)
        levels.append(Level(cur_a, cur_w, cur_part, transfer, p))
        cur_a, cur_w = a_c, w_c
        cur_part = _coarse_partition(cur_part, lowest)
    levels.append(Level(cur_a, cur_w, cur_part))
    return Hierarchy(levels, cfg)


def operator_complexity(h: Hierarchy) -> float:
    nnz = np.array(h.nnz, dtype=np.float64)
    return float(nnz.sum() / nnz[0])


def kcycle_operator_complexity(h: Hierarchy) -> float:
    nnz = np.array(h.nnz, dtype=np.float64)
    return float((2.0 ** np.arange(nnz.size) * nnz).sum() / nnz[0])
