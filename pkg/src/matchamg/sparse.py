"""CSR sparse matrices, row-block partitions and the kernel algebra.

Every matrix is kept in canonical CSR form: sorted column indices inside each
row, no duplicates and no explicitly stored zeros.  The numerical kernels are
delegated to :mod:`scipy.sparse`, which sums each output row in stored
(ascending column) order, so results are deterministic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SparseMatrix",
    "BlockPartition",
    "DimensionError",
    "spmv",
    "spgemm",
    "transpose",
    "galerkin",
    "dinv_a_inf_norm",
]

SYMMETRY_RTOL = 1e-12


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


def _canonical(m: sp.spmatrix) -> sp.csr_matrix:
    c = sp.csr_matrix(m, dtype=np.float64, copy=True)
    c.sum_duplicates()
    c.eliminate_zeros()
    c.sort_indices()
    c.indptr = c.indptr.astype(np.int64, copy=False)
    c.indices = c.indices.astype(np.int64, copy=False)
    return c


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Immutable square-or-rectangular real matrix in canonical CSR form.

    Use the ``from_*`` constructors; they canonicalize.  ``symmetric_hint``
    records that the matrix is known to be symmetric.
    """

    nrows: int
    ncols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    symmetric_hint: bool = False
    _csr: Optional[sp.csr_matrix] = field(default=None, repr=False, compare=False)

    # -- constructors -----------------------------------------------------
    @classmethod
    def from_scipy(cls, m, symmetric: bool = False) -> "SparseMatrix":
        c = _canonical(m)
        for arr in (c.indptr, c.indices, c.data):
            arr.setflags(write=False)
        out = cls(c.shape[0], c.shape[1], c.indptr, c.indices, c.data,
                  bool(symmetric), c)
        if symmetric and not out.is_symmetric():
            raise ValueError("symmetric_hint set on a matrix that is not symmetric "
                             "within 1e-14 relative")
        return out

    @classmethod
    def from_dense(cls, a, symmetric: bool = False) -> "SparseMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(a, dtype=np.float64)),
                              symmetric)

    @classmethod
    def from_coo(cls, rows, cols, vals, shape, symmetric: bool = False) -> "SparseMatrix":
        """Build from triplets; duplicate entries are summed."""
        m = sp.coo_matrix((np.asarray(vals, dtype=np.float64),
                           (np.asarray(rows), np.asarray(cols))), shape=shape)
        return cls.from_scipy(m, symmetric)

    @classmethod
    def from_csr_arrays(cls, nrows, ncols, row_offsets, col_indices, values,
                        symmetric: bool = False) -> "SparseMatrix":
        m = sp.csr_matrix((values, col_indices, row_offsets), shape=(nrows, ncols))
        return cls.from_scipy(m, symmetric)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls.from_scipy(sp.identity(n, format="csr"), symmetric=True)

    # -- views --------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    def to_scipy(self) -> sp.csr_matrix:
        """The backing scipy matrix.  Treat it as read-only."""
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()

    def row_indices(self) -> np.ndarray:
        """Row index of every stored entry (COO row array)."""
        return np.repeat(np.arange(self.nrows, dtype=np.int64),
                         np.diff(self.row_offsets))

    def max_abs(self) -> float:
        return float(np.abs(self.values).max()) if self.nnz else 0.0

    def asymmetry(self) -> float:
        """max |a_ij - a_ji| over all entries."""
        if self.nrows != self.ncols:
            raise DimensionError("asymmetry is only defined for square matrices")
        d = self._csr - self._csr.T
        return float(abs(d).max()) if d.nnz else 0.0

    def is_symmetric(self, rtol: float = 1e-14) -> bool:
        if self.nrows != self.ncols:
            return False
        return self.asymmetry() <= rtol * max(self.max_abs(), 1e-300)

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return spgemm(self, other)
        return spmv(self, other)

    def __repr__(self) -> str:
        return (f"SparseMatrix({self.nrows}x{self.ncols}, nnz={self.nnz}, "
                f"symmetric_hint={self.symmetric_hint})")


@dataclass(frozen=True)
class BlockPartition:
    """Contiguous row blocks; block p owns ``[offsets[p], offsets[p+1])``."""

    block_offsets: np.ndarray

    def __post_init__(self):
        off = np.asarray(self.block_offsets, dtype=np.int64)
        if off.ndim != 1 or off.size < 2:
            raise ValueError("block_offsets needs at least two entries")
        if off[0] != 0:
            raise ValueError("first block must start at row 0")
        if np.any(np.diff(off) <= 0):
            raise ValueError("every block must be non-empty and blocks contiguous")
        off.setflags(write=False)
        object.__setattr__(self, "block_offsets", off)

    @classmethod
    def single(cls, n: int) -> "BlockPartition":
        return cls(np.array([0, n]))

    @classmethod
    def uniform(cls, n: int, nblocks: int) -> "BlockPartition":
        """Split ``n`` rows into ``nblocks`` near-equal contiguous blocks;
        remainder rows go to the first blocks."""
        if nblocks < 1 or nblocks > n:
            raise ValueError(f"cannot split {n} rows into {nblocks} non-empty blocks")
        q, r = divmod(n, nblocks)
        sizes = np.full(nblocks, q, dtype=np.int64)
        sizes[:r] += 1
        return cls(np.concatenate([[0], np.cumsum(sizes)]))

    @property
    def n(self) -> int:
        return int(self.block_offsets[-1])

    @property
    def nblocks(self) -> int:
        return self.block_offsets.size - 1

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.block_offsets)

    def block_of(self, rows=None) -> np.ndarray:
        """Owning block of each row (all rows when ``rows`` is None)."""
        if rows is None:
            return np.repeat(np.arange(self.nblocks, dtype=np.int64), self.sizes)
        return np.searchsorted(self.block_offsets, rows, side="right") - 1


def spmv(a: SparseMatrix, x) -> np.ndarray:
    """y = A x."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != a.ncols:
        raise DimensionError(f"spmv: matrix has {a.ncols} columns, vector has {x.shape[0]}")
    return a.to_scipy() @ x


def spgemm(a: SparseMatrix, b: SparseMatrix) -> SparseMatrix:
    """Canonical product A B; exact zeros from cancellation are dropped."""
    if a.ncols != b.nrows:
        raise DimensionError(f"spgemm: {a.shape} times {b.shape}")
    return SparseMatrix.from_scipy(a.to_scipy() @ b.to_scipy())


def transpose(a: SparseMatrix) -> SparseMatrix:
    return SparseMatrix.from_scipy(a.to_scipy().T, a.symmetric_hint)


def galerkin(p: SparseMatrix, a: SparseMatrix) -> SparseMatrix:
    """Coarse operator P^T A P.

    When ``a`` is flagged symmetric, rounding asymmetry up to
    ``SYMMETRY_RTOL * max|a|`` is removed by averaging with the transpose and
    the result is flagged symmetric.  Larger asymmetry triggers a
    ``RuntimeWarning`` and the result is returned as computed.
    """
    if a.nrows != a.ncols:
        raise DimensionError("galerkin: A must be square")
    if p.nrows != a.nrows:
        raise DimensionError(f"galerkin: P has {p.nrows} rows, A has {a.nrows}")
    ps = p.to_scipy()
    c = (ps.T.tocsr() @ (a.to_scipy() @ ps)).tocsr()
    if not a.symmetric_hint:
        return SparseMatrix.from_scipy(c)
    d = c - c.T
    asym = float(abs(d).max()) if d.nnz else 0.0
    if asym > SYMMETRY_RTOL * max(a.max_abs(), 1e-300):
        warnings.warn(f"galerkin product lost symmetry: max asymmetry {asym:.3e}",
                      RuntimeWarning, stacklevel=2)
        return SparseMatrix.from_scipy(c)
    if asym > 0.0:
        c = 0.5 * (c + c.T)
    return SparseMatrix.from_scipy(c, symmetric=True)


def dinv_a_inf_norm(a: SparseMatrix) -> float:
    """||D^{-1} A||_inf = max_i sum_j |a_ij| / |a_ii|."""
    d = a.diagonal()
    if np.any(d == 0.0):
        i = int(np.flatnonzero(d == 0.0)[0])
        raise ZeroDivisionError(f"zero diagonal entry at row {i}")
    rowsum = np.asarray(abs(a.to_scipy()).sum(axis=1)).ravel()
    return float(np.max(rowsum / np.abs(d)))
