"""Block-Jacobi-coupled smoothers on a row-block partition.

Each block of the partition is treated independently, emulating one process
of a row-block distribution.  Inside a block the smoother is

* ``HGS``        Gauss-Seidel, M_p = L_pp + D_pp
* ``L1_HGS``     M_p = L_pp + D_pp + D_l1p, D_l1p the off-block absolute row sums
* ``L1_JACOBI``  M = diag(a_ii + sum_{j != i} |a_ij|)  (every row its own block)
* ``INVK``       M_p^{-1} = Z D^{-1} Z^T, Z a positionally truncated inverse of
                 the transposed IC(0) factor of A_pp
* ``L1_INVK``    the same on A_pp + D_l1p
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import _kernels
from .sparse import BlockPartition, DimensionError, SparseMatrix

__all__ = [
    "SmootherKind",
    "SmootherConfig",
    "SmootherOperator",
    "FactorizationError",
    "l1_diagonal",
    "block_diagonal_part",
    "incomplete_ldlt",
    "setup_smoother",
    "apply_smoother",
    "relax",
    "lanczos_extreme_eigenvalues",
    "omega_opt_from_operator",
    "estimate_omega_opt",
]


class SmootherKind(str, enum.Enum):
    HGS = "HGS"
    L1_HGS = "L1_HGS"
    L1_JACOBI = "L1_JACOBI"
    INVK = "INVK"
    L1_INVK = "L1_INVK"

    @property
    def is_gauss_seidel(self) -> bool:
        return self in (SmootherKind.HGS, SmootherKind.L1_HGS)

    @property
    def is_invk(self) -> bool:
        return self in (SmootherKind.INVK, SmootherKind.L1_INVK)

    @property
    def uses_l1(self) -> bool:
        return self in (SmootherKind.L1_HGS, SmootherKind.L1_INVK, SmootherKind.L1_JACOBI)


class FactorizationError(ArithmeticError):
    """Zero pivot in an incomplete factorization."""

    def __init__(self, block: int, row: int):
        super().__init__(f"zero pivot in block {block} at row {row}")
        self.block = block
        self.row = row


@dataclass(frozen=True)
class SmootherConfig:
    kind: SmootherKind = SmootherKind.HGS
    sweeps: int = 1
    damping: float = 1.0
    invk_fill: int = 1
    use_omega_opt: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", SmootherKind(self.kind))
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if not self.damping > 0:
            raise ValueError("damping must be positive")
        if self.invk_fill < 0:
            raise ValueError("invk_fill must be >= 0")


@dataclass(frozen=True, eq=False)
class SmootherOperator:
    """Set-up smoother.  ``solve`` applies the undamped M^{-1} (or M^{-T})."""

    kind: SmootherKind
    partition: BlockPartition
    damping: float
    sweeps: int
    diag: np.ndarray  # GS: D + D_l1; Jacobi: the whole M; INVK: pivots D
    lower: Optional[sp.csr_matrix] = None  # GS: strictly lower in-block part
    upper: Optional[sp.csr_matrix] = None  # GS: its transpose
    w: Optional[sp.csr_matrix] = None  # INVK: W ~ L^{-1}, so Z = W^T
    wt: Optional[sp.csr_matrix] = None

    @property
    def n(self) -> int:
        return self.diag.size

    @property
    def symmetric(self) -> bool:
        return not self.kind.is_gauss_seidel

    def solve(self, r, transpose: bool = False) -> np.ndarray:
        r = np.ascontiguousarray(r, dtype=np.float64)
        if r.shape[0] != self.n:
            raise DimensionError(f"smoother of size {self.n} applied to vector of length {r.shape[0]}")
        if self.kind is SmootherKind.L1_JACOBI:
            return r / self.diag
        if self.kind.is_gauss_seidel:
            t = self.upper if transpose else self.lower
            fn = _kernels.upper_solve if transpose else _kernels.lower_solve
            return fn(t.indptr, t.indices, t.data, self.diag, r)
        return self.wt @ ((self.w @ r) / self.diag)

    def with_damping(self, damping: float) -> "SmootherOperator":
        return SmootherOperator(self.kind, self.partition, float(damping), self.sweeps,
                                self.diag, self.lower, self.upper, self.w, self.wt)

    def dense_m(self) -> np.ndarray:
        """Dense damped M_omega = M / omega (analysis only)."""
        if self.kind is SmootherKind.L1_JACOBI:
            m = np.diag(self.diag)
        elif self.kind.is_gauss_seidel:
            m = self.lower.toarray() + np.diag(self.diag)
        else:
            w = self.w.toarray()
            winv = sla.solve_triangular(w, np.eye(self.n), lower=True, unit_diagonal=True)
            m = winv @ (self.diag[:, None] * winv.T)
        return m / self.damping


def _off_block_mask(a: SparseMatrix, part: BlockPartition) -> np.ndarray:
    if part.n != a.nrows:
        raise DimensionError(f"partition covers {part.n} rows, matrix has {a.nrows}")
    owner = part.block_of()
    return owner[a.row_indices()] != owner[a.col_indices]


def l1_diagonal(a: SparseMatrix, part: BlockPartition) -> np.ndarray:
    """Per row, the sum of |a_ij| over columns outside the row's block."""
    off = _off_block_mask(a, part)
    return np.bincount(a.row_indices()[off], weights=np.abs(a.values[off]),
                       minlength=a.nrows)


def block_diagonal_part(a: SparseMatrix, part: BlockPartition) -> sp.csr_matrix:
    """A with every off-block entry removed (canonical CSR)."""
    keep = ~_off_block_mask(a, part)
    m = sp.csr_matrix((a.values[keep], (a.row_indices()[keep], a.col_indices[keep])),
                      shape=a.shape)
    m.sort_indices()
    return m


def incomplete_ldlt(m: sp.csr_matrix, part: BlockPartition | None = None):
    """Zero-fill incomplete factorization of a symmetric matrix as L D L^T.

    Returns ``(L, d)`` with L strictly lower (CSR) and d the pivots.  The
    factorization is ILU(0); for a symmetric pattern and values its upper
    factor equals D L^T.  Raises :class:`FactorizationError` on a zero pivot.
    """
    m = sp.csr_matrix(m)
    m.sort_indices()
    vals, diagpos, bad = _kernels.ilu0(m.indptr.astype(np.int64),
                                       m.indices.astype(np.int64), m.data)
    if bad >= 0:
        block = int(part.block_of([bad])[0]) if part is not None else 0
        raise FactorizationError(block, int(bad))
    rows = np.repeat(np.arange(m.shape[0]), np.diff(m.indptr))
    low = m.indices < rows
    lower = sp.csr_matrix((vals[low], (rows[low], m.indices[low])), shape=m.shape)
    lower.sort_indices()
    return lower, vals[diagpos]


def ilu0_factors(m: sp.csr_matrix, part: BlockPartition | None = None):
    """Zero-fill ILU of a general CSR matrix: (strictly lower L, strictly upper U, diag U)."""
    m = sp.csr_matrix(m)
    m.sort_indices()
    vals, diagpos, bad = _kernels.ilu0(m.indptr.astype(np.int64),
                                       m.indices.astype(np.int64), m.data)
    if bad >= 0:
        block = int(part.block_of([bad])[0]) if part is not None else 0
        raise FactorizationError(block, int(bad))
    rows = np.repeat(np.arange(m.shape[0]), np.diff(m.indptr))
    low = m.indices < rows
    up = m.indices > rows
    lower = sp.csr_matrix((vals[low], (rows[low], m.indices[low])), shape=m.shape)
    upper = sp.csr_matrix((vals[up], (rows[up], m.indices[up])), shape=m.shape)
    lower.sort_indices()
    upper.sort_indices()
    return lower, upper, vals[diagpos]


def _csr64(m: sp.csr_matrix) -> sp.csr_matrix:
    m = sp.csr_matrix(m)
    m.sort_indices()
    m.indptr = m.indptr.astype(np.int64)
    m.indices = m.indices.astype(np.int64)
    return m


def setup_smoother(a: SparseMatrix, part: BlockPartition | None,
                   cfg: SmootherConfig | None = None) -> SmootherOperator:
    cfg = cfg or SmootherConfig()
    part = part or BlockPartition.single(a.nrows)
    kind = cfg.kind
    if a.nrows != a.ncols:
        raise DimensionError("smoother needs a square matrix")
    d = a.diagonal()
    if np.any(d == 0.0):
        raise ZeroDivisionError(f"zero diagonal entry at row {int(np.flatnonzero(d == 0)[0])}")

    if kind is SmootherKind.L1_JACOBI:
        rowabs = np.asarray(abs(a.to_scipy()).sum(axis=1)).ravel()
        op = SmootherOperator(kind, part, cfg.damping, cfg.sweeps,
                              d + (rowabs - np.abs(d)))
    else:
        d_l1 = l1_diagonal(a, part) if kind.uses_l1 else np.zeros(a.nrows)
        bd = block_diagonal_part(a, part)
        if kind.is_gauss_seidel:
            lower = _csr64(sp.tril(bd, k=-1, format="csr"))
            op = SmootherOperator(kind, part, cfg.damping, cfg.sweeps, d + d_l1,
                                  lower, _csr64(lower.T.tocsr()))
        else:
            mod = _csr64(bd + sp.diags(d_l1))
            lower, pivots = incomplete_ldlt(mod, part)
            if np.any(pivots <= 0.0):
                i = int(np.flatnonzero(pivots <= 0.0)[0])
                raise FactorizationError(int(part.block_of([i])[0]), i)
            wp, wi, wv = _kernels.truncated_inverse(
                lower.indptr.astype(np.int64), lower.indices.astype(np.int64),
                lower.data, min(cfg.invk_fill + 1, a.nrows))
            w = sp.csr_matrix((wv, wi, wp), shape=a.shape)
            w.eliminate_zeros()
            op = SmootherOperator(kind, part, cfg.damping, cfg.sweeps, pivots,
                                  w=w, wt=w.T.tocsr())
    if cfg.use_omega_opt:
        op = op.with_damping(estimate_omega_opt(op, a))
    return op


def apply_smoother(s: SmootherOperator, a: SparseMatrix, r,
                   direction: str = "forward") -> np.ndarray:
    """omega M^{-1} r (``forward``) or omega M^{-T} r (``backward``)."""
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction {direction!r}")
    if a.nrows != s.n:
        raise DimensionError("smoother and matrix sizes differ")
    return s.damping * s.solve(r, transpose=direction == "backward")


def relax(s: SmootherOperator, a: SparseMatrix, b, x=None,
          direction: str = "forward", sweeps: int | None = None) -> np.ndarray:
    """``sweeps`` stationary steps x <- x + omega M^{-1}(b - A x)."""
    sweeps = s.sweeps if sweeps is None else sweeps
    b = np.asarray(b, dtype=np.float64)
    if x is None:
        if sweeps == 0:
            return np.zeros_like(b)
        x = apply_smoother(s, a, b, direction)
        sweeps -= 1
    else:
        x = np.array(x, dtype=np.float64)
    for _ in range(sweeps):
        x += apply_smoother(s, a, b - a @ x, direction)
    return x


def lanczos_extreme_eigenvalues(apply_minv: Callable, a: SparseMatrix, rtol: float = 1e-2,
                                maxiter: int = 200, seed: int = 0):
    """Extreme eigenvalues of M^{-1} A for symmetric positive M.

    Lanczos in the A-inner product, where M^{-1} A is self-adjoint, with full
    reorthogonalization.  Returns ``(lmin, lmax, converged)``; convergence
    means both extreme Ritz residual bounds are below ``rtol`` times the Ritz
    value.
    """
    n = a.nrows
    am = a.to_scipy()
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    av = am @ v
    nv = np.sqrt(v @ av)
    v, av = v / nv, av / nv
    basis, abasis = [v], [av]
    alphas: list[float] = []
    betas: list[float] = []
    theta = np.array([1.0])
    for j in range(min(maxiter, n)):
        u = np.asarray(apply_minv(abasis[-1]), dtype=np.float64)
        alpha = float(u @ abasis[-1])
        alphas.append(alpha)
        for q, aq in zip(basis, abasis):
            u -= (u @ aq) * q
        au = am @ u
        beta = float(np.sqrt(max(u @ au, 0.0)))
        theta, s = sla.eigh_tridiagonal(np.array(alphas), np.array(betas))
        scale = max(abs(theta[0]), abs(theta[-1]))
        if beta <= 1e-12 * scale:
            return float(theta[0]), float(theta[-1]), True
        resid = beta * np.abs(s[-1, [0, -1]])
        if j >= 1 and resid[0] <= rtol * abs(theta[0]) and resid[1] <= rtol * abs(theta[-1]):
            return float(theta[0]), float(theta[-1]), True
        betas.append(beta)
        basis.append(u / beta)
        abasis.append(au / beta)
    return float(theta[0]), float(theta[-1]), False


def omega_opt_from_operator(apply_minv: Callable, a: SparseMatrix, rtol: float = 1e-2,
                            maxiter: int = 200) -> float:
    """2 / (lmin + lmax) of M^{-1} A; 1.0 with a warning when Lanczos stalls."""
    lmin, lmax, ok = lanczos_extreme_eigenvalues(apply_minv, a, rtol, maxiter)
    if not ok:
        warnings.warn(f"Lanczos did not converge in {maxiter} steps; using omega = 1",
                      RuntimeWarning, stacklevel=2)
        return 1.0
    return 2.0 / (lmin + lmax)


def estimate_omega_opt(s: SmootherOperator, a: SparseMatrix, rtol: float = 1e-2,
                       maxiter: int = 200) -> float:
    """Optimal damping for the symmetric smoother kinds (Jacobi, INVK)."""
    if not s.symmetric:
        raise ValueError(f"{s.kind.value} is not symmetric; omega_opt needs a real spectrum")
    return omega_opt_from_operator(s.solve, a, rtol, maxiter)
