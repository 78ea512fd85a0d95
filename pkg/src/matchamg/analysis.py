"""Two-level convergence analysis of smoothers for a fixed prolongator.

Coarse variables are defined by R = (P^T D P)^{-1} P^T D and completed by a
basis S of the null space of R.  With the symmetrized smoother
Mbar = M^T (M^T + M - A)^{-1} M, the convergence constant is

    K = 1 / lambda_min[(S^T Mbar S)^{-1} (S^T A S)].

All computations here are dense and limited to ``MAX_DENSE`` unknowns.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coarsening import CoarseningConfig, Prolongator, build_hierarchy
from .problems import PoissonSpec, block3d_partition, poisson7pt
from .smoothers import (SmootherConfig, SmootherKind, SmootherOperator,
                        estimate_omega_opt, setup_smoother)
from .sparse import BlockPartition, DimensionError, SparseMatrix

__all__ = [
    "TwoLevelSetup",
    "NotConvergentError",
    "coarse_selector",
    "complement_basis",
    "symmetrized_smoother",
    "two_level_setup",
    "convergence_constant",
    "schur_convergence_constant",
    "energy_norm",
    "measured_two_level_contraction",
    "two_level_prolongator",
    "convergence_table",
    "table_to_csv",
]

MAX_DENSE = 5000


class NotConvergentError(ArithmeticError):
    """M^T + M - A is not positive definite: the smoother is not A-convergent."""


@dataclass(frozen=True, eq=False)
class TwoLevelSetup:
    a: SparseMatrix
    p: Prolongator
    m: SmootherOperator
    r_selector: np.ndarray
    s_complement: Union[SparseMatrix, np.ndarray]

    def s_dense(self) -> np.ndarray:
        s = self.s_complement
        return s.to_dense() if isinstance(s, SparseMatrix) else s

    def s_sparse(self):
        s = self.s_complement
        return s.to_scipy() if isinstance(s, SparseMatrix) else s


def _check_size(n: int):
    if n > MAX_DENSE:
        raise ValueError(f"dense analysis is limited to {MAX_DENSE} unknowns, got {n}")


def _positive_diagonal(a: SparseMatrix) -> np.ndarray:
    d = a.diagonal()
    if np.any(d <= 0.0):
        raise ValueError("diag(A) must be positive")
    return d


def coarse_selector(a: SparseMatrix, p: Prolongator) -> np.ndarray:
    """Dense R = (P^T D P)^{-1} P^T D."""
    d = _positive_diagonal(a)
    if p.n != a.nrows:
        raise DimensionError("prolongator and matrix sizes differ")
    pm = p.matrix.to_scipy()
    ptd = (pm.T @ sp.diags(d)).tocsr()
    if not p.smoothed:
        # disjoint column supports: P^T D P is diagonal
        g = np.asarray((ptd @ pm).diagonal())
        if np.any(g == 0.0):
            raise np.linalg.LinAlgError("singular P^T D P")
        return (sp.diags(1.0 / g) @ ptd).toarray()
    g = (ptd @ pm).toarray()
    try:
        return sla.cho_solve(sla.cho_factor(g), ptd.toarray())
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular P^T D P") from exc


def complement_basis(a: SparseMatrix, p: Prolongator):
    """Columns spanning null(R), mutually D-orthonormal.

    For a tentative prolongator this is done aggregate by aggregate with
    Gram-Schmidt in the D-inner product (k - 1 columns per aggregate of size
    k) and returned sparse.  Smoothed prolongators get a dense basis from a
    full QR factorization in D^{1/2}-scaled coordinates.
    """
    d = _positive_diagonal(a)
    n, nc = p.n, p.nc
    if p.smoothed:
        _check_size(n)
        sq = np.sqrt(d)
        q, _ = sla.qr(sq[:, None] * p.matrix.to_dense())
        return q[:, nc:] / sq[:, None]

    pm = p.matrix.to_scipy().tocsc()
    vals = np.asarray(pm.sum(axis=1)).ravel()  # disjoint columns: row sum is the entry
    order = np.argsort(p.aggregate_of, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(p.aggregate_sizes())])
    rows, cols, data = [], [], []
    col = 0
    for g in range(nc):
        mem = order[bounds[g]:bounds[g + 1]]
        k = mem.size
        if k < 2:
            continue
        dg = d[mem]
        pg = vals[mem]
        basis = [pg / np.sqrt(pg @ (dg * pg))]
        for t in range(k):
            if len(basis) == k:
                break
            v = np.zeros(k)
            v[t] = 1.0
            for b in basis:
                v -= (v @ (dg * b)) * b
            for b in basis:  # second pass for stability
                v -= (v @ (dg * b)) * b
            nv = np.sqrt(v @ (dg * v))
            if nv > 1e-10 * np.sqrt(dg[t]):
                basis.append(v / nv)
        if len(basis) != k:
            raise np.linalg.LinAlgError(f"rank deficiency inside aggregate {g}")
        for b in basis[1:]:
            rows.append(mem)
            cols.append(np.full(k, col))
            data.append(b)
            col += 1
    if col:
        rows, cols, data = (np.concatenate(x) for x in (rows, cols, data))
    return SparseMatrix.from_coo(rows, cols, data, (n, col))


def _dense_m(m: SmootherOperator) -> np.ndarray:
    _check_size(m.n)
    return m.dense_m()


def _cho_x(m_dense: np.ndarray, a: SparseMatrix):
    x = m_dense.T + m_dense - a.to_dense()
    try:
        return sla.cho_factor(x, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotConvergentError("M^T + M - A is not positive definite; "
                                 "the smoother is not A-convergent") from exc


def symmetrized_smoother(m: SmootherOperator, a: SparseMatrix) -> np.ndarray:
    """Dense Mbar = M^T (M^T + M - A)^{-1} M (damping included)."""
    md = _dense_m(m)
    c = _cho_x(md, a)
    mbar = md.T @ sla.cho_solve(c, md)
    return 0.5 * (mbar + mbar.T) if m.symmetric else mbar


def two_level_setup(a: SparseMatrix, p: Prolongator, m: SmootherOperator) -> TwoLevelSetup:
    _check_size(a.nrows)
    return TwoLevelSetup(a, p, m, coarse_selector(a, p), complement_basis(a, p))


def _pencil(setup: TwoLevelSetup):
    """Dense (S^T Mbar S, S^T A S, S^T A P, P^T A P) without forming Mbar."""
    a = setup.a
    md = _dense_m(setup.m)
    c = _cho_x(md, a)
    s = setup.s_sparse()
    if sp.issparse(s):
        ms = np.asarray((s.T @ md.T).T)
        sas = (s.T @ a.to_scipy() @ s).toarray()
    else:
        ms = md @ s
        sas = s.T @ (a.to_scipy() @ s)
    sms = ms.T @ sla.cho_solve(c, ms)
    sms = 0.5 * (sms + sms.T)
    sas = 0.5 * (sas + sas.T)
    return sms, sas


def _lambda_min(lhs: np.ndarray, rhs: np.ndarray) -> float:
    return float(sla.eigh(lhs, rhs, eigvals_only=True, subset_by_index=[0, 0])[0])


def convergence_constant(setup: TwoLevelSetup) -> float:
    """K = 1 / lambda_min[(S^T Mbar S)^{-1} (S^T A S)]."""
    if setup.s_complement.shape[1] == 0:
        raise ValueError("empty complement: P spans the whole space")
    sms, sas = _pencil(setup)
    try:
        return 1.0 / _lambda_min(sas, sms)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("S^T Mbar S is not positive definite") from exc


def schur_convergence_constant(setup: TwoLevelSetup) -> float:
    """sup_e ||(I - P R) e||^2_Mbar / ||e||^2_A for the given R.

    Same pencil as :func:`convergence_constant` with S^T A S replaced by its
    Schur complement S^T A S - S^T A P (P^T A P)^{-1} P^T A S.  This constant
    does bound the pre-smoothed two-grid rate: ||E||_A^2 <= 1 - 1/K.
    """
    sms, sas = _pencil(setup)
    s = setup.s_sparse()
    pm = setup.p.matrix.to_scipy()
    am = setup.a.to_scipy()
    ap = (am @ pm).toarray()
    sap = np.asarray(s.T @ ap)
    ac = np.asarray(pm.T @ ap)
    schur = sas - sap @ sla.cho_solve(sla.cho_factor(ac), sap.T)
    schur = 0.5 * (schur + schur.T)
    return 1.0 / _lambda_min(schur, sms)


def energy_norm(apply_e, apply_e_adj, a: SparseMatrix, steps: int = 50,
                tol: float = 1e-6, seed: int = 0) -> float:
    """Power-iteration estimate of ||E||_A, given E and its A-adjoint.

    Iterates on E^* E in the A-inner product from a fixed-seed start and
    returns sqrt of the last Rayleigh quotient (a lower estimate).
    """
    am = a.to_scipy()
    x = np.random.default_rng(seed).standard_normal(a.nrows)
    x /= np.sqrt(x @ (am @ x))
    lam = 0.0
    for _ in range(steps):
        ex = apply_e(x)
        new = float(ex @ (am @ ex))  # ||E x||_A^2 with ||x||_A = 1
        y = apply_e_adj(ex)
        ny = np.sqrt(max(y @ (am @ y), 0.0))
        if ny == 0.0:
            return float(np.sqrt(new))
        converged = abs(new - lam) <= tol * max(new, 1e-300)
        lam = new
        x = y / ny
        if converged:
            break
    return float(np.sqrt(lam))


def measured_two_level_contraction(setup: TwoLevelSetup, steps: int = 50,
                                   tol: float = 1e-6, seed: int = 0) -> float:
    """||(I - P (P^T A P)^{-1} P^T A)(I - M^{-1} A)||_A by power iteration."""
    a, m = setup.a, setup.m
    am = a.to_scipy()
    pm = setup.p.matrix.to_scipy()
    coarse = spla.splu(sp.csc_matrix(pm.T @ am @ pm))

    def proj(v):  # I - P Ac^{-1} P^T A
        return v - pm @ coarse.solve(pm.T @ (am @ v))

    def e(v):
        return proj(v - m.damping * m.solve(am @ v))

    def e_adj(v):
        u = proj(v)
        return u - m.damping * m.solve(am @ u, transpose=True)

    return energy_norm(e, e_adj, a, steps, tol, seed)


def two_level_prolongator(a: SparseMatrix, part: BlockPartition | None = None, w=None,
                          sweeps: int = 3, smoothed: bool = False) -> Prolongator:
    """Prolongator of a single coarsening step (``sweeps`` matching sweeps)."""
    w = np.ones(a.nrows) if w is None else w
    cfg = CoarseningConfig(sweeps_per_level=sweeps, smooth_prolongator=smoothed,
                           max_coarse_size=1, max_levels=2, min_coarsening_ratio=1.0)
    h = build_hierarchy(a, w, part, cfg)
    if h.nl < 2:
        raise ValueError("matrix could not be coarsened")
    return h.levels[0].p_to_coarser


_DEFAULT_ROWS = (("HGS", False), ("L1_HGS", False), ("INVK", False), ("L1_INVK", False),
                 ("INVK", True), ("L1_INVK", True))


def convergence_table(n: int = 16, nps: Iterable[int] = (1,), rows=_DEFAULT_ROWS,
                      sweeps: int = 3, smoothed: bool = False, invk_fill: int = 1,
                      measure: bool = False, k: tuple = (1.0, 1.0, 1.0)) -> list[dict]:
    """K for each (np, smoother, damping) on the n^3 Poisson problem.

    ``rows`` holds ``(kind, use_omega_opt)`` pairs.  With ``measure`` each
    record also carries the power-iteration two-grid norm and sqrt(1 - 1/K).
    """
    out = []
    for np_ in nps:
        spec = PoissonSpec.cube(n, np_, k)
        if np_ > spec.n:
            raise ValueError(f"np = {np_} exceeds the number of unknowns {spec.n}")
        a, _ = poisson7pt(spec)
        _check_size(a.nrows)
        part = block3d_partition(spec)
        p = two_level_prolongator(a, part, sweeps=sweeps, smoothed=smoothed)
        r = coarse_selector(a, p)
        s = complement_basis(a, p)
        for kind, opt in rows:
            kind = SmootherKind(kind)
            m = setup_smoother(a, part, SmootherConfig(kind, invk_fill=invk_fill))
            if opt:
                m = m.with_damping(estimate_omega_opt(m, a))
            setup = TwoLevelSetup(a, p, m, r, s)
            kval = convergence_constant(setup)
            rec = {"m": a.nrows // np_, "np": np_, "smoother": kind.value,
                   "omega": m.damping, "K": kval}
            if measure:
                rec["contraction"] = measured_two_level_contraction(setup)
                rec["bound"] = float(np.sqrt(max(1.0 - 1.0 / kval, 0.0)))
            out.append(rec)
    return out


def table_to_csv(records: list[dict], path: Optional[str] = None) -> str:
    if not records:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(records[0].keys()), lineterminator="\n")
    writer.writeheader()
    writer.writerows(records)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
