"""Multigrid cycles, the flexible CG outer solver and the coarsest solver."""

from __future__ import annotations

import enum
import json
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .coarsening import Hierarchy, operator_complexity
from .smoothers import (FactorizationError, SmootherConfig, SmootherOperator,
                        block_diagonal_part, ilu0_factors, relax, setup_smoother)
from .sparse import BlockPartition, DimensionError, SparseMatrix

__all__ = [
    "CycleKind",
    "CoarsestConfig",
    "CycleConfig",
    "KrylovConfig",
    "SolveReport",
    "BreakdownError",
    "CoarsestSolver",
    "MultilevelPreconditioner",
    "pcg",
    "pcg_coarsest_solve",
    "apply_v_cycle",
    "apply_k_cycle",
    "fcg_solve",
]


class BreakdownError(ArithmeticError):
    """<d, A d> <= 0 in a CG-type iteration: the operator is not s.p.d."""


class CycleKind(str, enum.Enum):
    V = "V"
    K = "K"


@dataclass(frozen=True)
class CoarsestConfig:
    rtol: float = 1e-4
    maxit: int = 30
    exact: bool = False  # sparse direct solve instead of PCG (testing aid)

    def __post_init__(self):
        if not 0.0 < self.rtol < 1.0:
            raise ValueError("coarsest rtol must lie in (0, 1)")
        if self.maxit < 1:
            raise ValueError("coarsest maxit must be >= 1")


@dataclass(frozen=True)
class CycleConfig:
    kind: CycleKind = CycleKind.V
    pre_sweeps: int = 1
    post_sweeps: int = 1
    coarsest: CoarsestConfig = field(default_factory=CoarsestConfig)

    def __post_init__(self):
        object.__setattr__(self, "kind", CycleKind(self.kind))
        if self.pre_sweeps < 0 or self.post_sweeps < 0:
            raise ValueError("sweep counts must be >= 0")
        if self.pre_sweeps == 0 and self.post_sweeps == 0:
            raise ValueError("at least one of pre_sweeps / post_sweeps must be positive")


@dataclass(frozen=True)
class KrylovConfig:
    rtol: float = 1e-6
    maxit: int = 500

    def __post_init__(self):
        if not 0.0 < self.rtol < 1.0:
            raise ValueError("rtol must lie in (0, 1)")
        if self.maxit < 1:
            raise ValueError("maxit must be >= 1")


@dataclass
class SolveReport:
    iterations: int
    relative_residual_history: list[float]
    converged: bool
    opc: float = float("nan")
    setup_seconds: float = 0.0
    solve_seconds: float = 0.0

    @property
    def final_relative_residual(self) -> float:
        return self.relative_residual_history[-1]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def pcg(a, b, apply_prec: Callable, rtol: float, maxit: int):
    """Preconditioned CG from a zero initial guess.

    Returns ``(x, iterations, relative residual history)``.
    """
    am = a.to_scipy() if isinstance(a, SparseMatrix) else a
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return x, 0, [0.0]
    r = b.copy()
    z = apply_prec(r)
    p = z.copy()
    rz = r @ z
    hist = [1.0]
    it = 0
    while it < maxit:
        q = am @ p
        pq = p @ q
        if pq <= 0.0:
            raise BreakdownError(f"PCG breakdown at iteration {it}: <p, A p> = {pq:.3e}")
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        it += 1
        hist.append(np.linalg.norm(r) / nb)
        if hist[-1] <= rtol:
            break
        z = apply_prec(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, it, hist


class CoarsestSolver:
    """PCG with a block-Jacobi ILU(0) preconditioner, set up once.

    If a block factorization hits a zero pivot, the preconditioner falls back
    to l1-Jacobi and a ``RuntimeWarning`` is issued.
    """

    def __init__(self, a: SparseMatrix, part: BlockPartition | None = None,
                 cfg: CoarsestConfig | None = None):
        self.a = a
        self.part = part or BlockPartition.single(a.nrows)
        self.cfg = cfg or CoarsestConfig()
        self.iterations: list[int] = []
        self._lu = None
        self._ilu = None
        self._jacobi = None
        if self.cfg.exact:
            self._lu = spla.splu(sp.csc_matrix(a.to_scipy()))
            return
        try:
            lower, upper, diag = ilu0_factors(block_diagonal_part(a, self.part), self.part)
            self._ilu = (_int64(lower), _int64(upper), diag)
        except FactorizationError as exc:
            warnings.warn(f"coarsest ILU(0) failed ({exc}); using l1-Jacobi",
                          RuntimeWarning, stacklevel=2)
            rowabs = np.asarray(abs(a.to_scipy()).sum(axis=1)).ravel()
            self._jacobi = rowabs

    def precondition(self, r) -> np.ndarray:
        if self._jacobi is not None:
            return r / self._jacobi
        lower, upper, diag = self._ilu
        y = _kernels.lower_solve(lower.indptr, lower.indices, lower.data,
                                 np.ones(diag.size), np.ascontiguousarray(r))
        return _kernels.upper_solve(upper.indptr, upper.indices, upper.data, diag, y)

    def solve(self, r) -> np.ndarray:
        if self._lu is not None:
            return self._lu.solve(np.asarray(r, dtype=np.float64))
        x, it, _ = pcg(self.a, r, self.precondition, self.cfg.rtol, self.cfg.maxit)
        self.iterations.append(it)
        return x


def _int64(m: sp.csr_matrix) -> sp.csr_matrix:
    m.indptr = m.indptr.astype(np.int64)
    m.indices = m.indices.astype(np.int64)
    return m


def pcg_coarsest_solve(a: SparseMatrix, part: BlockPartition | None, r,
                       cfg: CoarsestConfig | None = None) -> np.ndarray:
    """One-shot coarsest-level solve; see :class:`CoarsestSolver`."""
    return CoarsestSolver(a, part, cfg).solve(r)


class MultilevelPreconditioner:
    """A hierarchy with its per-level smoothers and coarsest solver.

    Calling the object applies one V- or K-cycle to a residual.
    ``coarsest_visits`` counts coarsest solves since the last reset.
    """

    def __init__(self, h: Hierarchy, smoother: SmootherConfig | Sequence[SmootherOperator] | None = None,
                 cycle: CycleConfig | None = None):
        self.h = h
        self.cycle = cycle or CycleConfig()
        if smoother is None or isinstance(smoother, SmootherConfig):
            scfg = smoother or SmootherConfig()
            self.smoothers = [setup_smoother(l.a, l.partition, scfg) for l in h.levels[:-1]]
        else:
            self.smoothers = list(smoother)
        if len(self.smoothers) < h.nl - 1:
            raise ValueError("one smoother per non-coarsest level is required")
        last = h.levels[-1]
        self.coarsest = CoarsestSolver(last.a, last.partition, self.cycle.coarsest)
        self.coarsest_visits = 0

    @property
    def opc(self) -> float:
        return operator_complexity(self.h)

    def __call__(self, r) -> np.ndarray:
        return self.apply(r)

    def apply(self, r, level: int = 0) -> np.ndarray:
        return self._cycle(level, np.asarray(r, dtype=np.float64),
                           self.cycle.kind is CycleKind.K)

    def _coarse_solve(self, r):
        self.coarsest_visits += 1
        return self.coarsest.solve(r)

    def _cycle(self, level: int, r: np.ndarray, kcycle: bool) -> np.ndarray:
        h = self.h
        if r.shape[0] != h.levels[level].n:
            raise DimensionError(f"residual of length {r.shape[0]} at level {level} "
                                 f"of size {h.levels[level].n}")
        if level == h.nl - 1:
            return self._coarse_solve(r)
        lvl = h.levels[level]
        a, s, p = lvl.a, self.smoothers[level], lvl.p_to_coarser
        x = relax(s, a, r, None, "forward", self.cycle.pre_sweeps)
        res = r - a @ x if self.cycle.pre_sweeps else r
        rc = p.restrict(res)
        if kcycle and level + 1 < h.nl - 1:
            xc = self._inner_fcg(level + 1, rc)
        else:
            xc = self._cycle(level + 1, rc, kcycle)
        x = x + p.apply(xc)
        if self.cycle.post_sweeps:
            x = relax(s, a, r, x, "backward", self.cycle.post_sweeps)
        return x

    def _inner_fcg(self, level: int, b: np.ndarray) -> np.ndarray:
        # exactly two FCG(1) steps, zero start, no residual test
        a = self.h.levels[level].a
        x = np.zeros_like(b)
        r = b.copy()
        d = q = None
        delta = 0.0
        for _ in range(2):
            if not np.any(r):
                break
            z = self._cycle(level, r, True)
            if d is None:
                d = z
            else:
                d = z - (z @ q / delta) * d
            q = a @ d
            delta = d @ q
            if delta <= 0.0:
                break
            alpha = (d @ r) / delta
            x += alpha * d
            r -= alpha * q
        return x


def apply_v_cycle(h: Hierarchy, smoothers, cfg: CycleConfig, r, level: int = 0) -> np.ndarray:
    """One V-cycle B_level r.  ``smoothers`` is a config or per-level operators."""
    cfg = CycleConfig(CycleKind.V, cfg.pre_sweeps, cfg.post_sweeps, cfg.coarsest)
    return MultilevelPreconditioner(h, smoothers, cfg).apply(r, level)


def apply_k_cycle(h: Hierarchy, smoothers, cfg: CycleConfig, r, level: int = 0) -> np.ndarray:
    """One K-cycle: intermediate coarse corrections are two inner FCG steps."""
    cfg = CycleConfig(CycleKind.K, cfg.pre_sweeps, cfg.post_sweeps, cfg.coarsest)
    return MultilevelPreconditioner(h, smoothers, cfg).apply(r, level)


def fcg_solve(a: SparseMatrix, b, precond: Optional[Callable] = None,
              cfg: KrylovConfig | None = None):
    """Flexible CG with single-direction A-orthogonalization, zero start.

    Stops when ||b - A x|| / ||b|| <= rtol or after ``maxit`` iterations.
    Raises :class:`BreakdownError` if <d, A d> <= 0.
    """
    cfg = cfg or KrylovConfig()
    precond = precond or (lambda v: v.copy())
    am = a.to_scipy()
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != a.nrows:
        raise DimensionError("right-hand side length differs from matrix size")
    t0 = time.perf_counter()
    x = np.zeros_like(b)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return x, SolveReport(0, [0.0], True, solve_seconds=time.perf_counter() - t0)
    r = b.copy()
    hist = [1.0]
    d = q = None
    delta = 0.0
    it = 0
    while it < cfg.maxit and hist[-1] > cfg.rtol:
        z = np.asarray(precond(r), dtype=np.float64)
        d = z if d is None else z - (z @ q / delta) * d
        q = am @ d
        delta = d @ q
        if delta <= 0.0:
            raise BreakdownError(f"FCG breakdown at iteration {it}: <d, A d> = {delta:.3e}; "
                                 "operator or preconditioner is not positive definite")
        alpha = (d @ r) / delta
        x += alpha * d
        r -= alpha * q
        it += 1
        hist.append(float(np.linalg.norm(r) / nb))
    report = SolveReport(it, hist, hist[-1] <= cfg.rtol,
                         solve_seconds=time.perf_counter() - t0)
    return x, report
