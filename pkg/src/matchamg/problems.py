"""3D (an)isotropic Poisson benchmark on the unit cube.

Seven-point finite differences with homogeneous Dirichlet conditions; the
boundary is eliminated and stencil coefficients are used without h^2 scaling.
Unknowns are numbered subcube by subcube so that every block of the Cartesian
process grid owns a contiguous index range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import BlockPartition, SparseMatrix

__all__ = ["PoissonSpec", "poisson7pt", "block3d_partition", "initial_weight"]

_MAX_INDEX = 2**62


@dataclass(frozen=True)
class PoissonSpec:
    nx: int
    ny: int
    nz: int
    k1: float = 1.0
    k2: float = 1.0
    k3: float = 1.0
    px: int = 1
    py: int = 1
    pz: int = 1

    def __post_init__(self):
        for name in ("nx", "ny", "nz", "px", "py", "pz"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        for n, p, axis in ((self.nx, self.px, "x"), (self.ny, self.py, "y"),
                           (self.nz, self.pz, "z")):
            if p > n:
                raise ValueError(f"{p} blocks requested along {axis} but only {n} points")
        for name in ("k1", "k2", "k3"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def cube(cls, n: int, nprocs: int = 1, k=(1.0, 1.0, 1.0)) -> "PoissonSpec":
        """n^3 grid with ``nprocs`` split into a near-cubic process grid."""
        px, py, pz = process_grid(nprocs)
        return cls(n, n, n, *k, px, py, pz)

    @property
    def n(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def nprocs(self) -> int:
        return self.px * self.py * self.pz


def process_grid(nprocs: int) -> tuple[int, int, int]:
    """Factor ``nprocs`` into (px, py, pz), px >= py >= pz, as even as possible.

    Powers of two are dealt out round-robin starting with x, e.g.
    2 -> (2,1,1), 4 -> (2,2,1), 16 -> (4,2,2).
    """
    if nprocs < 1:
        raise ValueError("nprocs must be >= 1")
    dims = [1, 1, 1]
    rest = nprocs
    f = 2
    factors = []
    while f * f <= rest:
        while rest % f == 0:
            factors.append(f)
            rest //= f
        f += 1
    if rest > 1:
        factors.append(rest)
    for f in sorted(factors, reverse=True):
        dims[int(np.argmin(dims))] *= f
    dims.sort(reverse=True)
    return tuple(dims)


def _axis_split(n: int, p: int) -> np.ndarray:
    q, r = divmod(n, p)
    sizes = np.full(p, q, dtype=np.int64)
    sizes[:r] += 1
    return np.concatenate([[0], np.cumsum(sizes)])


def _numbering(spec: PoissonSpec) -> tuple[np.ndarray, np.ndarray]:
    """Global index of every grid point (natural x-fastest order) and the
    block offsets of the subcube numbering."""
    ox = _axis_split(spec.nx, spec.px)
    oy = _axis_split(spec.ny, spec.py)
    oz = _axis_split(spec.nz, spec.pz)
    sx, sy, sz = np.diff(ox), np.diff(oy), np.diff(oz)
    # block sizes in lexicographic block order (bx fastest)
    bsize = (sx[None, None, :] * sy[None, :, None] * sz[:, None, None]).ravel()
    boff = np.concatenate([[0], np.cumsum(bsize)])

    x = np.arange(spec.nx)
    y = np.arange(spec.ny)
    z = np.arange(spec.nz)
    bx = np.searchsorted(ox, x, side="right") - 1
    by = np.searchsorted(oy, y, side="right") - 1
    bz = np.searchsorted(oz, z, side="right") - 1
    lx, ly, lz = x - ox[bx], y - oy[by], z - oz[bz]

    Z, Y, X = np.meshgrid(np.arange(spec.nz), np.arange(spec.ny),
                          np.arange(spec.nx), indexing="ij")
    block = bx[X] + spec.px * (by[Y] + spec.py * bz[Z])
    local = lx[X] + sx[bx[X]] * (ly[Y] + sy[by[Y]] * lz[Z])
    return (boff[block] + local).ravel(), boff


def block3d_partition(spec: PoissonSpec) -> BlockPartition:
    """Row blocks of the subcube numbering used by :func:`poisson7pt`."""
    _, boff = _numbering(spec)
    return BlockPartition(boff)


def poisson7pt(spec: PoissonSpec) -> tuple[SparseMatrix, np.ndarray]:
    """Assemble the 7-point matrix and the all-ones right-hand side."""
    n = spec.n
    if n >= _MAX_INDEX:
        raise OverflowError(f"{n} unknowns overflow the index space")
    gid, _ = _numbering(spec)
    nat = np.arange(n).reshape(spec.nz, spec.ny, spec.nx)
    rows = [gid]
    cols = [gid]
    vals = [np.full(n, 2.0 * (spec.k1 + spec.k2 + spec.k3))]
    for axis, k in ((2, spec.k1), (1, spec.k2), (0, spec.k3)):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        i = gid[nat[tuple(lo)].ravel()]
        j = gid[nat[tuple(hi)].ravel()]
        coupling = np.full(i.size, -float(k))
        rows += [i, j]
        cols += [j, i]
        vals += [coupling, coupling]
    a = SparseMatrix.from_coo(np.concatenate(rows), np.concatenate(cols),
                              np.concatenate(vals), (n, n), symmetric=True)
    return a, np.ones(n)


def initial_weight(a: SparseMatrix, part: BlockPartition | None = None,
                   sweeps: int = 0, smoother: str = "L1_JACOBI",
                   seed: int = 0) -> np.ndarray:
    """Weight vector driving the matching.

    ``sweeps == 0`` returns all ones.  Otherwise ``sweeps`` relaxation steps
    of ``smoother`` are applied to ``A x = 0`` from a fixed-seed random start,
    leaving an algebraically smooth vector.
    """
    if sweeps <= 0:
        return np.ones(a.nrows)
    from .smoothers import SmootherConfig, apply_smoother, setup_smoother

    if part is None:
        part = BlockPartition.single(a.nrows)
    s = setup_smoother(a, part, SmootherConfig(kind=smoother))
    x = np.random.default_rng(seed).uniform(-1.0, 1.0, a.nrows)
    for _ in range(sweeps):
        x = x - apply_smoother(s, a, a @ x)
    return x / np.abs(x).max()
