"""MatrixMarket coordinate I/O and plain-text vectors."""

from __future__ import annotations

import numpy as np
import scipy.io

from .sparse import SparseMatrix

__all__ = ["read_matrix", "write_matrix", "read_vector", "write_vector"]


def read_matrix(path) -> SparseMatrix:
    """Read a real coordinate MatrixMarket file (general or symmetric)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", "replace").lower()
    if not header.startswith("%%matrixmarket"):
        raise ValueError(f"{path}: not a MatrixMarket file")
    if "coordinate" not in header:
        raise ValueError(f"{path}: only coordinate format is supported")
    m = scipy.io.mmread(str(path))
    return SparseMatrix.from_scipy(m.tocsr(), symmetric="symmetric" in header)


def write_matrix(path, a: SparseMatrix, symmetric: bool | None = None) -> None:
    """Write ``a`` in coordinate format.  Symmetric matrices get the
    ``symmetric`` header (lower triangle only) unless ``symmetric=False``."""
    if symmetric is None:
        symmetric = a.symmetric_hint
    scipy.io.mmwrite(str(path), a.to_scipy().tocoo(),
                     symmetry="symmetric" if symmetric else "general",
                     precision=17)


def read_vector(path) -> np.ndarray:
    return np.loadtxt(path, dtype=np.float64, ndmin=1)


def write_vector(path, x) -> None:
    np.savetxt(path, np.asarray(x, dtype=np.float64), fmt="%.17g")
