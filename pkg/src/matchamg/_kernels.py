"""Jitted sparse triangular kernels used by smoothers and the coarsest solver."""

import numba as nb
import numpy as np

_jit = dict(cache=True, nogil=True)


@nb.njit(**_jit)
def lower_solve(indptr, indices, data, diag, r):
    """Solve (L + diag) z = r, L strictly lower triangular in CSR."""
    n = r.size
    z = np.empty(n)
    for i in range(n):
        s = r[i]
        for k in range(indptr[i], indptr[i + 1]):
            s -= data[k] * z[indices[k]]
        z[i] = s / diag[i]
    return z


@nb.njit(**_jit)
def upper_solve(indptr, indices, data, diag, r):
    """Solve (U + diag) z = r, U strictly upper triangular in CSR."""
    n = r.size
    z = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = r[i]
        for k in range(indptr[i], indptr[i + 1]):
            s -= data[k] * z[indices[k]]
        z[i] = s / diag[i]
    return z


@nb.njit(**_jit)
def ilu0(indptr, indices, data):
    """In-place-style zero-fill ILU on a canonical CSR pattern.

    Returns (factor values, diag positions, failing row or -1).  The strictly
    lower part of the result holds the unit-lower factor L, the rest holds U.
    """
    n = indptr.size - 1
    vals = data.copy()
    diagpos = np.full(n, -1, dtype=np.int64)
    pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for k in range(indptr[i], indptr[i + 1]):
            pos[indices[k]] = k
            if indices[k] == i:
                diagpos[i] = k
        if diagpos[i] < 0:
            return vals, diagpos, i
        for kk in range(indptr[i], indptr[i + 1]):
            k = indices[kk]
            if k >= i:
                break
            pivot = vals[diagpos[k]]
            if pivot == 0.0:
                return vals, diagpos, k
            lik = vals[kk] / pivot
            vals[kk] = lik
            for jj in range(diagpos[k] + 1, indptr[k + 1]):
                p = pos[indices[jj]]
                if p >= 0:
                    vals[p] -= lik * vals[jj]
        if vals[diagpos[i]] == 0.0:
            return vals, diagpos, i
        for k in range(indptr[i], indptr[i + 1]):
            pos[indices[k]] = -1
    return vals, diagpos, -1


@nb.njit(**_jit)
def truncated_inverse(indptr, indices, data, max_len):
    """Approximate W = (I + L)^{-1}, L strictly lower CSR, row by row.

    An entry W_ij is kept when j is reachable from i by a path of at most
    ``max_len`` edges of L (so ``max_len = fill + 1``); kept entries receive
    the full truncated recurrence W_i = e_i - sum_k L_ik W_k.
    Returns CSR arrays of W including the unit diagonal.
    """
    n = indptr.size - 1
    cap = max(16, 4 * (indptr[n] + n))
    wptr = np.zeros(n + 1, dtype=np.int64)
    widx = np.empty(cap, dtype=np.int64)
    wval = np.empty(cap)
    wlen = np.empty(cap, dtype=np.int64)
    acc = np.zeros(n)
    best = np.full(n, max_len + 1, dtype=np.int64)
    touched = np.empty(n, dtype=np.int64)
    for i in range(n):
        nt = 0
        # pattern: shortest path lengths
        for kk in range(indptr[i], indptr[i + 1]):
            k = indices[kk]
            for q in range(wptr[k], wptr[k + 1]):
                j = widx[q]
                length = wlen[q] + 1
                if length <= max_len and length < best[j]:
                    if best[j] > max_len:
                        touched[nt] = j
                        nt += 1
                    best[j] = length
        # values over the kept pattern
        for kk in range(indptr[i], indptr[i + 1]):
            k = indices[kk]
            lik = data[kk]
            for q in range(wptr[k], wptr[k + 1]):
                j = widx[q]
                if best[j] <= max_len:
                    acc[j] -= lik * wval[q]
        need = wptr[i] + nt + 1
        if need > cap:
            while cap < need:
                cap *= 2
            widx2 = np.empty(cap, dtype=np.int64)
            wval2 = np.empty(cap)
            wlen2 = np.empty(cap, dtype=np.int64)
            widx2[:wptr[i]] = widx[:wptr[i]]
            wval2[:wptr[i]] = wval[:wptr[i]]
            wlen2[:wptr[i]] = wlen[:wptr[i]]
            widx, wval, wlen = widx2, wval2, wlen2
        cols = np.sort(touched[:nt])
        p = wptr[i]
        for t in range(nt):
            j = cols[t]
            widx[p] = j
            wval[p] = acc[j]
            wlen[p] = best[j]
            acc[j] = 0.0
            best[j] = max_len + 1
            p += 1
        widx[p] = i
        wval[p] = 1.0
        wlen[p] = 0
        wptr[i + 1] = p + 1
    m = wptr[n]
    return wptr, widx[:m].copy(), wval[:m].copy()
