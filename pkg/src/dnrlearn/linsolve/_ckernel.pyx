# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simplex iteration loop; mirrors ``_pykernel.run_simplex``."""
import numpy as np
from libc.math cimport INFINITY, fabs

cdef enum:
    OPTIMAL = 0
    UNBOUNDED = 1
    LIMIT = 2


def run_simplex(double[:, ::1] T, double[::1] d, double[::1] x, double[::1] lo, double[::1] hi,
                long long[::1] basis, long long[::1] pos, unsigned char[::1] eligible,
                long long max_iter, double opt_tol, double piv_tol, double rel_piv_tol, double tie_tol):
    cdef Py_ssize_t m = T.shape[0]
    cdef Py_ssize_t N = T.shape[1]
    cdef Py_ssize_t it, k, i, j, r, q, nnz
    cdef double dirn, a, t, t_min, t_flip, lim, step, piv, f, dj, cmax, ptol
    cdef long long bv, best_var
    cdef double[::1] tt = np.empty(m, dtype=np.float64)
    cdef double[::1] col = np.empty(m, dtype=np.float64)
    cdef double[::1] prow = np.empty(N, dtype=np.float64)
    cdef Py_ssize_t[::1] nzr = np.empty(N, dtype=np.intp)

    for it in range(max_iter):
        j = -1
        for k in range(N):
            if pos[k] >= 0 or not eligible[k]:
                continue
            if (d[k] < -opt_tol and x[k] < hi[k]) or (d[k] > opt_tol and x[k] > lo[k]):
                j = k
                break
        if j < 0:
            return OPTIMAL, it
        dirn = 1.0 if d[j] < -opt_tol else -1.0

        cmax = 0.0
        for i in range(m):
            col[i] = T[i, j]
            if fabs(col[i]) > cmax:
                cmax = fabs(col[i])
        ptol = rel_piv_tol * cmax
        if ptol < piv_tol:
            ptol = piv_tol
        t_min = INFINITY
        for i in range(m):
            a = dirn * col[i]
            bv = basis[i]
            t = INFINITY
            if a > ptol:
                if lo[bv] != -INFINITY:
                    t = (x[bv] - lo[bv]) / a
            elif a < -ptol:
                if hi[bv] != INFINITY:
                    t = (hi[bv] - x[bv]) / (-a)
            if t < 0.0:
                t = 0.0
            tt[i] = t
            if t < t_min:
                t_min = t
        t_flip = hi[j] - lo[j]
        if t_flip < t_min:
            t_min = t_flip
        if t_min == INFINITY:
            return UNBOUNDED, it
        lim = t_min + tie_tol * (1.0 + t_min)
        r = -1
        best_var = j if t_flip <= lim else 0x7FFFFFFFFFFFFFFF
        for i in range(m):
            if tt[i] <= lim and basis[i] < best_var:
                best_var = basis[i]
                r = i

        step = dirn * t_min
        for i in range(m):
            if col[i] != 0.0:
                x[basis[i]] -= step * col[i]
        if r < 0:
            x[j] = hi[j] if dirn > 0 else lo[j]
            continue
        x[j] += step
        bv = basis[r]
        x[bv] = lo[bv] if dirn * col[r] > 0 else hi[bv]

        piv = col[r]
        nnz = 0
        for k in range(N):
            T[r, k] /= piv
            if T[r, k] != 0.0:
                nzr[nnz] = k
                prow[nnz] = T[r, k]
                nnz += 1
        for i in range(m):
            if i == r or col[i] == 0.0:
                continue
            f = col[i]
            for q in range(nnz):
                T[i, nzr[q]] -= f * prow[q]
        dj = d[j]
        for q in range(nnz):
            d[nzr[q]] -= dj * prow[q]
        pos[bv] = -1
        pos[j] = r
        basis[r] = j
    return LIMIT, max_iter
