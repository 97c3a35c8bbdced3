"""Pure-numpy simplex iteration loop (fallback for the compiled kernel).

Operates in place on the tableau state.  Arithmetic is element-wise in the
same order as the compiled kernel so both produce the same pivots.

The tableau ``T`` holds only structural columns (``N`` of them); basic
variables with index >= N are row artificials, which never re-enter.
"""
import numpy as np

OPTIMAL, UNBOUNDED, LIMIT = 0, 1, 2


def run_simplex(T, d, x, lo, hi, basis, pos, eligible, max_iter, opt_tol, piv_tol, rel_piv_tol, tie_tol):
    """Bland-rule bounded-variable primal simplex.

    Returns ``(status, iterations)``; LIMIT means ``max_iter`` pivots were
    spent and the caller may refactor and call again.
    """
    m, N = T.shape
    nonbasic = pos[:N] < 0
    elig = eligible.astype(bool)
    xs, los, his = x[:N], lo[:N], hi[:N]
    for it in range(max_iter):
        cand = nonbasic & elig & (((d < -opt_tol) & (xs < his)) | ((d > opt_tol) & (xs > los)))
        if not cand.any():
            return OPTIMAL, it
        j = int(np.argmax(cand))
        dirn = 1.0 if d[j] < -opt_tol else -1.0

        col = T[:, j].copy()
        a = dirn * col
        # entries tiny next to the column maximum are treated as roundoff
        cmax = np.abs(col).max() if m else 0.0
        ptol = max(piv_tol, rel_piv_tol * cmax)
        lob = lo[basis]
        hib = hi[basis]
        xb = x[basis]
        t = np.full(m, np.inf)
        dec = (a > ptol) & np.isfinite(lob)
        inc = (a < -ptol) & np.isfinite(hib)
        t[dec] = (xb[dec] - lob[dec]) / a[dec]
        t[inc] = (hib[inc] - xb[inc]) / (-a[inc])
        np.maximum(t, 0.0, out=t)
        t_flip = hi[j] - lo[j]
        t_min = min(t.min() if m else np.inf, t_flip)
        if t_min == np.inf:
            return UNBOUNDED, it
        lim = t_min + tie_tol * (1.0 + t_min)
        rows = np.flatnonzero(t <= lim)
        # Bland: smallest variable index among tied blocking variables
        r = -1
        best_var = j if t_flip <= lim else np.iinfo(np.int64).max
        for i in rows:
            if basis[i] < best_var:
                best_var = basis[i]
                r = int(i)

        step = dirn * t_min
        nz = np.flatnonzero(col)
        x[basis[nz]] -= step * col[nz]
        if r < 0:
            x[j] = hi[j] if dirn > 0 else lo[j]
            continue
        x[j] += step
        bv = basis[r]
        x[bv] = lo[bv] if a[r] > 0 else hi[bv]

        T[r] /= col[r]
        nzr = np.flatnonzero(T[r])
        prow = T[r, nzr]
        others = nz[nz != r]
        if others.size:
            T[np.ix_(others, nzr)] -= np.outer(col[others], prow)
        d[nzr] -= d[j] * prow
        pos[bv] = -1
        if bv < N:
            nonbasic[bv] = True
        pos[j] = r
        nonbasic[j] = False
        basis[r] = j
    return LIMIT, max_iter
