"""Dense two-phase bounded-variable primal simplex.

Problems have the form ``min c.x  s.t.  A x = b,  lo <= x <= hi`` with
infinite bounds allowed.  Pivoting always follows Bland's smallest-index
rule, so a given problem always produces the same solution.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

from . import _pykernel

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIV_TOL = 1e-9
REL_PIV_TOL = 1e-5
TIE_TOL = 1e-12
REFACTOR_EVERY = 2000
RESIDUAL_TOL = 1e-9

try:
    if os.environ.get("DNRLEARN_PURE_PYTHON"):
        raise ImportError("pure-python backend forced")
    from . import _ckernel
except ImportError:
    _ckernel = None

_KERNELS = {"python": _pykernel.run_simplex}
if _ckernel is not None:
    _KERNELS["cython"] = _ckernel.run_simplex
_backend = "cython" if _ckernel is not None else "python"


def available_backends() -> tuple[str, ...]:
    return tuple(_KERNELS)


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in _KERNELS:
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    _backend = name


class LpStructureError(ValueError):
    """Problem arrays have inconsistent shapes or bounds."""


@dataclass(frozen=True, eq=False)
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(self.c, dtype=float).ravel()
        n = c.size
        A = np.ascontiguousarray(self.A, dtype=float)
        if A.ndim != 2:
            A = A.reshape(0, n) if A.size == 0 else A
        if A.ndim != 2 or A.shape[1] != n:
            raise LpStructureError(f"constraint matrix has shape {A.shape}, expected (m, {n})")
        b = np.ascontiguousarray(self.b, dtype=float).ravel()
        if b.size != A.shape[0]:
            raise LpStructureError(f"rhs has {b.size} entries for {A.shape[0]} rows")
        lo = np.ascontiguousarray(self.lo, dtype=float).ravel()
        hi = np.ascontiguousarray(self.hi, dtype=float).ravel()
        if lo.size != n or hi.size != n:
            raise LpStructureError(f"bounds must have {n} entries")
        if np.any(lo > hi) or np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise LpStructureError("every variable needs lo <= hi")
        if np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise LpStructureError("lower bound +inf or upper bound -inf")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise LpStructureError("non-finite objective or constraint data")
        for name, arr in (("c", c), ("A", A), ("b", b), ("lo", lo), ("hi", hi)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded" | "iteration_limit"
    x: np.ndarray
    objective_value: float
    iterations: int
    basis: tuple[int, ...] = ()
    problem: LpProblem | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    @cached_property
    def duals(self) -> np.ndarray | None:
        """Row prices at the final basis (computed on first access)."""
        if not self.optimal or self.problem is None:
            return None
        return basis_duals(self.problem, self.basis)


def _basis_matrix(p: LpProblem, basis) -> tuple[np.ndarray, np.ndarray]:
    m, n = p.A.shape
    B = np.zeros((m, m))
    cb = np.zeros(m)
    for k, j in enumerate(basis):
        if j < n:
            B[:, k] = p.A[:, j]
            cb[k] = p.c[j]
        else:
            B[j - n, k] = 1.0
    return B, cb


def basis_duals(p: LpProblem, basis) -> np.ndarray:
    """Solve ``B^T y = c_B`` for the given basis (artificial index ``n + i``
    stands for the unit column of row ``i``)."""
    if p.n_rows == 0:
        return np.zeros(0)
    B, cb = _basis_matrix(p, basis)
    return np.linalg.solve(B.T, cb)


class _State:
    """Tableau over structural columns; index ``n + i`` is the artificial
    of row ``i``.  Artificials are never re-admitted once they leave, so
    their tableau columns are not kept."""

    def __init__(self, p: LpProblem, rel_piv_tol: float = REL_PIV_TOL):
        m, n = p.A.shape
        self.rel_piv_tol = rel_piv_tol
        self.m, self.n = m, n
        x0 = np.where(np.isfinite(p.lo), p.lo, np.where(np.isfinite(p.hi), p.hi, 0.0))
        resid = p.b - p.A @ x0
        self.sign = np.where(resid >= 0, 1.0, -1.0)
        self.SA = np.ascontiguousarray(p.A * self.sign[:, None])
        self.rhs = p.b * self.sign
        self.rhs_scale = float(np.max(np.abs(self.rhs))) if m else 0.0
        self.lo = np.concatenate([p.lo, np.zeros(m)])
        self.hi = np.concatenate([p.hi, np.full(m, np.inf)])
        self.x = np.concatenate([x0, np.abs(resid)])
        self.basis = np.arange(n, n + m, dtype=np.int64)
        self.pos = np.full(n + m, -1, dtype=np.int64)
        self.pos[self.basis] = np.arange(m)
        self.eligible = np.ones(n, np.uint8)
        self.T = self.SA.copy()
        self.cost = np.concatenate([np.zeros(n), np.ones(m)])
        self.price()
        self.iterations = 0

    def price(self) -> None:
        """Reduced costs from the current tableau."""
        self.d = self.cost[:self.n] - self.cost[self.basis] @ self.T
        self.d[self.basis[self.basis < self.n]] = 0.0

    def _factor(self):
        n = self.n
        B = np.zeros((self.m, self.m))
        struct = self.basis < n
        B[:, struct] = self.SA[:, self.basis[struct]]
        art = np.flatnonzero(~struct)
        B[self.basis[art] - n, art] = 1.0
        return scipy.linalg.lu_factor(B)

    def _solve_basic(self, lu) -> None:
        nb = self.pos[:self.n] < 0
        self.x[self.basis] = scipy.linalg.lu_solve(lu, self.rhs - self.SA[:, nb] @ self.x[:self.n][nb])

    def refactor(self) -> None:
        """Rebuild the tableau, basic values and reduced costs from the
        original data."""
        if self.m == 0:
            self.d = self.cost[:self.n].copy()
            return
        lu = self._factor()
        self._solve_basic(lu)
        self.T = np.ascontiguousarray(scipy.linalg.lu_solve(lu, self.SA))
        self.price()

    def polish(self) -> bool:
        """Recompute basic values exactly; True if they stay within bounds."""
        if self.m == 0 or self.consistent():
            return True
        self._solve_basic(self._factor())
        xb = self.x[self.basis]
        return bool(np.all(xb >= self.lo[self.basis] - FEAS_TOL) and np.all(xb <= self.hi[self.basis] + FEAS_TOL))

    def infeasibility(self) -> float:
        """Total value of basic artificials."""
        art = self.basis[self.basis >= self.n]
        return float(self.x[art].sum())

    def consistent(self) -> bool:
        """True if the basic values still satisfy the original rows."""
        return self.residual() <= RESIDUAL_TOL * (1.0 + self.rhs_scale)

    def residual(self) -> float:
        n = self.n
        r = self.SA @ self.x[:n] - self.rhs
        art = self.basis[self.basis >= n]
        r[art - n] += self.x[art]
        return float(np.max(np.abs(r)))

    def run(self, max_iter: int, polish: bool) -> str:
        kernel = _KERNELS[_backend]
        budget = max_iter
        while True:
            chunk = min(REFACTOR_EVERY, budget)
            code, its = kernel(self.T, self.d, self.x, self.lo, self.hi, self.basis, self.pos,
                               self.eligible, chunk, OPT_TOL, PIV_TOL, self.rel_piv_tol, TIE_TOL)
            self.iterations += its
            budget -= its
            if code == _pykernel.UNBOUNDED:
                return "unbounded"
            if code == _pykernel.OPTIMAL and (not polish or self.polish()):
                return "optimal"
            if budget <= 0:
                return "iteration_limit"
            self.refactor()

    def end_phase_one(self) -> None:
        n, m = self.n, self.m
        # pivot zero-valued artificials out where a structural column allows
        for r in range(m):
            j = self.basis[r]
            if j < n:
                continue
            cands = np.flatnonzero((np.abs(self.T[r]) > 1e-7) & (self.pos[:n] < 0))
            if cands.size == 0:
                continue  # redundant row
            k = int(cands[0])
            self.x[j] = 0.0
            self.T[r] /= self.T[r, k]
            col = self.T[:, k].copy()
            col[r] = 0.0
            nz = np.flatnonzero(col)
            self.T[nz] -= np.outer(col[nz], self.T[r])
            self.pos[j] = -1
            self.pos[k] = r
            self.basis[r] = k
        # remaining basic artificials sit on redundant rows, pinned at zero
        self.hi[n:] = 0.0
        self.x[n:] = 0.0


def solve_lp(p: LpProblem, max_iter: int | None = None) -> LpSolution:
    """Minimize ``p`` with two-phase simplex; never raises for infeasible
    or unbounded problems, only for malformed ones."""
    if not isinstance(p, LpProblem):
        raise LpStructureError("solve_lp expects an LpProblem")
    m, n = p.A.shape
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000
    st = _State(p)

    if m:
        status = st.run(max_iter, polish=False)
        if status == "optimal" and st.infeasibility() > FEAS_TOL and not st.consistent():
            # drifted tableau; redo phase 1 with stricter pivoting
            st = _State(p, rel_piv_tol=100 * REL_PIV_TOL)
            status = st.run(max_iter, polish=False)
        if status != "optimal":
            # phase 1 is bounded below by zero, so this is an iteration cap
            return LpSolution("iteration_limit", st.x[:n].copy(), np.nan, st.iterations)
        if st.infeasibility() > FEAS_TOL:
            return LpSolution("infeasible", st.x[:n].copy(), np.nan, st.iterations)
        st.end_phase_one()
    st.cost = np.concatenate([p.c, np.zeros(m)])
    st.price()

    status = st.run(max(max_iter - st.iterations, 1), polish=True)
    x = st.x[:n].copy()
    if status != "optimal":
        return LpSolution(status, x, np.nan, st.iterations)
    basis = tuple(int(j) for j in st.basis)
    return LpSolution("optimal", x, float(p.c @ x), st.iterations, basis, p)


def check_certificate(p: LpProblem, s: LpSolution, tol: float = 1e-6) -> bool:
    """Verify primal feasibility and optimality conditions at the reported
    basis, recomputing the duals from scratch."""
    if s.status != "optimal":
        return False
    x = np.asarray(s.x, dtype=float)
    m, n = p.A.shape
    if x.shape != (n,) or len(s.basis) != m:
        return False
    if m and np.max(np.abs(p.A @ x - p.b)) > tol:
        return False
    if np.any(x < p.lo - tol) or np.any(x > p.hi + tol):
        return False
    if abs(float(p.c @ x) - s.objective_value) > tol * max(1.0, abs(s.objective_value)):
        return False
    if m:
        B, cb = _basis_matrix(p, s.basis)
        try:
            y = np.linalg.solve(B.T, cb)
        except np.linalg.LinAlgError:
            return False
        basic_art = [j - n for j in s.basis if j >= n]
        if basic_art and np.max(np.abs(y[basic_art])) > tol:
            return False
        d = p.c - y @ p.A
    else:
        d = p.c.copy()
    scale = tol * max(1.0, float(np.max(np.abs(p.c))) if n else 1.0)
    above_lo = x > p.lo + tol
    below_hi = x < p.hi - tol
    if np.any(above_lo & (d > scale)) or np.any(below_hi & (d < -scale)):
        return False
    return True
