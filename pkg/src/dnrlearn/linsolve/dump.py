"""Fixed-column text dump of an LpProblem, for cross-checking solvers by hand."""
from __future__ import annotations

import numpy as np

from .simplex import LpProblem, LpStructureError

WIDTH = 25
_HEADER = "LPDUMP 1"


def _fmt(v: float) -> str:
    if v == np.inf:
        return "inf".rjust(WIDTH)
    if v == -np.inf:
        return "-inf".rjust(WIDTH)
    return f"{v:{WIDTH}.17e}"


def dump_problem(p: LpProblem) -> str:
    """One row per line: objective, lower bounds, upper bounds, then each
    equality row followed by its rhs.  Every field is WIDTH characters."""
    out = [_HEADER, f"{p.n_rows} {p.n_vars}"]
    out.append("c   " + "".join(_fmt(v) for v in p.c))
    out.append("lo  " + "".join(_fmt(v) for v in p.lo))
    out.append("hi  " + "".join(_fmt(v) for v in p.hi))
    for i in range(p.n_rows):
        out.append("eq  " + "".join(_fmt(v) for v in p.A[i]) + " |" + _fmt(p.b[i]))
    return "\n".join(out) + "\n"


def _fields(s: str, n: int) -> np.ndarray:
    vals = [s[k * WIDTH:(k + 1) * WIDTH] for k in range(n)]
    return np.array([float(v) for v in vals])


def parse_dump(text: str) -> LpProblem:
    lines = text.splitlines()
    if not lines or lines[0].strip() != _HEADER:
        raise LpStructureError("not an LP dump")
    m, n = (int(t) for t in lines[1].split())
    c = _fields(lines[2][4:], n)
    lo = _fields(lines[3][4:], n)
    hi = _fields(lines[4][4:], n)
    A = np.zeros((m, n))
    b = np.zeros(m)
    for i in range(m):
        body, rhs = lines[5 + i][4:].split(" |")
        A[i] = _fields(body, n)
        b[i] = float(rhs)
    return LpProblem(c, A, b, lo, hi)
