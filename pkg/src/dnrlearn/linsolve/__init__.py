"""Self-contained dense LP solver used by every optimization in the package.

The pivoting loop has a compiled implementation (``_ckernel``) and a numpy
fallback (``_pykernel``); the compiled one is used when it imports.  Set
``DNRLEARN_PURE_PYTHON=1`` to force the fallback.
"""
from .dump import dump_problem, parse_dump
from .simplex import (
    FEAS_TOL,
    OPT_TOL,
    LpProblem,
    LpSolution,
    LpStructureError,
    available_backends,
    check_certificate,
    get_backend,
    set_backend,
    solve_lp,
)

__all__ = [
    "FEAS_TOL", "OPT_TOL", "LpProblem", "LpSolution", "LpStructureError",
    "available_backends", "check_certificate", "dump_problem", "get_backend",
    "parse_dump", "set_backend", "solve_lp",
]
