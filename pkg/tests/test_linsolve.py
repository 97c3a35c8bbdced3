import dataclasses
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from dnrlearn import linsolve
from dnrlearn.linsolve import (
    LpProblem,
    LpStructureError,
    check_certificate,
    dump_problem,
    parse_dump,
    solve_lp,
)
from oracles import random_lp, textbook_simplex


@pytest.fixture(params=linsolve.available_backends())
def backend(request):
    prev = linsolve.get_backend()
    linsolve.set_backend(request.param)
    yield request.param
    linsolve.set_backend(prev)


def test_one_pivot(backend):
    p = LpProblem(c=[-1, 0], A=[[1, 1]], b=[1], lo=[0, 0], hi=[1, 1])
    s = solve_lp(p)
    assert s.status == "optimal"
    assert s.x[0] == pytest.approx(1.0)
    assert s.objective_value == pytest.approx(-1.0)
    assert check_certificate(p, s)


def test_bound_conflict_is_infeasible(backend):
    p = LpProblem(c=[0], A=[[1]], b=[2], lo=[0], hi=[1])
    assert solve_lp(p).status == "infeasible"


def test_unbounded_status(backend):
    p = LpProblem(c=[-1, 0], A=[[1, -1]], b=[0], lo=[0, 0], hi=[np.inf, np.inf])
    assert solve_lp(p).status == "unbounded"


def test_no_rows():
    p = LpProblem(c=[1, -2], A=np.zeros((0, 2)), b=[], lo=[0, -1], hi=[3, 4])
    s = solve_lp(p)
    assert s.status == "optimal"
    assert s.x.tolist() == [0.0, 4.0]


@pytest.mark.parametrize("kwargs", [
    dict(c=[1, 2], A=[[1, 1, 1]], b=[1], lo=[0, 0], hi=[1, 1]),
    dict(c=[1, 2], A=[[1, 1]], b=[1, 2], lo=[0, 0], hi=[1, 1]),
    dict(c=[1, 2], A=[[1, 1]], b=[1], lo=[0], hi=[1, 1]),
    dict(c=[1], A=[[1]], b=[1], lo=[2], hi=[1]),
])
def test_structural_errors(kwargs):
    with pytest.raises(LpStructureError):
        LpProblem(**kwargs)


def test_random_lps_match_textbook_oracle(backend):
    rng = np.random.default_rng(1234)
    for trial in range(60):
        n = int(rng.integers(2, 21))
        m = int(rng.integers(1, min(n, 10) + 1))
        c, A, b, lo, hi = random_lp(rng, n, m, unbounded_ok=trial % 3 == 0)
        p = LpProblem(c, A, b, lo, hi)
        s = solve_lp(p)
        status, obj = textbook_simplex(c, A, b, lo, hi)
        assert s.status == status, trial
        if status == "optimal":
            assert s.objective_value == pytest.approx(obj, abs=1e-6), trial
            assert check_certificate(p, s)


def test_random_lps_match_highs():
    rng = np.random.default_rng(99)
    for _ in range(30):
        c, A, b, lo, hi = random_lp(rng, 20, 10)
        s = solve_lp(LpProblem(c, A, b, lo, hi))
        ref = linprog(c, A_eq=A, b_eq=b, bounds=list(zip(lo, hi)), method="highs")
        assert s.status == "optimal" and ref.status == 0
        assert s.objective_value == pytest.approx(ref.fun, abs=1e-6)


def test_certificate_rejects_perturbed_basic_value():
    rng = np.random.default_rng(5)
    c, A, b, lo, hi = random_lp(rng, 12, 6)
    p = LpProblem(c, A, b, lo, hi)
    s = solve_lp(p)
    assert check_certificate(p, s)
    basic = [j for j in s.basis if j < p.n_vars]
    x = s.x.copy()
    x[basic[0]] += 1e-2
    bad = dataclasses.replace(s, x=x, objective_value=float(p.c @ x))
    assert not check_certificate(p, bad)


def test_certificate_suite_fifty_lps():
    rng = np.random.default_rng(77)
    passed = 0
    for _ in range(50):
        c, A, b, lo, hi = random_lp(rng, int(rng.integers(5, 30)), int(rng.integers(2, 12)))
        p = LpProblem(c, A, b, lo, hi)
        s = solve_lp(p)
        passed += s.status == "optimal" and check_certificate(p, s)
    assert passed == 50


def test_redundant_rows_are_handled(backend):
    A = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.0, 1.0, 1.0]])
    b = np.array([1.0, 2.0, 1.5])
    p = LpProblem([1.0, 2.0, 3.0], A, b, np.zeros(3), np.full(3, 5.0))
    s = solve_lp(p)
    ref = linprog(p.c, A_eq=A, b_eq=b, bounds=[(0, 5)] * 3, method="highs")
    assert s.status == "optimal"
    assert s.objective_value == pytest.approx(ref.fun, abs=1e-9)
    assert check_certificate(p, s)


def test_determinism():
    rng = np.random.default_rng(3)
    c, A, b, lo, hi = random_lp(rng, 25, 12)
    s1 = solve_lp(LpProblem(c, A, b, lo, hi))
    s2 = solve_lp(LpProblem(c.copy(), A.copy(), b.copy(), lo.copy(), hi.copy()))
    assert s1.x.tobytes() == s2.x.tobytes()
    assert s1.iterations == s2.iterations


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), lam=st.floats(0.1, 50.0))
def test_objective_scaling(seed, lam):
    rng = np.random.default_rng(seed)
    c, A, b, lo, hi = random_lp(rng, 10, 5)
    s1 = solve_lp(LpProblem(c, A, b, lo, hi))
    s2 = solve_lp(LpProblem(lam * c, A, b, lo, hi))
    assert s2.objective_value == pytest.approx(lam * s1.objective_value, rel=1e-9, abs=1e-9)
    assert np.allclose(s1.x, s2.x, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_phase_one_zero_iff_feasible(seed):
    rng = np.random.default_rng(seed)
    c, A, b, lo, hi = random_lp(rng, 8, 4)
    if seed % 2:
        b = b + rng.normal(scale=20, size=b.size)
    s = solve_lp(LpProblem(c, A, b, lo, hi))
    ref = linprog(c, A_eq=A, b_eq=b, bounds=list(zip(lo, hi)), method="highs")
    assert (s.status == "infeasible") == (ref.status == 2)


@pytest.mark.skipif(len(linsolve.available_backends()) < 2, reason="compiled kernel not built")
def test_backends_agree_bitwise():
    rng = np.random.default_rng(11)
    prev = linsolve.get_backend()
    try:
        for _ in range(10):
            p = LpProblem(*random_lp(rng, 30, 15))
            linsolve.set_backend("python")
            a = solve_lp(p)
            linsolve.set_backend("cython")
            b = solve_lp(p)
            assert a.status == b.status and a.iterations == b.iterations
            assert a.x.tobytes() == b.x.tobytes()
    finally:
        linsolve.set_backend(prev)


def test_dump_round_trip():
    rng = np.random.default_rng(8)
    c, A, b, lo, hi = random_lp(rng, 6, 3, unbounded_ok=True)
    p = LpProblem(c, A, b, lo, hi)
    text = dump_problem(p)
    q = parse_dump(text)
    for name in ("c", "A", "b", "lo", "hi"):
        assert np.array_equal(getattr(p, name), getattr(q, name))
    widths = {len(line) for line in text.splitlines()[2:5]}
    assert len(widths) == 1
