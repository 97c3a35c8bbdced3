"""Compiled versus numpy simplex kernel on the LPs the package actually solves.

    python benchmarks/bench_simplex.py [--repeat N]

Prints per-workload mean solve time for each available backend and the
speedup, and checks that both backends return bit-identical solutions.
"""
import argparse
import time

import numpy as np

from dnrlearn.linsolve import available_backends, get_backend, set_backend, solve_lp
from dnrlearn.linsolve.simplex import LpProblem
from dnrlearn.lpf import assemble_lpf, build_lpf
from dnrlearn.netcase import bundled_case_path, energized_topology, load_blocks, load_case
from dnrlearn.reconfig import radial_index


def random_lp(rng, m, n):
    A = rng.normal(size=(m, n))
    x0 = rng.uniform(0, 1, n)
    return LpProblem(rng.normal(size=n), A, A @ x0, np.zeros(n), np.full(n, 2.0))


def workloads():
    case = load_case(bundled_case_path())
    part = load_blocks(case)
    leaves = radial_index(case, part).leaves
    rng = np.random.default_rng(0)
    lpf = []
    for x in leaves[::8]:
        scen = case.with_scenario(rng.uniform(0.8, 1.2, len(case.loads)), rng.uniform(0, 1, len(case.pv_units)))
        lpf.append(build_lpf(scen, energized_topology(scen, x))[0])
    # fiber relaxation: every switchable line carries flow without voltage coupling
    relax = [assemble_lpf(case, [ln.id for ln in case.fixed_lines], [ln.id for ln in case.switchable_lines])[0]]
    small = [random_lp(rng, 20, 30) for _ in range(20)]
    return {"lpf radial": lpf, "lpf relaxation": relax, "random 20x30": small}


def time_backend(problems, repeat):
    best = np.inf
    sols = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        sols = [solve_lp(p) for p in problems]
        best = min(best, time.perf_counter() - t0)
    return best / len(problems), sols


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = available_backends()
    start = get_backend()
    print(f"backends: {', '.join(backends)}")
    print(f"{'workload':<16} {'n':>3} " + " ".join(f"{b + ' ms':>12}" for b in backends) + "   speedup  identical")
    try:
        for name, problems in workloads().items():
            times, sols = {}, {}
            for b in backends:
                set_backend(b)
                times[b], sols[b] = time_backend(problems, args.repeat)
            same = all(
                np.array_equal(s1.x, s2.x) and s1.status == s2.status
                for s1, s2 in zip(*(sols[b] for b in backends))
            ) if len(backends) > 1 else True
            speed = times["python"] / times["cython"] if {"python", "cython"} <= set(backends) else float("nan")
            cols = " ".join(f"{times[b] * 1e3:12.3f}" for b in backends)
            print(f"{name:<16} {len(problems):>3} {cols}   {speed:7.1f}x  {same}")
    finally:
        set_backend(start)


if __name__ == "__main__":
    main()
