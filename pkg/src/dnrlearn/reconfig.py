"""Optimal reconfiguration by branch-and-bound over switch statuses.

The switch vector is searched depth-first in switch order, 0 (open) before
1 (closed).  Radiality is purely graph-level, so the radial completions of
every prefix are enumerated once per network graph and cached; a search
node is then a contiguous range of that sorted leaf list.  Nodes with a
single completion are solved directly; larger nodes solve a relaxation in
which undecided switch lines carry flow without coupling end voltages.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .linsolve import LpSolution, solve_lp
from .lpf import FlowVariables, assemble_lpf
from .netcase import (
    BlockAssignment,
    LoadBlockPartition,
    NetworkCase,
    SwitchConfiguration,
    _DSU,
    energized_topology,
    load_blocks,
)

OBJ_TOL = 1e-9
DEFAULT_LADDER = ((0.9, 1.1), (0.875, 1.125), (0.85, 1.15))
REPAIR_RADIUS = 3


@dataclass
class SearchStats:
    nodes_visited: int = 0
    pruned_radiality: int = 0
    pruned_bound: int = 0


@dataclass(frozen=True, eq=False)
class ReconfigResult:
    """Outcome of one search.

    ``status`` is "optimal", "infeasible" (no radial configuration admits
    a feasible power flow) or "unrealizable" (the requested assignment
    has no radial configuration at all).
    """
    status: str
    x_opt: SwitchConfiguration | None
    assignment: BlockAssignment | None
    objective: float
    lp_count: int
    wall_time: float
    diagnosis: str = ""
    solution: LpSolution | None = field(default=None, repr=False)
    variables: FlowVariables | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def to_json(self, ladder_rung: int | None = None) -> dict:
        return {
            "status": self.status,
            "x": self.x_opt.bits if self.x_opt is not None else None,
            "assignment": list(self.assignment.labels) if self.assignment is not None else None,
            "objective": self.objective if self.optimal else None,
            "lp_count": self.lp_count,
            "wall_ms": self.wall_time * 1000.0,
            "ladder_rung": ladder_rung,
            "diagnosis": self.diagnosis,
        }


# ---------------------------------------------------------------------------
# Graph-level enumeration


@dataclass(frozen=True)
class RadialIndex:
    """All radial switch vectors of a graph that respect its tie groups,
    sorted lexicographically, with the block assignment of each."""
    leaves: tuple[tuple[int, ...], ...]
    assignments: tuple[tuple[int, ...], ...]
    fibers: dict  # assignment labels -> sorted leaf indices

    def fiber(self, a: BlockAssignment) -> tuple[int, ...]:
        return self.fibers.get(a.labels, ())

    def realizable(self, a: BlockAssignment) -> bool:
        return a.labels in self.fibers


def _graph_key(case: NetworkCase, partition: LoadBlockPartition):
    return (
        tuple(b.id for b in case.buses),
        case.substations,
        tuple((ln.from_bus, ln.to_bus, ln.switchable) for ln in case.lines),
        partition.blocks,
        partition.tie_groups,
    )


def radial_index(case: NetworkCase, partition: LoadBlockPartition) -> RadialIndex:
    return _radial_index(_graph_key(case, partition))


@lru_cache(maxsize=64)
def _radial_index(key) -> RadialIndex:
    bus_ids, subs, lines, blocks, ties = key
    pos = {b: k for k, b in enumerate(bus_ids)}
    n = len(bus_ids)
    is_sub = [False] * n
    sub_label = {}
    for s, sid in enumerate(subs):
        is_sub[pos[sid]] = True
        sub_label[pos[sid]] = s
    switches = [(pos[f], pos[t]) for f, t, sw in lines if sw]
    first_bus = [pos[blk[0]] for blk in blocks]

    base = _DSU(n)
    has_sub = list(is_sub)
    for f, t, sw in lines:
        if sw:
            continue
        ra, rb = base.find(pos[f]), base.find(pos[t])
        if ra == rb or (has_sub[ra] and has_sub[rb]):
            return RadialIndex((), (), {})
        base.union(ra, rb)
        r = base.find(ra)
        has_sub[r] = has_sub[ra] or has_sub[rb]

    leaves, assigns = [], []
    k = len(switches)

    def finish(parent, prefix):
        comp_label = {}
        for b in range(n):
            if is_sub[b]:
                comp_label[_find(parent, b)] = sub_label[b]
        labels = []
        for fb in first_bus:
            lab = comp_label.get(_find(parent, fb))
            if lab is None:
                return
            labels.append(lab)
        if all(len({labels[b] for b in grp}) == 1 for grp in ties):
            leaves.append(tuple(prefix))
            assigns.append(tuple(labels))

    def dfs(depth, parent, subflag, prefix):
        if depth == k:
            finish(parent, prefix)
            return
        prefix.append(0)
        dfs(depth + 1, parent, subflag, prefix)
        prefix[-1] = 1
        f, t = switches[depth]
        ra, rb = _find(parent, f), _find(parent, t)
        if ra != rb and not (subflag[ra] and subflag[rb]):
            p2 = list(parent)
            s2 = list(subflag)
            p2[ra] = rb
            s2[rb] = subflag[ra] or subflag[rb]
            dfs(depth + 1, p2, s2, prefix)
        prefix.pop()

    parent0 = [base.find(b) for b in range(n)]
    dfs(0, parent0, has_sub, [])
    fibers: dict = {}
    for k_leaf, a in enumerate(assigns):
        fibers.setdefault(a, []).append(k_leaf)
    return RadialIndex(tuple(leaves), tuple(assigns), {a: tuple(v) for a, v in fibers.items()})


def _find(parent, a):
    while parent[a] != a:
        a = parent[a]
    return a


# ---------------------------------------------------------------------------
# Search


def _search(case: NetworkCase, leaves: Sequence[tuple[int, ...]], groups: Sequence[Sequence[int]],
            stats: SearchStats):
    """Branch-and-bound over ``leaves`` (sorted), partitioned into ``groups``
    of leaf indices (one group per block assignment).

    Each group is bounded by one relaxation LP, then searched depth-first
    on switch variables.  The relaxation of a set of completions couples
    switches closed in all of them, omits those open in all of them and
    keeps the rest flow-only (no voltage coupling).  Groups and children
    are explored best-bound first; the answer is still the lexicographically
    smallest optimum because candidates before the incumbent are pruned
    only when strictly worse, and lexicographically smaller ties replace
    the incumbent.
    """
    sw_ids = [ln.id for ln in case.switchable_lines]
    fixed_ids = [ln.id for ln in case.fixed_lines]
    bits = np.array(leaves, dtype=np.int8).reshape(len(leaves), len(sw_ids))
    best = {"obj": float("inf"), "idx": -1, "sol": None, "fv": None}
    lp_count = 0

    def solve(always, sometimes):
        nonlocal lp_count
        coupled = fixed_ids + [sw_ids[i] for i in np.flatnonzero(always)]
        flow_only = [sw_ids[i] for i in np.flatnonzero(sometimes & ~always)]
        lp, fv = assemble_lpf(case, coupled, flow_only)
        lp_count += 1
        return solve_lp(lp), fv

    def offer(idx, sol, fv):
        if not sol.optimal:
            return
        obj = sol.objective_value
        if obj < best["obj"] - OBJ_TOL or (obj <= best["obj"] + OBJ_TOL and idx < best["idx"]):
            best.update(obj=obj, idx=idx, sol=sol, fv=fv)

    def prunable(ids, bound):
        if best["idx"] < 0:
            return bound == np.inf
        if ids[0] > best["idx"]:
            return bound >= best["obj"] - OBJ_TOL
        return bound > best["obj"] + OBJ_TOL

    def evaluate(ids):
        """Solve a single leaf outright, else return the relaxation bound."""
        stats.nodes_visited += 1
        if len(ids) == 1:
            if not energized_topology(case, leaves[ids[0]]).radial:  # guaranteed by enumeration
                raise AssertionError(f"non-radial leaf {leaves[ids[0]]}")
            mask = bits[ids[0]].astype(bool)
            offer(ids[0], *solve(mask, mask))
            return None
        block = bits[ids]
        sol, _ = solve(block.all(axis=0), block.any(axis=0))
        return sol.objective_value if sol.optimal else np.inf

    def expand(ids, bound):
        if prunable(ids, bound):
            stats.pruned_bound += 1
            return
        block = bits[ids]
        depth = int(np.flatnonzero(block.all(axis=0) != block.any(axis=0))[0])
        mid = int(np.searchsorted(block[:, depth], 1))
        children = []
        for part in (ids[:mid], ids[mid:]):
            b = evaluate(part)
            if b is not None:
                children.append((b, part[0], part))
        for b, _, part in sorted(children, key=lambda t: t[:2]):
            expand(part, b)

    tops = []
    for g in groups:
        ids = np.asarray(sorted(g), dtype=np.intp)
        b = evaluate(ids)
        if b is not None:
            tops.append((b, ids[0], ids))
    for b, _, ids in sorted(tops, key=lambda t: t[:2]):
        expand(ids, b)
    if not groups:
        stats.nodes_visited += 1
        stats.pruned_radiality += 1
    leaf = leaves[best["idx"]] if best["idx"] >= 0 else None
    return {"obj": best["obj"], "leaf": leaf, "sol": best["sol"], "fv": best["fv"]}, lp_count


def _result(case, partition, best, lp_count, t0, fail_status, diagnosis=""):
    wall = time.perf_counter() - t0
    if best["leaf"] is None:
        return ReconfigResult(fail_status, None, None, float("nan"), lp_count, wall,
                              diagnosis or "no feasible topology")
    x = SwitchConfiguration(best["leaf"])
    topo = energized_topology(case, x)
    if not topo.radial:
        raise AssertionError(f"search returned non-radial x {x.bits}")
    a = BlockAssignment(tuple(topo.feeder[blk[0]] for blk in partition.blocks))
    return ReconfigResult("optimal", x, a, float(best["obj"]), lp_count, wall,
                          solution=best["sol"], variables=best["fv"])


def solve_exact(case: NetworkCase, partition: LoadBlockPartition | None = None
                ) -> tuple[ReconfigResult, SearchStats]:
    """Minimum-cost radial configuration; ties go to the lexicographically
    smallest switch vector."""
    t0 = time.perf_counter()
    partition = partition or load_blocks(case)
    stats = SearchStats()
    index = radial_index(case, partition)
    best, lp_count = _search(case, index.leaves, list(index.fibers.values()), stats)
    diag = "" if index.leaves else "no radial configuration exists"
    return _result(case, partition, best, lp_count, t0, "infeasible", diag), stats


def explain_unrealizable(case: NetworkCase, partition: LoadBlockPartition, a: BlockAssignment) -> str:
    """Human-readable reason why no radial configuration realizes ``a``."""
    if len(a.labels) != partition.n_blocks:
        return f"assignment has {len(a.labels)} labels for {partition.n_blocks} blocks"
    n_sub = len(case.substations)
    if any(not 0 <= v < n_sub for v in a.labels):
        return f"labels must lie in [0, {n_sub})"
    for grp in partition.tie_groups:
        if len({a.labels[b] for b in grp}) > 1:
            return f"tied blocks {list(grp)} carry different labels"
    for s, sub in enumerate(case.substations):
        b = partition.block_of_bus[sub]
        if a.labels[b] != s:
            return f"block {b} holds substation {sub} but is labeled {a.labels[b]}"
    dsu = _DSU(partition.n_blocks)
    for ln in case.switchable_lines:
        bf, bt = partition.block_of_bus[ln.from_bus], partition.block_of_bus[ln.to_bus]
        if a.labels[bf] == a.labels[bt]:
            dsu.union(bf, bt)
    for b, lab in enumerate(a.labels):
        root = partition.block_of_bus[case.substations[lab]]
        if dsu.find(b) != dsu.find(root):
            return (f"block {b} has no path to substation {case.substations[lab]} "
                    f"through blocks labeled {lab}")
    return "no radial configuration realizes the assignment"


def solve_restricted(case: NetworkCase, partition: LoadBlockPartition | None, a: BlockAssignment
                     ) -> ReconfigResult:
    """Best configuration among those whose block assignment equals ``a``."""
    t0 = time.perf_counter()
    partition = partition or load_blocks(case)
    index = radial_index(case, partition)
    fiber = index.fiber(a)
    if not fiber:
        return ReconfigResult("unrealizable", None, None, float("nan"), 0,
                              time.perf_counter() - t0, explain_unrealizable(case, partition, a))
    best, lp_count = _search(case, index.leaves, [fiber], SearchStats())
    return _result(case, partition, best, lp_count, t0, "infeasible")


def repair_assignment(case: NetworkCase, partition: LoadBlockPartition | None, a: BlockAssignment
                      ) -> BlockAssignment | None:
    """Nearest realizable assignment in Hamming distance (ties broken
    lexicographically); None if the case has no radial configuration."""
    partition = partition or load_blocks(case)
    index = radial_index(case, partition)
    if not index.fibers:
        return None
    if index.realizable(a):
        return a
    labels = a.labels
    n_sub = len(case.substations)
    for radius in range(1, REPAIR_RADIUS + 1):
        found = []
        for blocks in itertools.combinations(range(len(labels)), radius):
            choices = [[v for v in range(n_sub) if v != labels[b]] for b in blocks]
            for new in itertools.product(*choices):
                cand = list(labels)
                for b, v in zip(blocks, new):
                    cand[b] = v
                if tuple(cand) in index.fibers:
                    found.append(tuple(cand))
        if found:
            return BlockAssignment(min(found))
    best = min(index.fibers, key=lambda r: (sum(x != y for x, y in zip(r, labels)), r))
    return BlockAssignment(best)


def relax_and_solve(case: NetworkCase, partition: LoadBlockPartition | None, a: BlockAssignment,
                    ladder: Sequence[tuple[float, float]] = DEFAULT_LADDER
                    ) -> tuple[ReconfigResult, int | None]:
    """Restricted solve under progressively wider voltage bounds.

    Returns the first optimal result with its rung index, or the last
    failure with rung None.
    """
    if not ladder:
        raise ValueError("ladder must have at least one rung")
    widths = [(lo, hi) for lo, hi in ladder]
    for (lo0, hi0), (lo1, hi1) in zip(widths, widths[1:]):
        if lo1 > lo0 or hi1 < hi0:
            raise ValueError("ladder rungs must widen monotonically")
    partition = partition or load_blocks(case)
    t0 = time.perf_counter()
    lp_total = 0
    res = None
    for rung, (vmin, vmax) in enumerate(widths):
        res = solve_restricted(case.with_voltage_bounds(vmin, vmax), partition, a)
        lp_total += res.lp_count
        if res.optimal or res.status == "unrealizable":
            break
    wall = time.perf_counter() - t0
    res = ReconfigResult(res.status, res.x_opt, res.assignment, res.objective, lp_total, wall,
                         res.diagnosis, res.solution, res.variables)
    return res, (rung if res.optimal else None)
