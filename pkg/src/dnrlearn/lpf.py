"""Multi-phase linearized power flow (lossless, balanced-voltage) as an LP.

For an energized line i->j with per-phase flow Lambda (P + jQ):

    balance at each bus/phase:  inflow + generation - load = outflow
    voltage drop per phase k:   w_j[k] = w_i[k] - 2 Re( sum_m gamma[k,m] Lambda[m] conj(z[k,m]) )

where w is the squared voltage magnitude and gamma the constant phase
rotation matrix.  Only the diagonal of the squared-voltage matrix is kept.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .linsolve import LpProblem, LpSolution
from .netcase import NetworkCase, PhaseSet, Topology

ALPHA = np.exp(-2j * np.pi / 3)
GAMMA = np.array([
    [1, ALPHA**2, ALPHA],
    [ALPHA, 1, ALPHA**2],
    [ALPHA**2, ALPHA, 1],
])
SUBSTATION_W = 1.0


def gamma_submatrix(phases: PhaseSet | str) -> np.ndarray:
    """Rows/columns of the rotation matrix for the phases present."""
    if not isinstance(phases, PhaseSet):
        phases = PhaseSet(phases)
    idx = phases.indices
    return GAMMA[np.ix_(idx, idx)]


@dataclass(frozen=True)
class FlowVariables:
    """Column index of every LP variable, keyed by element id then phase."""
    line_p: dict
    line_q: dict
    bus_w: dict
    gen_p: dict
    gen_q: dict
    n_vars: int


class TopologyError(ValueError):
    pass


def build_lpf(case: NetworkCase, topology: Topology) -> tuple[LpProblem, FlowVariables]:
    """LP for a radial energized topology."""
    if not topology.radial:
        raise TopologyError(f"LPF needs a radial topology, got {topology.diagnosis}")
    return assemble_lpf(case, topology.energized)


def assemble_lpf(case: NetworkCase, coupled: Iterable[str], flow_only: Iterable[str] = ()) -> tuple[LpProblem, FlowVariables]:
    """Build the LP over an arbitrary line set.

    ``coupled`` lines carry flow and impose the voltage-drop equation;
    ``flow_only`` lines carry flow without coupling end voltages.  The
    latter relaxes "this line may or may not be closed".
    """
    coupled = set(coupled)
    flow_only = set(flow_only) - coupled
    lines = [ln for ln in case.lines if ln.id in coupled or ln.id in flow_only]
    for ln in lines:
        for end in (ln.from_bus, ln.to_bus):
            if not ln.phases.issubset(case.bus(end).phases):
                raise TopologyError(f"line {ln.id}: phases {ln.phases} missing at bus {end}")

    lo, hi, cost = [], [], []

    def new_var(lower, upper, c=0.0):
        lo.append(lower)
        hi.append(upper)
        cost.append(c)
        return len(lo) - 1

    line_p, line_q = {}, {}
    for ln in lines:
        line_p[ln.id] = {ph: new_var(-s, s) for ph, s in zip(ln.phases, ln.smax_pu)}
        line_q[ln.id] = {ph: new_var(-s, s) for ph, s in zip(ln.phases, ln.smax_pu)}
    bus_w = {}
    for b in case.buses:
        if b.is_substation:
            bus_w[b.id] = {ph: new_var(SUBSTATION_W, SUBSTATION_W) for ph in b.phases}
        else:
            bus_w[b.id] = {ph: new_var(b.vmin_pu**2, b.vmax_pu**2) for ph in b.phases}
    gen_p, gen_q = {}, {}
    for g in case.generators:
        gen_p[g.id] = {ph: new_var(lo_, hi_, g.cost) for ph, lo_, hi_ in zip(g.phases, g.pmin, g.pmax)}
        gen_q[g.id] = {ph: new_var(lo_, hi_) for ph, lo_, hi_ in zip(g.phases, g.qmin, g.qmax)}
    n = len(lo)

    # balance rows: one P and one Q row per bus phase
    row_of = {}
    for b in case.buses:
        for ph in b.phases:
            row_of[b.id, ph] = len(row_of)
    n_bal = len(row_of)
    n_drop = sum(len(ln.phases) for ln in lines if ln.id in coupled)
    A = np.zeros((2 * n_bal + n_drop, n))
    rhs = np.zeros(2 * n_bal + n_drop)

    for ln in lines:
        for ph in ln.phases:
            for bus, sign in ((ln.to_bus, 1.0), (ln.from_bus, -1.0)):
                r = row_of[bus, ph]
                A[r, line_p[ln.id][ph]] += sign
                A[n_bal + r, line_q[ln.id][ph]] += sign
    for g in case.generators:
        for ph in g.phases:
            r = row_of[g.bus, ph]
            A[r, gen_p[g.id][ph]] += 1.0
            A[n_bal + r, gen_q[g.id][ph]] += 1.0
    for ld in case.loads:
        for ph, p, q in zip(ld.phases, ld.p_nominal, ld.q_nominal):
            r = row_of[ld.bus, ph]
            rhs[r] += p
            rhs[n_bal + r] += q

    r = 2 * n_bal
    for ln in lines:
        if ln.id not in coupled:
            continue
        g = gamma_submatrix(ln.phases) * np.conj(ln.z)
        phs = ln.phases.mask
        for k, ph in enumerate(phs):
            A[r, bus_w[ln.to_bus][ph]] += 1.0
            A[r, bus_w[ln.from_bus][ph]] -= 1.0
            for mm, ph2 in enumerate(phs):
                A[r, line_p[ln.id][ph2]] += 2.0 * g[k, mm].real
                A[r, line_q[ln.id][ph2]] -= 2.0 * g[k, mm].imag
            r += 1

    lp = LpProblem(np.array(cost), A, rhs, np.array(lo), np.array(hi))
    return lp, FlowVariables(line_p, line_q, bus_w, gen_p, gen_q, n)


def extract_dispatch(sol: LpSolution, fv: FlowVariables, case: NetworkCase) -> dict:
    """Physical-units report: generator MW/Mvar, bus voltage magnitudes (pu),
    line flows (pu and MW/Mvar)."""
    if not sol.optimal:
        raise ValueError(f"cannot report a {sol.status} solution")
    x = sol.x
    base = case.base_mva

    def per_phase(idx):
        return {ph: float(x[k]) for ph, k in idx.items()}

    gens = []
    for g in case.generators:
        p, q = per_phase(fv.gen_p[g.id]), per_phase(fv.gen_q[g.id])
        gens.append({"id": g.id, "bus": g.bus, "kind": g.kind, "p_pu": p, "q_pu": q,
                     "p_mw": sum(p.values()) * base, "q_mvar": sum(q.values()) * base})
    volts = [{"id": b, "v_pu": {ph: float(np.sqrt(max(x[k], 0.0))) for ph, k in idx.items()}}
             for b, idx in fv.bus_w.items()]
    flows = []
    for lid in fv.line_p:
        p, q = per_phase(fv.line_p[lid]), per_phase(fv.line_q[lid])
        flows.append({"id": lid, "p_pu": p, "q_pu": q,
                      "p_mw": sum(p.values()) * base, "q_mvar": sum(q.values()) * base})
    return {"generators": gens, "bus_voltages": volts, "line_flows": flows,
            "objective": float(sol.objective_value)}
