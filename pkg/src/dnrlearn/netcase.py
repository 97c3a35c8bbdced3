"""Feeder data model, case-file I/O, load blocks and radiality checks.

A case is a multi-phase distribution feeder with some remotely switchable
lines.  Everything here is immutable once parsed; derived cases (scaled
loads, overridden voltage limits, frozen switches) are new objects.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

PHASES = "abc"


class CaseError(ValueError):
    """Raised for malformed or inconsistent case data."""


@dataclass(frozen=True)
class PhaseSet:
    mask: str

    def __post_init__(self):
        if not isinstance(self.mask, str) or not self.mask:
            raise CaseError(f"phase set must be a non-empty subset of 'abc', got {self.mask!r}")
        if any(ch not in PHASES for ch in self.mask) or len(set(self.mask)) != len(self.mask):
            raise CaseError(f"invalid phase set {self.mask!r}")
        canon = "".join(ch for ch in PHASES if ch in self.mask)
        object.__setattr__(self, "mask", canon)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(PHASES.index(ch) for ch in self.mask)

    def __len__(self):
        return len(self.mask)

    def __iter__(self):
        return iter(self.mask)

    def __contains__(self, ph):
        return ph in self.mask

    def issubset(self, other: "PhaseSet") -> bool:
        return set(self.mask) <= set(other.mask)

    def __str__(self):
        return self.mask


@dataclass(frozen=True)
class Bus:
    id: str
    phases: PhaseSet
    vmin_pu: float = 0.9
    vmax_pu: float = 1.1
    is_substation: bool = False


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    phases: PhaseSet
    r: tuple[tuple[float, ...], ...]
    x: tuple[tuple[float, ...], ...]
    smax_pu: tuple[float, ...]
    switchable: bool = False

    @property
    def z(self) -> np.ndarray:
        """Complex series impedance matrix, |phases| x |phases|, per-unit."""
        return np.asarray(self.r, dtype=float) + 1j * np.asarray(self.x, dtype=float)


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    phases: PhaseSet
    pmin: tuple[float, ...]
    pmax: tuple[float, ...]
    qmin: tuple[float, ...]
    qmax: tuple[float, ...]
    cost: float
    kind: str  # "substation" | "pv"
    rated: tuple[float, ...] = ()


@dataclass(frozen=True)
class Load:
    id: str
    bus: str
    phases: PhaseSet
    p_nominal: tuple[float, ...]
    q_nominal: tuple[float, ...]


@dataclass(frozen=True)
class NetworkCase:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    loads: tuple[Load, ...]
    base_kv: float
    base_mva: float
    tie_groups: tuple[tuple[str, ...], ...] = ()
    name: str = ""
    _bus_index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "_bus_index", {b.id: k for k, b in enumerate(self.buses)})

    # -- lookups ---------------------------------------------------------
    def bus(self, bus_id: str) -> Bus:
        return self.buses[self._bus_index[bus_id]]

    def bus_position(self, bus_id: str) -> int:
        return self._bus_index[bus_id]

    @property
    def substations(self) -> tuple[str, ...]:
        """Substation bus ids in file order; a label is an index into this."""
        return tuple(b.id for b in self.buses if b.is_substation)

    @property
    def switchable_lines(self) -> tuple[Line, ...]:
        return tuple(ln for ln in self.lines if ln.switchable)

    @property
    def fixed_lines(self) -> tuple[Line, ...]:
        return tuple(ln for ln in self.lines if not ln.switchable)

    @property
    def n_switches(self) -> int:
        return sum(1 for ln in self.lines if ln.switchable)

    @property
    def pv_units(self) -> tuple[Generator, ...]:
        return tuple(g for g in self.generators if g.kind == "pv")

    # -- features --------------------------------------------------------
    def load_features(self) -> np.ndarray:
        """Active demand per load, summed over phases (pu)."""
        return np.array([sum(ld.p_nominal) for ld in self.loads], dtype=float)

    def pv_features(self) -> np.ndarray:
        """Available active power per PV unit, summed over phases (pu)."""
        return np.array([sum(g.pmax) for g in self.pv_units], dtype=float)

    # -- derived cases ---------------------------------------------------
    def with_scenario(self, load_scale: Sequence[float], pv_fraction: Sequence[float]) -> "NetworkCase":
        """Scale each load's P and Q by one factor and set PV availability
        to a fraction of its rating."""
        load_scale = np.asarray(load_scale, dtype=float)
        pv_fraction = np.asarray(pv_fraction, dtype=float)
        if load_scale.shape != (len(self.loads),):
            raise ValueError(f"expected {len(self.loads)} load scales, got {load_scale.shape}")
        pvs = self.pv_units
        if pv_fraction.shape != (len(pvs),):
            raise ValueError(f"expected {len(pvs)} PV fractions, got {pv_fraction.shape}")
        loads = tuple(
            replace(ld,
                    p_nominal=tuple(float(s * p) for p in ld.p_nominal),
                    q_nominal=tuple(float(s * q) for q in ld.q_nominal))
            for ld, s in zip(self.loads, load_scale)
        )
        frac = dict(zip((g.id for g in pvs), pv_fraction))
        gens = tuple(
            replace(g, pmax=tuple(float(frac[g.id] * r) for r in g.rated)) if g.kind == "pv" else g
            for g in self.generators
        )
        return replace(self, loads=loads, generators=gens)

    def with_voltage_bounds(self, vmin: float, vmax: float) -> "NetworkCase":
        if not 0 < vmin < vmax:
            raise ValueError(f"need 0 < vmin < vmax, got {vmin}, {vmax}")
        return replace(self, buses=tuple(replace(b, vmin_pu=vmin, vmax_pu=vmax) for b in self.buses))

    def with_fixed_switches(self, status: Mapping[str, int]) -> "NetworkCase":
        """Freeze some switchable lines: closed ones become ordinary lines,
        open ones are dropped from the case."""
        lines = []
        for ln in self.lines:
            if ln.switchable and ln.id in status:
                if status[ln.id]:
                    lines.append(replace(ln, switchable=False))
            else:
                lines.append(ln)
        unknown = set(status) - {ln.id for ln in self.switchable_lines}
        if unknown:
            raise ValueError(f"not switchable lines: {sorted(unknown)}")
        return replace(self, lines=tuple(lines))


# ---------------------------------------------------------------------------
# Parsing


def _per_phase(value, n: int, what: str) -> tuple[float, ...]:
    if isinstance(value, (int, float)):
        return (float(value),) * n
    vals = tuple(float(v) for v in value)
    if len(vals) != n:
        raise CaseError(f"{what}: expected {n} per-phase values, got {len(vals)}")
    return vals


def _matrix(value, n: int, what: str) -> tuple[tuple[float, ...], ...]:
    rows = tuple(tuple(float(v) for v in row) for row in value)
    if len(rows) != n or any(len(r) != n for r in rows):
        raise CaseError(f"{what}: expected a {n}x{n} matrix")
    return rows


def _need(obj: Mapping, key: str, where: str):
    if key not in obj:
        raise CaseError(f"{where}: missing required key {key!r}")
    return obj[key]


def case_from_dict(doc: Mapping) -> NetworkCase:
    if not isinstance(doc, Mapping):
        raise CaseError("case document must be a JSON object")
    buses = []
    for k, b in enumerate(_need(doc, "buses", "case")):
        where = f"bus #{k}"
        bid = str(_need(b, "id", where))
        where = f"bus {bid}"
        buses.append(Bus(
            id=bid,
            phases=PhaseSet(str(b.get("phases", "abc"))),
            vmin_pu=float(b.get("vmin_pu", 0.9)),
            vmax_pu=float(b.get("vmax_pu", 1.1)),
            is_substation=bool(b.get("substation", False)),
        ))
    bus_phase = {b.id: b.phases for b in buses}
    if len(bus_phase) != len(buses):
        raise CaseError("duplicate bus id")

    def check_bus(ref, where):
        ref = str(ref)
        if ref not in bus_phase:
            raise CaseError(f"{where}: references unknown bus {ref!r}")
        return ref

    lines = []
    for k, ln in enumerate(_need(doc, "lines", "case")):
        lid = str(_need(ln, "id", f"line #{k}"))
        where = f"line {lid}"
        fb = check_bus(_need(ln, "from", where), where)
        tb = check_bus(_need(ln, "to", where), where)
        if fb == tb:
            raise CaseError(f"{where}: from and to bus are the same")
        ph = PhaseSet(str(ln.get("phases", "abc")))
        n = len(ph)
        lines.append(Line(
            id=lid, from_bus=fb, to_bus=tb, phases=ph,
            r=_matrix(_need(ln, "r", where), n, f"{where} r"),
            x=_matrix(_need(ln, "x", where), n, f"{where} x"),
            smax_pu=_per_phase(_need(ln, "smax_pu", where), n, f"{where} smax_pu"),
            switchable=bool(ln.get("switchable", False)),
        ))

    gens = []
    for k, g in enumerate(doc.get("generators", ())):
        gid = str(_need(g, "id", f"generator #{k}"))
        where = f"generator {gid}"
        bus = check_bus(_need(g, "bus", where), where)
        ph = PhaseSet(str(g.get("phases", bus_phase[bus].mask)))
        n = len(ph)
        kind = str(g.get("kind", "substation"))
        if kind not in ("substation", "pv"):
            raise CaseError(f"{where}: kind must be 'substation' or 'pv', got {kind!r}")
        pmax = _per_phase(_need(g, "pmax", where), n, f"{where} pmax")
        rated = _per_phase(g["rated"], n, f"{where} rated") if "rated" in g else pmax
        gens.append(Generator(
            id=gid, bus=bus, phases=ph,
            pmin=_per_phase(g.get("pmin", 0.0), n, f"{where} pmin"),
            pmax=pmax,
            qmin=_per_phase(g.get("qmin", 0.0), n, f"{where} qmin"),
            qmax=_per_phase(g.get("qmax", 0.0), n, f"{where} qmax"),
            cost=float(g.get("cost", 0.0)),
            kind=kind,
            rated=rated,
        ))

    loads = []
    for k, ld in enumerate(doc.get("loads", ())):
        did = str(_need(ld, "id", f"load #{k}"))
        where = f"load {did}"
        bus = check_bus(_need(ld, "bus", where), where)
        ph = PhaseSet(str(ld.get("phases", bus_phase[bus].mask)))
        n = len(ph)
        loads.append(Load(
            id=did, bus=bus, phases=ph,
            p_nominal=_per_phase(_need(ld, "p", where), n, f"{where} p"),
            q_nominal=_per_phase(ld.get("q", 0.0), n, f"{where} q"),
        ))

    ties = []
    for grp in doc.get("tie_groups", ()):
        ties.append(tuple(check_bus(b, "tie group") for b in grp))

    case = NetworkCase(
        buses=tuple(buses), lines=tuple(lines), generators=tuple(gens), loads=tuple(loads),
        base_kv=float(_need(doc, "base_kv", "case")), base_mva=float(_need(doc, "base_mva", "case")),
        tie_groups=tuple(ties), name=str(doc.get("name", "")),
    )
    validate_case(case)
    return case


def validate_case(case: NetworkCase) -> None:
    """Check every structural invariant; raise CaseError naming the culprit."""
    ids = {}
    for kind, items in (("line", case.lines), ("generator", case.generators), ("load", case.loads)):
        seen = set()
        for it in items:
            if it.id in seen:
                raise CaseError(f"duplicate {kind} id {it.id!r}")
            seen.add(it.id)
        ids[kind] = seen
    for b in case.buses:
        if not 0 < b.vmin_pu < b.vmax_pu:
            raise CaseError(f"bus {b.id}: need 0 < vmin_pu < vmax_pu")
    for ln in case.lines:
        for end in (ln.from_bus, ln.to_bus):
            if not ln.phases.issubset(case.bus(end).phases):
                raise CaseError(f"line {ln.id}: phases {ln.phases} not present at bus {end}")
        if any(s <= 0 for s in ln.smax_pu):
            raise CaseError(f"line {ln.id}: smax_pu must be strictly positive")
    for g in case.generators:
        if not g.phases.issubset(case.bus(g.bus).phases):
            raise CaseError(f"generator {g.id}: phases {g.phases} not present at bus {g.bus}")
        if any(lo > hi for lo, hi in zip(g.pmin, g.pmax)) or any(lo > hi for lo, hi in zip(g.qmin, g.qmax)):
            raise CaseError(f"generator {g.id}: lower limit above upper limit")
        if g.kind == "pv" and any(p != 0 for p in g.pmin):
            raise CaseError(f"generator {g.id}: PV units must have pmin = 0")
        if g.kind == "substation" and not case.bus(g.bus).is_substation:
            raise CaseError(f"generator {g.id}: substation generator on non-substation bus {g.bus}")
    for ld in case.loads:
        if not ld.phases.issubset(case.bus(ld.bus).phases):
            raise CaseError(f"load {ld.id}: phases {ld.phases} not present at bus {ld.bus}")
        if any(p < 0 for p in ld.p_nominal):
            raise CaseError(f"load {ld.id}: negative active demand")
    subs = case.substations
    if not subs:
        raise CaseError("case has no substation")
    fed = {g.bus for g in case.generators if g.kind == "substation"}
    for s in subs:
        if s not in fed:
            raise CaseError(f"substation bus {s} has no substation generator")
    dsu = _DSU(len(case.buses))
    for ln in case.lines:
        dsu.union(case.bus_position(ln.from_bus), case.bus_position(ln.to_bus))
    roots = {dsu.find(k) for k in range(len(case.buses))}
    if len(roots) > 1:
        lonely = [b.id for k, b in enumerate(case.buses) if dsu.find(k) != dsu.find(0)]
        raise CaseError(f"network with all switches closed is disconnected (e.g. bus {lonely[0]})")


def parse_case(text: str) -> NetworkCase:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"case file is not valid JSON: {exc}") from exc
    try:
        return case_from_dict(doc)
    except (TypeError, KeyError, AttributeError) as exc:
        raise CaseError(f"case schema violation: {exc}") from exc


def load_case(path) -> NetworkCase:
    return parse_case(Path(path).read_text(encoding="utf-8"))


def bundled_case_path(name: str = "ieee37_mod.case") -> Path:
    return Path(__file__).parent / "data" / name


def case_to_dict(case: NetworkCase) -> dict:
    return {
        "name": case.name,
        "base_mva": case.base_mva,
        "base_kv": case.base_kv,
        "buses": [
            {"id": b.id, "phases": b.phases.mask, "vmin_pu": b.vmin_pu, "vmax_pu": b.vmax_pu,
             "substation": b.is_substation}
            for b in case.buses
        ],
        "lines": [
            {"id": ln.id, "from": ln.from_bus, "to": ln.to_bus, "phases": ln.phases.mask,
             "r": [list(r) for r in ln.r], "x": [list(r) for r in ln.x],
             "smax_pu": list(ln.smax_pu), "switchable": ln.switchable}
            for ln in case.lines
        ],
        "generators": [
            {"id": g.id, "bus": g.bus, "phases": g.phases.mask, "kind": g.kind, "cost": g.cost,
             "pmin": list(g.pmin), "pmax": list(g.pmax), "qmin": list(g.qmin), "qmax": list(g.qmax),
             "rated": list(g.rated)}
            for g in case.generators
        ],
        "loads": [
            {"id": ld.id, "bus": ld.bus, "phases": ld.phases.mask,
             "p": list(ld.p_nominal), "q": list(ld.q_nominal)}
            for ld in case.loads
        ],
        "tie_groups": [list(t) for t in case.tie_groups],
    }


def dump_case(case: NetworkCase) -> str:
    return json.dumps(case_to_dict(case), indent=1)


def case_hash(case: NetworkCase) -> str:
    """Content hash, stable across key order and whitespace."""
    blob = json.dumps(case_to_dict(case), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Graph utilities


class _DSU:
    __slots__ = ("parent",)

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if ra < rb:
            ra, rb = rb, ra
        self.parent[ra] = rb
        return True


@dataclass(frozen=True)
class LoadBlockPartition:
    blocks: tuple[tuple[str, ...], ...]
    block_of_bus: Mapping[str, int]
    tie_groups: tuple[tuple[int, ...], ...] = ()

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def label_groups(self) -> tuple[tuple[int, ...], ...]:
        """Blocks that must share one label: tie groups plus singletons,
        ordered by smallest member."""
        tied = {b for grp in self.tie_groups for b in grp}
        groups = list(self.tie_groups) + [(b,) for b in range(self.n_blocks) if b not in tied]
        return tuple(sorted(groups, key=min))

    def fixed_labels(self, case: NetworkCase) -> dict[int, int]:
        """Label forced on each label group member by a substation it contains."""
        fixed = {}
        for s, sub in enumerate(case.substations):
            b = self.block_of_bus[sub]
            for grp in self.label_groups():
                if b in grp:
                    for m in grp:
                        fixed.setdefault(m, s)
        return fixed

    def free_groups(self, case: NetworkCase) -> tuple[tuple[int, ...], ...]:
        """Label groups whose label is not pinned by a substation."""
        fixed = self.fixed_labels(case)
        return tuple(g for g in self.label_groups() if g[0] not in fixed)


def load_blocks(case: NetworkCase, ties: Iterable[Iterable[str]] | None = None) -> LoadBlockPartition:
    """Connected components over non-switchable lines.

    ``ties`` lists groups of bus ids whose blocks must carry one label;
    defaults to the case's own tie groups.
    """
    ids = sorted(b.id for b in case.buses)
    pos = {bid: k for k, bid in enumerate(ids)}
    dsu = _DSU(len(ids))
    for ln in case.lines:
        if not ln.switchable:
            dsu.union(pos[ln.from_bus], pos[ln.to_bus])
    comps: dict[int, list[str]] = {}
    for bid in ids:
        comps.setdefault(dsu.find(pos[bid]), []).append(bid)
    blocks = tuple(sorted(tuple(sorted(c)) for c in comps.values()))
    block_of_bus = {bid: k for k, blk in enumerate(blocks) for bid in blk}

    ties = case.tie_groups if ties is None else ties
    merged: list[set[int]] = []
    for grp in ties:
        members = set()
        for bid in grp:
            if str(bid) not in block_of_bus:
                raise CaseError(f"tie group names unknown bus {bid!r}")
            members.add(block_of_bus[str(bid)])
        overlapping = [m for m in merged if m & members]
        for m in overlapping:
            members |= m
            merged.remove(m)
        merged.append(members)
    tie_groups = tuple(sorted(tuple(sorted(m)) for m in merged if len(m) > 1))
    return LoadBlockPartition(blocks=blocks, block_of_bus=block_of_bus, tie_groups=tie_groups)


# ---------------------------------------------------------------------------
# Topology


@dataclass(frozen=True)
class SwitchConfiguration:
    status: tuple[int, ...]

    def __post_init__(self):
        st = tuple(int(s) for s in self.status)
        if any(s not in (0, 1) for s in st):
            raise ValueError("switch status must be 0 or 1")
        object.__setattr__(self, "status", st)

    @classmethod
    def from_bits(cls, bits: str) -> "SwitchConfiguration":
        return cls(tuple(int(c) for c in bits))

    @property
    def bits(self) -> str:
        return "".join(str(s) for s in self.status)

    def __len__(self):
        return len(self.status)


@dataclass(frozen=True)
class BlockAssignment:
    labels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(int(v) for v in self.labels))

    def respects(self, partition: LoadBlockPartition) -> bool:
        return all(len({self.labels[b] for b in grp}) == 1 for grp in partition.tie_groups)

    def hamming(self, other: "BlockAssignment") -> int:
        return sum(a != b for a, b in zip(self.labels, other.labels))


@dataclass(frozen=True)
class Topology:
    """Energized subgraph of one switch configuration.

    ``feeder`` maps each bus to the index of the substation whose tree
    holds it, or None.  ``diagnosis`` is "radial", "cycle",
    "multiple_substations" (two substations joined) or "island".
    """
    energized: tuple[str, ...]
    feeder: Mapping[str, int | None]
    diagnosis: str

    @property
    def radial(self) -> bool:
        return self.diagnosis == "radial"


def _as_status(case: NetworkCase, x) -> tuple[int, ...]:
    status = x.status if isinstance(x, SwitchConfiguration) else tuple(int(s) for s in x)
    if len(status) != case.n_switches:
        raise ValueError(f"configuration has {len(status)} entries, case has {case.n_switches} switches")
    return status


def energized_lines(case: NetworkCase, x) -> tuple[Line, ...]:
    status = iter(_as_status(case, x))
    return tuple(ln for ln in case.lines if not ln.switchable or next(status))


def energized_topology(case: NetworkCase, x) -> Topology:
    lines = energized_lines(case, x)
    n = len(case.buses)
    dsu = _DSU(n)
    cycle = False
    for ln in lines:
        if not dsu.union(case.bus_position(ln.from_bus), case.bus_position(ln.to_bus)):
            cycle = True
    root_sub: dict[int, int] = {}
    shared = False
    for s, sub in enumerate(case.substations):
        r = dsu.find(case.bus_position(sub))
        if r in root_sub:
            shared = True
        else:
            root_sub[r] = s
    feeder = {}
    island = False
    for k, b in enumerate(case.buses):
        s = root_sub.get(dsu.find(k))
        feeder[b.id] = s
        island |= s is None
    if cycle:
        diag = "cycle"
    elif shared:
        diag = "multiple_substations"
    elif island:
        diag = "island"
    else:
        diag = "radial"
    return Topology(energized=tuple(ln.id for ln in lines), feeder=feeder, diagnosis=diag)


def is_radial(case: NetworkCase, x) -> bool:
    return energized_topology(case, x).radial


def assignment_of(case: NetworkCase, partition: LoadBlockPartition, x) -> BlockAssignment:
    topo = energized_topology(case, x)
    if not topo.radial:
        raise ValueError(f"configuration is not radial ({topo.diagnosis})")
    return BlockAssignment(tuple(topo.feeder[blk[0]] for blk in partition.blocks))
