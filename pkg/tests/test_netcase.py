import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from dnrlearn.netcase import (
    BlockAssignment,
    CaseError,
    PhaseSet,
    SwitchConfiguration,
    assignment_of,
    bundled_case_path,
    case_from_dict,
    case_hash,
    dump_case,
    energized_topology,
    is_radial,
    load_blocks,
    load_case,
    parse_case,
)
from oracles import all_configurations, bfs_feeders, case_doc, line_doc


@pytest.fixture(scope="module")
def ieee37():
    return load_case(bundled_case_path())


def test_bundled_case_component_counts(ieee37):
    assert len(ieee37.buses) == 40
    assert len(ieee37.lines) == 41
    assert len(ieee37.loads) == 30
    assert len(ieee37.pv_units) == 5
    assert len(ieee37.substations) == 2
    assert ieee37.n_switches == 13


def test_minimal_case_parses():
    doc = case_doc(["s", "a"], [line_doc("l1", "s", "a")], ["s"], loads=[("a", 0.1, 0.05)])
    case = case_from_dict(doc)
    assert case.substations == ("s",)
    assert case.n_switches == 0


def test_dangling_bus_reference_is_named():
    doc = case_doc(["s", "a"], [line_doc("l1", "s", "999")], ["s"])
    with pytest.raises(CaseError, match="999"):
        case_from_dict(doc)


@pytest.mark.parametrize("mutate, message", [
    (lambda d: (d["buses"][0].__setitem__("substation", False), d["generators"].clear()), "no substation"),
    (lambda d: d["buses"][0].__setitem__("substation", False), "non-substation bus"),
    (lambda d: d["generators"].clear(), "no substation generator"),
    (lambda d: d["lines"].pop(), "disconnected"),
    (lambda d: d["lines"][0].__setitem__("phases", "ab"), "expected a 2x2"),
    (lambda d: d["buses"][1].__setitem__("phases", "a"), "not present at bus"),
    (lambda d: d["loads"][0].__setitem__("p", -1.0), "negative"),
    (lambda d: d["lines"][0].__setitem__("smax_pu", 0.0), "strictly positive"),
    (lambda d: d.pop("base_kv"), "base_kv"),
])
def test_schema_violations(mutate, message):
    doc = case_doc(["s", "a", "b"], [line_doc("l1", "s", "a"), line_doc("l2", "a", "b")], ["s"],
                   loads=[("b", 0.1, 0.0)])
    mutate(doc)
    with pytest.raises(CaseError, match=message):
        case_from_dict(doc)


def test_non_json_text():
    with pytest.raises(CaseError, match="JSON"):
        parse_case("{not json")


def test_dump_round_trip_and_hash(ieee37):
    again = parse_case(dump_case(ieee37))
    assert again == ieee37
    assert case_hash(again) == case_hash(ieee37)
    assert case_hash(ieee37.with_voltage_bounds(0.85, 1.15)) != case_hash(ieee37)


def test_phase_set_canonical_order():
    assert PhaseSet("ca").mask == "ac"
    assert PhaseSet("ca").indices == (0, 2)
    with pytest.raises(ValueError):
        PhaseSet("")
    with pytest.raises(ValueError):
        PhaseSet("abd")


def test_bundled_blocks_and_tie_group(ieee37):
    part = load_blocks(ieee37)
    head = part.block_of_bus["709"]
    assert set(part.blocks[head]) == {"731", "709", "775", "708", "732"}
    (group,) = part.tie_groups
    assert head in group
    # the tie reaches every block on the 709 side of the feeder
    for bus in ("733", "710", "711"):
        assert part.block_of_bus[bus] in group


def test_no_switches_gives_single_block():
    doc = case_doc(["s", "a", "b"], [line_doc("l1", "s", "a"), line_doc("l2", "a", "b")], ["s"])
    part = load_blocks(case_from_dict(doc))
    assert part.blocks == (("a", "b", "s"),)


def test_chain_with_switch_in_middle():
    doc = case_doc(["1", "2", "3", "4"],
                   [line_doc("a", "1", "2"), line_doc("b", "2", "3", switchable=True), line_doc("c", "3", "4")],
                   ["1"])
    part = load_blocks(case_from_dict(doc))
    assert part.blocks == (("1", "2"), ("3", "4"))


def test_unknown_tie_bus():
    doc = case_doc(["s", "a"], [line_doc("l1", "s", "a", switchable=True)], ["s"])
    case = case_from_dict({**doc, "tie_groups": []})
    with pytest.raises(CaseError, match="unknown bus"):
        load_blocks(case, ties=[["s", "nope"]])


def test_load_blocks_permutation_invariant(ieee37):
    doc = json.loads(dump_case(ieee37))
    ref = load_blocks(ieee37)
    rng = random.Random(4)
    for _ in range(5):
        rng.shuffle(doc["buses"])
        rng.shuffle(doc["lines"])
        part = load_blocks(case_from_dict(doc))
        assert part.blocks == ref.blocks
        assert part.tie_groups == ref.tie_groups


def test_all_closed_is_cycle_and_all_open_is_island(ieee37):
    k = ieee37.n_switches
    assert energized_topology(ieee37, [1] * k).diagnosis == "cycle"
    assert not is_radial(ieee37, [1] * k)
    assert energized_topology(ieee37, [0] * k).diagnosis == "island"


def test_two_substations_joined():
    doc = case_doc(["s1", "s2"], [line_doc("l", "s1", "s2", switchable=True)], ["s1", "s2"])
    case = case_from_dict(doc)
    assert energized_topology(case, [1]).diagnosis == "multiple_substations"
    assert is_radial(case, [0])


def test_two_bus_single_line_is_radial():
    case = case_from_dict(case_doc(["s", "a"], [line_doc("l", "s", "a", switchable=True)], ["s"]))
    assert is_radial(case, [1])
    assert not is_radial(case, [0])
    assert assignment_of(case, load_blocks(case), [1]).labels == (0, 0)


def test_single_block_case_label():
    case = case_from_dict(case_doc(["s", "a"], [line_doc("l", "s", "a")], ["s"]))
    assert assignment_of(case, load_blocks(case), []).labels == (0,)


def test_disjoint_feeders_label_by_own_substation():
    doc = case_doc(["s1", "a", "s2", "b"],
                   [line_doc("l1", "s1", "a"), line_doc("l2", "s2", "b"),
                    line_doc("t", "a", "b", switchable=True)],
                   ["s1", "s2"])
    case = case_from_dict(doc)
    part = load_blocks(case)
    labels = assignment_of(case, part, [0]).labels
    subs = case.substations
    for blk, lab in zip(part.blocks, labels):
        assert subs[lab] in blk
    with pytest.raises(ValueError):
        assignment_of(case, part, [1])


def test_configuration_length_checked(ieee37):
    with pytest.raises(ValueError):
        energized_topology(ieee37, [1, 0])
    assert SwitchConfiguration.from_bits("0101").status == (0, 1, 0, 1)
    with pytest.raises(ValueError):
        SwitchConfiguration((0, 2))


def _mesh_case():
    """Ten switches on a small two-substation mesh."""
    buses = ["s1", "s2"] + [f"n{i}" for i in range(7)]
    lines = [line_doc("f1", "s1", "n0"), line_doc("f2", "s2", "n6")]
    pairs = [("n0", "n1"), ("n1", "n2"), ("n2", "n3"), ("n3", "n4"), ("n4", "n5"), ("n5", "n6"),
             ("n0", "n3"), ("n1", "n5"), ("n2", "n6"), ("n4", "n6")]
    lines += [line_doc(f"w{k}", f, t, switchable=True) for k, (f, t) in enumerate(pairs)]
    return case_from_dict(case_doc(buses, lines, ["s1", "s2"]))


def test_radiality_brute_force_invariants():
    case = _mesh_case()
    part = load_blocks(case)
    n_radial = 0
    for x in all_configurations(case.n_switches):
        topo = energized_topology(case, x)
        ok, feeder = bfs_feeders(case, x)
        assert topo.radial == ok
        if not ok:
            continue
        n_radial += 1
        n_comp = len(set(topo.feeder.values()))
        assert len(topo.energized) == len(case.buses) - n_comp
        assert n_comp == len(case.substations)
        assert topo.feeder == feeder
        labels = assignment_of(case, part, x).labels
        assert labels == tuple(feeder[blk[0]] for blk in part.blocks)
    assert n_radial > 10


def test_bundled_assignments_match_bfs(ieee37):
    part = load_blocks(ieee37)
    checked = 0
    for x in all_configurations(ieee37.n_switches):
        if not is_radial(ieee37, x):
            continue
        _, feeder = bfs_feeders(ieee37, x)
        assert assignment_of(ieee37, part, x).labels == tuple(feeder[b[0]] for b in part.blocks)
        checked += 1
    assert checked > 0


def test_block_assignment_helpers(ieee37):
    part = load_blocks(ieee37)
    a = BlockAssignment([1] * part.n_blocks)
    assert a.respects(part)
    labels = list(a.labels)
    labels[part.tie_groups[0][0]] = 0
    b = BlockAssignment(labels)
    assert not b.respects(part)
    assert a.hamming(b) == 1


def test_free_groups_exclude_substation_blocks(ieee37):
    part = load_blocks(ieee37)
    fixed = part.fixed_labels(ieee37)
    for s, sub in enumerate(ieee37.substations):
        assert fixed[part.block_of_bus[sub]] == s
    free = part.free_groups(ieee37)
    covered = sorted(b for g in free for b in g) + sorted(fixed)
    assert sorted(covered) == list(range(part.n_blocks))


@settings(max_examples=30, deadline=None)
@given(scale=st.lists(st.floats(0.8, 1.2), min_size=30, max_size=30),
       pv=st.lists(st.floats(0.0, 1.0), min_size=5, max_size=5))
def test_with_scenario_scales_loads_and_pv(ieee37, scale, pv):
    c = ieee37.with_scenario(scale, pv)
    for ld0, ld, s in zip(ieee37.loads, c.loads, scale):
        for p0, p, q0, q in zip(ld0.p_nominal, ld.p_nominal, ld0.q_nominal, ld.q_nominal):
            assert p == pytest.approx(s * p0) and q == pytest.approx(s * q0)
    for g, f in zip(c.pv_units, pv):
        assert all(pm == pytest.approx(f * r) for pm, r in zip(g.pmax, g.rated))
