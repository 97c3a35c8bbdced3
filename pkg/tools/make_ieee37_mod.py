"""Generate the bundled modified IEEE 37-bus case (src/dnrlearn/data/ieee37_mod.case).

Starting point: the IEEE 37-node test feeder line segments, line
configurations 721-724 and spot loads.  Modifications (count-matched to the
published component table: 40 buses, 41 lines, 30 loads, 5 PV, 2
substations, 13 switchable lines):

* second substation at new bus 798 feeding new bus 745;
* new tie bus 746;
* 9 original segments made switchable, 4 new switchable ties;
* 5 three-phase PV units;
* the three multi-phase spot loads at 701, 714 and 728 split per phase
  (25 spot loads -> 30 loads);
* delta loads mapped to wye phases (ab->a, bc->b, ca->c);
* all series impedances scaled by IMPEDANCE_SCALE so that voltage limits
  bind inside the 80-120 % load range.

Which original segments were made switchable and where the ties and PV sit
is a reconstruction; the source publication does not list them.

Run:  python3 tools/make_ieee37_mod.py
"""
import json
from pathlib import Path

import numpy as np

IMPEDANCE_SCALE = 7.0
BASE_KV = 4.8
BASE_MVA = 1.0
FT_PER_MILE = 5280.0

CONFIGS = {  # ohm/mile, upper triangle given, symmetric
    721: ([0.2926, 0.0673, 0.0337, 0.2646, 0.0673, 0.2926],
          [0.1973, -0.0368, -0.0417, 0.1900, -0.0368, 0.1973], 1064),
    722: ([0.4751, 0.1629, 0.1234, 0.4488, 0.1629, 0.4751],
          [0.2973, -0.0326, -0.0607, 0.2678, -0.0326, 0.2973], 698),
    723: ([1.2936, 0.4871, 0.4585, 1.3022, 0.4871, 1.2936],
          [0.6713, 0.2111, 0.1521, 0.6326, 0.2111, 0.6713], 330),
    724: ([2.0952, 0.5204, 0.4926, 2.1068, 0.5204, 2.0952],
          [0.7758, 0.2738, 0.2123, 0.7398, 0.2738, 0.7758], 230),
}

SEGMENTS = [  # from, to, length ft, config
    ("701", "702", 960, 722), ("702", "705", 400, 724), ("702", "713", 360, 723),
    ("702", "703", 1320, 722), ("703", "727", 240, 724), ("703", "730", 600, 723),
    ("704", "714", 80, 724), ("704", "720", 800, 723), ("705", "742", 320, 724),
    ("705", "712", 240, 724), ("706", "725", 280, 724), ("707", "724", 760, 724),
    ("707", "722", 120, 724), ("708", "733", 320, 723), ("708", "732", 320, 724),
    ("709", "731", 600, 723), ("709", "708", 320, 723), ("710", "735", 200, 724),
    ("710", "736", 1280, 724), ("711", "741", 400, 723), ("711", "740", 200, 724),
    ("713", "704", 520, 723), ("714", "718", 520, 724), ("720", "707", 920, 724),
    ("720", "706", 600, 723), ("727", "744", 280, 723), ("730", "709", 200, 723),
    ("733", "734", 560, 723), ("734", "737", 640, 723), ("734", "710", 520, 724),
    ("737", "738", 400, 723), ("738", "711", 400, 723), ("744", "728", 200, 724),
    ("744", "729", 280, 724), ("799", "701", 1850, 721),
]
TRANSFORMER = ("775", "709")  # XFM-1, 500 kVA, z = 0.09 + j1.81 %
NEW_LINES = [  # from, to, length ft, config, switchable
    ("798", "745", 800, 721, False),
    ("745", "711", 600, 724, True),
    ("745", "746", 400, 723, True),
    ("746", "725", 800, 724, True),
    ("729", "736", 700, 724, True),
]
SWITCHABLE_ORIGINAL = {
    ("702", "703"), ("703", "730"), ("730", "709"), ("708", "733"), ("734", "710"),
    ("738", "711"), ("702", "713"), ("704", "720"), ("727", "744"),
}

SPOT_LOADS = {  # bus: [(kW, kvar) for phase a, b, c]
    "701": [(140, 70), (140, 70), (350, 175)],
    "712": [(0, 0), (0, 0), (85, 40)],
    "713": [(0, 0), (0, 0), (85, 40)],
    "714": [(17, 8), (21, 10), (0, 0)],
    "718": [(85, 40), (0, 0), (0, 0)],
    "720": [(0, 0), (0, 0), (85, 40)],
    "722": [(0, 0), (140, 70), (21, 10)],
    "724": [(0, 0), (42, 21), (0, 0)],
    "725": [(0, 0), (42, 21), (0, 0)],
    "727": [(0, 0), (0, 0), (42, 21)],
    "728": [(42, 21), (42, 21), (42, 21)],
    "729": [(42, 21), (0, 0), (0, 0)],
    "730": [(0, 0), (0, 0), (85, 40)],
    "731": [(0, 0), (85, 40), (0, 0)],
    "732": [(0, 0), (0, 0), (42, 21)],
    "733": [(85, 40), (0, 0), (0, 0)],
    "734": [(0, 0), (0, 0), (42, 21)],
    "735": [(0, 0), (0, 0), (85, 40)],
    "736": [(0, 0), (42, 21), (0, 0)],
    "737": [(140, 70), (0, 0), (0, 0)],
    "738": [(126, 62), (0, 0), (0, 0)],
    "740": [(0, 0), (0, 0), (85, 40)],
    "741": [(0, 0), (0, 0), (42, 21)],
    "742": [(8, 4), (85, 40), (0, 0)],
    "744": [(42, 21), (0, 0), (0, 0)],
}
SPLIT_PER_PHASE = {"701", "714", "728"}

PV_UNITS = [("pv725", "725", 300), ("pv729", "729", 250), ("pv736", "736", 250),
            ("pv741", "741", 300), ("pv746", "746", 400)]  # kW rated, three-phase
PV_Q_FRACTION = 0.3
SUBSTATIONS = [("sub799", "799", 3.0, 1.0), ("sub798", "798", 1.5, 1.25)]  # pmax/phase pu, cost
TIE_GROUP = ["709", "733", "710", "711"]


def z_matrix(cfg: int, length_ft: float):
    rr, xx, amps = CONFIGS[cfg]
    zbase = BASE_KV**2 / BASE_MVA
    scale = IMPEDANCE_SCALE * length_ft / FT_PER_MILE / zbase
    R = np.zeros((3, 3))
    X = np.zeros((3, 3))
    iu = np.triu_indices(3)
    R[iu] = rr
    X[iu] = xx
    R = R + np.triu(R, 1).T
    X = X + np.triu(X, 1).T
    smax = BASE_KV / np.sqrt(3) * amps / 1000.0 / BASE_MVA
    return (R * scale).round(8).tolist(), (X * scale).round(8).tolist(), round(float(smax), 6)


def build() -> dict:
    bus_ids = sorted({b for seg in SEGMENTS for b in seg[:2]} | set(TRANSFORMER)
                     | {b for ln in NEW_LINES for b in ln[:2]})
    subs = {s[1] for s in SUBSTATIONS}
    buses = [{"id": b, "phases": "abc", "vmin_pu": 0.9, "vmax_pu": 1.1, "substation": b in subs}
             for b in bus_ids]
    lines = []
    # new ties first: the lexicographic tie-break then prefers them open,
    # so cost ties resolve to the original radial feeder
    for f, t, length, cfg, sw in NEW_LINES:
        r, x, smax = z_matrix(cfg, length)
        lines.append({"id": f"L{f}-{t}", "from": f, "to": t, "phases": "abc", "r": r, "x": x,
                      "smax_pu": [smax] * 3, "switchable": sw})
    for f, t, length, cfg in SEGMENTS:
        r, x, smax = z_matrix(cfg, length)
        lines.append({"id": f"L{f}-{t}", "from": f, "to": t, "phases": "abc", "r": r, "x": x,
                      "smax_pu": [smax] * 3, "switchable": (f, t) in SWITCHABLE_ORIGINAL})
    zx = 0.0181 * BASE_MVA / 0.5 * IMPEDANCE_SCALE
    zr = 0.0009 * BASE_MVA / 0.5 * IMPEDANCE_SCALE
    lines.append({"id": f"T{TRANSFORMER[0]}-{TRANSFORMER[1]}", "from": TRANSFORMER[1], "to": TRANSFORMER[0],
                  "phases": "abc", "r": np.diag([zr] * 3).round(8).tolist(),
                  "x": np.diag([zx] * 3).round(8).tolist(), "smax_pu": [0.5 / 3 / BASE_MVA] * 3,
                  "switchable": False})
    gens = []
    for gid, bus, pmax, cost in SUBSTATIONS:
        gens.append({"id": gid, "bus": bus, "phases": "abc", "kind": "substation", "cost": cost,
                     "pmin": [0.0] * 3, "pmax": [pmax] * 3, "qmin": [-pmax] * 3, "qmax": [pmax] * 3})
    for gid, bus, kw in PV_UNITS:
        per = kw / 3 / 1000.0 / BASE_MVA
        gens.append({"id": gid, "bus": bus, "phases": "abc", "kind": "pv", "cost": 1.0,
                     "pmin": [0.0] * 3, "pmax": [round(per, 8)] * 3, "rated": [round(per, 8)] * 3,
                     "qmin": [round(-PV_Q_FRACTION * per, 8)] * 3, "qmax": [round(PV_Q_FRACTION * per, 8)] * 3})
    loads = []
    for bus, phases in SPOT_LOADS.items():
        if bus in SPLIT_PER_PHASE:
            for ph, (p, q) in zip("abc", phases):
                if p:
                    loads.append({"id": f"D{bus}{ph}", "bus": bus, "phases": ph,
                                  "p": [p / 1000 / BASE_MVA], "q": [q / 1000 / BASE_MVA]})
        else:
            loads.append({"id": f"D{bus}", "bus": bus, "phases": "abc",
                          "p": [p / 1000 / BASE_MVA for p, _ in phases],
                          "q": [q / 1000 / BASE_MVA for _, q in phases]})
    return {"name": "ieee37_mod", "base_mva": BASE_MVA, "base_kv": BASE_KV, "buses": buses,
            "lines": lines, "generators": gens, "loads": loads, "tie_groups": [TIE_GROUP]}


if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "src" / "dnrlearn" / "data" / "ieee37_mod.case"
    out.write_text(json.dumps(build(), indent=1) + "\n", encoding="utf-8")
    doc = build()
    print(f"wrote {out}: {len(doc['buses'])} buses, {len(doc['lines'])} lines, "
          f"{len(doc['loads'])} loads, {sum(g['kind'] == 'pv' for g in doc['generators'])} PV, "
          f"{sum(l['switchable'] for l in doc['lines'])} switchable")
