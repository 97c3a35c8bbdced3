"""Command-line pipeline: generate data, train, predict, evaluate, solve, compare.

Exit codes: 0 success, 1 usage or bad input, 2 infeasible or unrealizable,
3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import datagen, neural
from .lpf import extract_dispatch
from .netcase import (
    BlockAssignment,
    CaseError,
    bundled_case_path,
    case_hash,
    load_blocks,
    load_case,
)
from .reconfig import DEFAULT_LADDER, radial_index, relax_and_solve, repair_assignment, solve_exact

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_INTERNAL = 0, 1, 2, 3
SPLIT_FRACTIONS = (0.90, 0.05, 0.05)


class UsageError(Exception):
    pass


class Infeasible(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _ladder(text):
    rungs = []
    for part in text.split(","):
        lo, _, hi = part.partition(":")
        try:
            rungs.append((float(lo), float(hi)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad rung {part!r}; expected vmin:vmax") from None
    return tuple(rungs)


def _hidden(text):
    try:
        widths = tuple(int(w) for w in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad widths {text!r}") from None
    if not widths or min(widths) < 1:
        raise argparse.ArgumentTypeError("widths must be positive")
    return widths


# ---------------------------------------------------------------------------
# shared helpers


def _load(args):
    try:
        case = load_case(args.case)
    except OSError as exc:
        raise UsageError(f"cannot read case {args.case}: {exc.strerror or exc}") from None
    except CaseError as exc:
        raise UsageError(f"invalid case {args.case}: {exc}") from None
    return case, load_blocks(case)


def _write_json(path, doc) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _manifest_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".manifest.json")


def _read_dataset(path, case, partition):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read dataset {path}: {exc.strerror or exc}") from None
    try:
        features, labels = datagen.read_dataset_csv(text, case, partition)
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    mpath = _manifest_path(path)
    if mpath.exists():
        found = json.loads(mpath.read_text()).get("case_hash")
        if found != case_hash(case):
            raise UsageError(f"dataset {path} was generated for a different case (hash {str(found)[:12]}...)")
    return features, labels


def _load_model(path, case):
    try:
        model = neural.load_model(path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot load model {path}: {exc}") from None
    found = model.meta.get("case_hash")
    if found != case_hash(case):
        raise UsageError(f"model {path} was trained for a different case (hash {str(found)[:12]}...)")
    return model


def _scenario_case(case, row):
    """Rebuild the scenario behind one feature row."""
    n_load = len(case.loads)
    nominal = case.load_features()
    rated = np.array([sum(g.rated) for g in case.pv_units])
    scale = np.divide(row[:n_load], nominal, out=np.ones(n_load), where=nominal > 0)
    frac = np.divide(row[n_load:], rated, out=np.zeros(len(rated)), where=rated > 0)
    return case.with_scenario(scale, frac)


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> int:
    case, partition = _load(args)
    spec = datagen.ScenarioSpec(n_samples=args.n, load_range=tuple(args.load_range),
                                pv_range=tuple(args.pv_range), seed=args.seed)
    try:
        data = datagen.generate(case, partition, spec, jobs=args.jobs)
    except datagen.DataGenerationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    out = Path(args.out)
    out.write_text(datagen.dataset_csv(case, partition, data.features, data.labels))
    man = datagen.manifest(data)
    _write_json(_manifest_path(out), man)
    print(f"wrote {len(data.samples)} rows to {out}; dropped {data.n_infeasible} infeasible scenarios")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    case, partition = _load(args)
    features, labels = _read_dataset(args.dataset, case, partition)
    if len(features) < 3:
        raise UsageError(f"dataset has {len(features)} rows; training needs at least 3")
    codec = neural.LabelCodec.for_case(case, partition)
    targets = np.array([codec.encode(BlockAssignment(tuple(int(v) for v in r))) for r in labels])
    train_idx, val_idx, test_idx = datagen.split(len(features), SPLIT_FRACTIONS, seed=args.seed)
    data = neural.Dataset.from_split(features, targets, train_idx, val_idx, test_idx)
    rng = np.random.default_rng(args.seed)
    data = neural.augment(data, args.augment_copies, args.noise_std, rng)
    cfg = neural.TrainConfig(learning_rate=args.lr, batch_size=args.batch_size, epochs=args.epochs,
                             l2=args.l2, dropout_p=args.dropout, patience=args.patience, seed=args.seed)
    echo = {**asdict(cfg), "hidden": list(args.hidden), "augment_copies": args.augment_copies,
            "noise_std": args.noise_std, "train_rows": int(len(train_idx)), "val_rows": int(len(val_idx)),
            "test_rows": int(len(test_idx))}
    print(json.dumps({"config": echo}, sort_keys=True))
    model = neural.init_model(features.shape[1], codec.n_outputs, args.hidden, rng)
    model, history = neural.train(model, data, cfg)
    model.meta.update({"case_hash": case_hash(case), "split_seed": args.seed,
                       "split_fractions": list(SPLIT_FRACTIONS), "augment_copies": args.augment_copies,
                       "noise_std": args.noise_std, "hidden": list(args.hidden)})
    neural.save_model(model, args.out)
    hist = io.StringIO()
    w = csv.writer(hist, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "val_loss"])
    for h in history:
        w.writerow([h.epoch, repr(h.train_loss), repr(h.val_loss)])
    Path(args.out).with_suffix(".history.csv").write_text(hist.getvalue())
    best = min(history, key=lambda h: h.val_loss)
    print(f"trained {len(history)} epochs; best val loss {best.val_loss:.6f} at epoch {best.epoch}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# predict


def cmd_predict(args) -> int:
    case, partition = _load(args)
    model = _load_model(args.model, case)
    features, _ = _read_dataset(args.dataset, case, partition)
    codec = neural.LabelCodec.for_case(case, partition)
    index = radial_index(case, partition)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row"] + [f"block_{k}" for k in range(partition.n_blocks)] + ["realizable"])
    for k, row in enumerate(features):
        a = neural.predict_assignment(model, row, codec)
        w.writerow([k, *a.labels, int(index.realizable(a))])
    if args.out in (None, "-"):
        sys.stdout.write(buf.getvalue())
    else:
        Path(args.out).write_text(buf.getvalue())
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate / compare


def _row_work(job):
    """Exact solve and predicted-restricted solve for one scenario."""
    case, partition, model, codec, ladder, row = job
    scen = _scenario_case(case, row)
    t0 = time.perf_counter()
    exact, _ = solve_exact(scen, partition)
    t_exact = time.perf_counter() - t0
    t0 = time.perf_counter()
    pred = neural.predict_assignment(model, row, codec)
    fixed = repair_assignment(scen, partition, pred)
    res, rung = relax_and_solve(scen, partition, fixed, ladder) if fixed is not None else (None, None)
    t_fast = time.perf_counter() - t0
    return {
        "predicted": list(pred.labels),
        "repaired": fixed is not None and fixed != pred,
        "assignment": list(fixed.labels) if fixed is not None else None,
        "exact_status": exact.status,
        "exact_objective": exact.objective if exact.optimal else None,
        "exact_assignment": list(exact.assignment.labels) if exact.optimal else None,
        "exact_lp_count": exact.lp_count,
        "rung": rung,
        "restricted_objective": res.objective if res is not None and res.optimal else None,
        "restricted_lp_count": res.lp_count if res is not None else 0,
        "exact_s": t_exact,
        "restricted_s": t_fast,
    }


def _run_rows(case, partition, model, codec, ladder, rows, jobs):
    work = [(case, partition, model, codec, ladder, r) for r in rows]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_row_work, work))
    return [_row_work(w) for w in work]


def _accuracy(codec, predicted, truth):
    """Per-output accuracy over the free label groups and per-sample
    accuracy (every block right)."""
    P = np.array([codec.encode(BlockAssignment(tuple(p))) for p in predicted])
    T = np.array([codec.encode(BlockAssignment(tuple(int(v) for v in t))) for t in truth])
    if len(P) == 0:
        return None, None
    return float((P == T).mean()), float((P == T).all(axis=1).mean())


def _summary(results, ladder, codec, truth):
    n = len(results)
    newly = [sum(1 for r in results if r["rung"] == k) for k in range(len(ladder))]
    cumulative = list(np.cumsum(newly).tolist())
    per_block, per_sample = _accuracy(codec, [r["predicted"] for r in results], truth)
    gaps = []
    violations = 0
    for r in results:
        if r["rung"] == 0 and r["exact_objective"] is not None:
            gap = (r["restricted_objective"] - r["exact_objective"]) / abs(r["exact_objective"])
            gaps.append(gap)
            violations += r["restricted_objective"] < r["exact_objective"] - 1e-9
    t_exact = np.array([r["exact_s"] for r in results]) * 1000.0
    t_fast = np.array([r["restricted_s"] for r in results]) * 1000.0
    report = {
        "rows": n,
        "accuracy_per_block": per_block,
        "accuracy_per_sample": per_sample,
        "repaired_rows": sum(r["repaired"] for r in results),
        "ladder": [list(r) for r in ladder],
        "feasible_newly_per_rung": newly,
        "feasible_cumulative_per_rung": cumulative,
        "never_feasible": n - sum(newly),
        "objective_gap": {
            "rows": len(gaps),
            "median": float(np.median(gaps)) if gaps else None,
            "mean": float(np.mean(gaps)) if gaps else None,
            "max": float(np.max(gaps)) if gaps else None,
            "below_exact": int(violations),
        },
        "lp_count_mean": {
            "exact": float(np.mean([r["exact_lp_count"] for r in results])) if n else None,
            "restricted": float(np.mean([r["restricted_lp_count"] for r in results])) if n else None,
        },
        # wall-clock fields live under "timing" only
        "timing": {
            "exact_ms_mean": float(t_exact.mean()) if n else None,
            "exact_ms_median": float(np.median(t_exact)) if n else None,
            "restricted_ms_mean": float(t_fast.mean()) if n else None,
            "restricted_ms_median": float(np.median(t_fast)) if n else None,
            "speedup": float(t_exact.mean() / t_fast.mean()) if n and t_fast.mean() > 0 else None,
        },
    }
    return report


def cmd_evaluate(args) -> int:
    case, partition = _load(args)
    model = _load_model(args.model, case)
    features, labels = _read_dataset(args.dataset, case, partition)
    codec = neural.LabelCodec.for_case(case, partition)
    seed = model.meta.get("split_seed", 0)
    _, _, test_idx = datagen.split(len(features), tuple(model.meta.get("split_fractions", SPLIT_FRACTIONS)), seed)
    results = _run_rows(case, partition, model, codec, args.ladder, features[test_idx], args.jobs)
    report = _summary(results, args.ladder, codec, labels[test_idx])
    train_idx = datagen.split(len(features), tuple(model.meta.get("split_fractions", SPLIT_FRACTIONS)), seed)[0]
    train_pred = [neural.predict_assignment(model, r, codec).labels for r in features[train_idx]]
    report["train_accuracy_per_block"], report["train_accuracy_per_sample"] = _accuracy(
        codec, train_pred, labels[train_idx])
    report["exact_label_agreement"] = float(np.mean(
        [r["exact_assignment"] == [int(v) for v in t] for r, t in zip(results, labels[test_idx])])) if results else None
    report["case_hash"] = case_hash(case)
    _write_json(args.out, report)
    return EXIT_OK


def cmd_compare(args) -> int:
    """Exact versus predicted-restricted solves on fresh random scenarios."""
    case, partition = _load(args)
    model = _load_model(args.model, case)
    codec = neural.LabelCodec.for_case(case, partition)
    spec = datagen.ScenarioSpec(n_samples=args.n, seed=args.seed)
    rng = np.random.default_rng(spec.seed)
    rows = np.array([datagen.scenario_features(case, datagen.sample_scenario(case, spec, rng))
                     for _ in range(args.n)])
    results = _run_rows(case, partition, model, codec, args.ladder, rows, args.jobs)
    truth = [r["exact_assignment"] for r in results if r["exact_assignment"] is not None]
    kept = [r for r in results if r["exact_assignment"] is not None]
    report = _summary(kept, args.ladder, codec, truth)
    report["exact_infeasible"] = len(results) - len(kept)
    if args.csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "exact_objective", "restricted_objective", "rung", "repaired",
                    "exact_ms", "restricted_ms"])
        for k, r in enumerate(results):
            w.writerow([k, r["exact_objective"], r["restricted_objective"], r["rung"], int(r["repaired"]),
                        r["exact_s"] * 1000.0, r["restricted_s"] * 1000.0])
        Path(args.csv).write_text(buf.getvalue())
    _write_json(args.out, report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve


def _read_assignment(path, partition):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read assignment {path}: {exc}") from None
    labels = doc.get("assignment") if isinstance(doc, dict) else doc
    if not isinstance(labels, list) or not all(isinstance(v, int) for v in labels):
        raise UsageError(f"{path}: expected a list of integer labels or {{\"assignment\": [...]}}")
    if len(labels) != partition.n_blocks:
        raise UsageError(f"{path}: {len(labels)} labels for {partition.n_blocks} blocks")
    return BlockAssignment(tuple(labels))


def cmd_solve(args) -> int:
    case, partition = _load(args)
    if args.load_scale is not None or args.pv_fraction is not None:
        case = case.with_scenario([args.load_scale if args.load_scale is not None else 1.0] * len(case.loads),
                                  [args.pv_fraction if args.pv_fraction is not None else 1.0] * len(case.pv_units))
    repaired = False
    rung = None
    if args.exact:
        res, stats = solve_exact(case, partition)
        extra = {"mode": "exact", "nodes_visited": stats.nodes_visited,
                 "pruned_radiality": stats.pruned_radiality, "pruned_bound": stats.pruned_bound}
    else:
        a = _read_assignment(args.assignment, partition)
        if not radial_index(case, partition).realizable(a):
            if not args.repair:
                res = relax_and_solve(case, partition, a, args.ladder)[0]
                _write_json(args.out, {**res.to_json(None), "mode": "restricted", "repaired": False})
                return EXIT_INFEASIBLE
            fixed = repair_assignment(case, partition, a)
            if fixed is None:
                _write_json(args.out, {"status": "infeasible", "diagnosis": "no feasible topology",
                                       "mode": "restricted", "repaired": False})
                return EXIT_INFEASIBLE
            a, repaired = fixed, True
        res, rung = relax_and_solve(case, partition, a, args.ladder)
        extra = {"mode": "restricted", "repaired": repaired}
    doc = {**res.to_json(rung), **extra}
    if res.optimal:
        doc["dispatch"] = extract_dispatch(res.solution, res.variables, case)
    _write_json(args.out, doc)
    return EXIT_OK if res.optimal else EXIT_INFEASIBLE


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dnrlearn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_default):
        sp.add_argument("--case", default=str(bundled_case_path()), help="case file (default: bundled feeder)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")
        sp.add_argument("--out", default=out_default)

    g = sub.add_parser("generate", help="sample scenarios and label them with exact solves")
    common(g, "dataset.csv")
    g.add_argument("--n", type=_positive_int, default=5000, help="number of scenarios")
    g.add_argument("--load-range", type=float, nargs=2, default=(0.8, 1.2), metavar=("LO", "HI"))
    g.add_argument("--pv-range", type=float, nargs=2, default=(0.0, 1.0), metavar=("LO", "HI"))
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="fit the block-assignment network")
    common(t, "model.bin")
    t.add_argument("--dataset", required=True)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--batch-size", type=_positive_int, default=125)
    t.add_argument("--epochs", type=_positive_int, default=250)
    t.add_argument("--l2", type=float, default=0.001)
    t.add_argument("--dropout", type=float, default=0.25)
    t.add_argument("--patience", type=int, default=20)
    t.add_argument("--hidden", type=_hidden, default=(64, 64, 64), help="comma-separated widths")
    t.add_argument("--augment-copies", type=int, default=1)
    t.add_argument("--noise-std", type=float, default=0.1, help="augmentation noise, normalized units")
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="predict block assignments for dataset rows")
    common(pr, "-")
    pr.add_argument("--model", required=True)
    pr.add_argument("--dataset", required=True)
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", help="accuracy, feasibility ladder and timing on the test split")
    common(e, "-")
    e.add_argument("--model", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--ladder", type=_ladder, default=DEFAULT_LADDER, help="vmin:vmax,... (widening)")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("solve", help="one exact or restricted solve")
    common(s, "-")
    mode = s.add_mutually_exclusive_group(required=True)
    mode.add_argument("--exact", action="store_true")
    mode.add_argument("--assignment", help="JSON file with block labels")
    s.add_argument("--repair", action="store_true", help="repair an unrealizable assignment")
    s.add_argument("--ladder", type=_ladder, default=DEFAULT_LADDER)
    s.add_argument("--load-scale", type=float, help="uniform load factor")
    s.add_argument("--pv-fraction", type=float, help="uniform PV availability")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("compare", help="exact versus predicted-restricted solves on random scenarios")
    common(c, "-")
    c.add_argument("--model", required=True)
    c.add_argument("--n", type=_positive_int, default=100)
    c.add_argument("--ladder", type=_ladder, default=DEFAULT_LADDER)
    c.add_argument("--csv", help="per-row CSV output")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
