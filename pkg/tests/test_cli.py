import json

import pytest

from dnrlearn.cli import EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE, main
from dnrlearn.netcase import bundled_case_path, load_blocks, load_case


@pytest.fixture(scope="module")
def ieee37():
    return load_case(bundled_case_path())


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipeline")
    assert main(["generate", "--n", "30", "--seed", "7", "--out", str(d / "data.csv")]) == EXIT_OK
    assert main(["train", "--dataset", str(d / "data.csv"), "--epochs", "3", "--seed", "1",
                 "--out", str(d / "model.bin")]) == EXIT_OK
    return d


def test_generate_outputs(artifacts, ieee37, capsys):
    lines = (artifacts / "data.csv").read_text().splitlines()
    man = json.loads((artifacts / "data.manifest.json").read_text())
    assert len(lines) - 1 + man["infeasible_dropped"] == 30
    assert man["n_rows"] == len(lines) - 1
    assert lines[0].startswith("load_")


def test_generate_single_row(tmp_path):
    assert main(["generate", "--n", "1", "--out", str(tmp_path / "one.csv")]) == EXIT_OK
    assert len((tmp_path / "one.csv").read_text().splitlines()) == 2


@pytest.mark.parametrize("argv", [
    ["generate", "--n", "0"],
    ["generate", "--jobs", "0"],
    ["bogus"],
    [],
    ["solve"],
    ["solve", "--exact", "--assignment", "a.json"],
])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == EXIT_USAGE


def test_bad_case_file(tmp_path, capsys):
    bad = tmp_path / "bad.case"
    bad.write_text("{\"buses\": []}")
    assert main(["solve", "--exact", "--case", str(bad)]) == EXIT_USAGE
    assert "invalid case" in capsys.readouterr().err
    assert main(["solve", "--exact", "--case", str(tmp_path / "missing.case")]) == EXIT_USAGE


def test_train_history_and_echo(artifacts, capsys, tmp_path):
    hist = (artifacts / "model.history.csv").read_text().splitlines()
    assert hist[0] == "epoch,train_loss,val_loss"
    assert len(hist) == 4
    assert main(["train", "--dataset", str(artifacts / "data.csv"), "--epochs", "1",
                 "--out", str(tmp_path / "m.bin")]) == EXIT_OK
    echo = json.loads(capsys.readouterr().out.splitlines()[0])["config"]
    assert echo["learning_rate"] == 0.0001 and echo["batch_size"] == 125
    assert len((tmp_path / "m.history.csv").read_text().splitlines()) == 2


def test_train_same_seed_same_model(artifacts, tmp_path):
    out = tmp_path / "again.bin"
    assert main(["train", "--dataset", str(artifacts / "data.csv"), "--epochs", "3", "--seed", "1",
                 "--out", str(out)]) == EXIT_OK
    assert out.read_bytes() == (artifacts / "model.bin").read_bytes()


def test_train_rejects_tiny_dataset(tmp_path):
    assert main(["generate", "--n", "2", "--out", str(tmp_path / "d.csv")]) == EXIT_OK
    assert main(["train", "--dataset", str(tmp_path / "d.csv"), "--out", str(tmp_path / "m.bin")]) == EXIT_USAGE


def test_predict_csv(artifacts, ieee37, capsys):
    assert main(["predict", "--model", str(artifacts / "model.bin"),
                 "--dataset", str(artifacts / "data.csv")]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    n_blocks = load_blocks(ieee37).n_blocks
    assert out[0].split(",") == ["row"] + [f"block_{k}" for k in range(n_blocks)] + ["realizable"]
    assert len(out) == len((artifacts / "data.csv").read_text().splitlines())


def test_evaluate_report(artifacts, tmp_path):
    out = tmp_path / "report.json"
    assert main(["evaluate", "--model", str(artifacts / "model.bin"), "--dataset", str(artifacts / "data.csv"),
                 "--out", str(out)]) == EXIT_OK
    rep = json.loads(out.read_text())
    n = rep["rows"]
    assert n >= 1
    assert sum(rep["feasible_newly_per_rung"]) + rep["never_feasible"] == n
    cum = rep["feasible_cumulative_per_rung"]
    assert all(a <= b <= n for a, b in zip(cum, cum[1:]))
    assert rep["objective_gap"]["below_exact"] == 0
    assert rep["timing"]["speedup"] > 0
    assert rep["exact_label_agreement"] == 1.0


def test_evaluate_refuses_other_case(artifacts, ieee37, tmp_path, capsys):
    other = tmp_path / "other.case"
    text = bundled_case_path().read_text().replace('"base_mva": 1.0', '"base_mva": 2.0')
    assert text != bundled_case_path().read_text()
    other.write_text(text)
    code = main(["evaluate", "--case", str(other), "--model", str(artifacts / "model.bin"),
                 "--dataset", str(artifacts / "data.csv")])
    assert code == EXIT_USAGE
    assert "different case" in capsys.readouterr().err


def test_solve_exact_equal_costs_total_load(ieee37, tmp_path, capsys):
    doc = json.loads(bundled_case_path().read_text())
    for g in doc["generators"]:
        g["cost"] = 1.0
    path = tmp_path / "flat.case"
    path.write_text(json.dumps(doc))
    assert main(["solve", "--exact", "--case", str(path), "--pv-fraction", "0"]) == EXIT_OK
    res = json.loads(capsys.readouterr().out)
    total = sum(sum(ld.p_nominal) for ld in ieee37.loads)
    assert res["status"] == "optimal"
    assert res["objective"] == pytest.approx(total, abs=1e-6)
    assert len(res["x"]) == ieee37.n_switches
    assert sum(g["p_mw"] for g in res["dispatch"]["generators"]) == pytest.approx(total * ieee37.base_mva, abs=1e-6)


def test_solve_assignment_matches_exact(tmp_path, capsys):
    assert main(["solve", "--exact"]) == EXIT_OK
    exact = json.loads(capsys.readouterr().out)
    a = tmp_path / "a.json"
    a.write_text(json.dumps({"assignment": exact["assignment"]}))
    assert main(["solve", "--assignment", str(a)]) == EXIT_OK
    res = json.loads(capsys.readouterr().out)
    assert res["objective"] == exact["objective"]
    assert res["ladder_rung"] == 0 and res["repaired"] is False


def test_solve_unrealizable_with_and_without_repair(ieee37, tmp_path, capsys):
    part = load_blocks(ieee37)
    labels = [1] * part.n_blocks
    labels[part.block_of_bus["798"]] = 0
    labels[part.block_of_bus["744"]] = 0
    a = tmp_path / "bad.json"
    a.write_text(json.dumps(labels))
    assert main(["solve", "--assignment", str(a)]) == EXIT_INFEASIBLE
    res = json.loads(capsys.readouterr().out)
    assert res["status"] == "unrealizable" and res["diagnosis"]
    assert main(["solve", "--assignment", str(a), "--repair"]) == EXIT_OK
    res = json.loads(capsys.readouterr().out)
    assert res["repaired"] is True and res["status"] == "optimal"


def test_solve_wrong_label_count(tmp_path):
    a = tmp_path / "short.json"
    a.write_text("[0, 1]")
    assert main(["solve", "--assignment", str(a)]) == EXIT_USAGE


def test_compare_report(artifacts, tmp_path):
    out, rows = tmp_path / "cmp.json", tmp_path / "cmp.csv"
    assert main(["compare", "--model", str(artifacts / "model.bin"), "--n", "4", "--seed", "2",
                 "--out", str(out), "--csv", str(rows)]) == EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["rows"] + rep["exact_infeasible"] == 4
    assert rep["objective_gap"]["below_exact"] == 0
    assert len(rows.read_text().splitlines()) == 5
