import numpy as np
import pytest

from dnrlearn.datagen import (
    DataGenerationError,
    ScenarioSpec,
    dataset_csv,
    generate,
    manifest,
    read_dataset_csv,
    sample_scenario,
    split,
    verify_labels,
)
from dnrlearn.netcase import bundled_case_path, case_from_dict, load_blocks, load_case
from oracles import case_doc, line_doc


@pytest.fixture(scope="module")
def ieee37():
    return load_case(bundled_case_path())


@pytest.fixture(scope="module")
def part(ieee37):
    return load_blocks(ieee37)


@pytest.fixture(scope="module")
def small(ieee37, part):
    return generate(ieee37, part, ScenarioSpec(n_samples=50, seed=3))


def test_degenerate_sigma_gives_midpoints(ieee37):
    sc = sample_scenario(ieee37, ScenarioSpec(sigma_fraction=0.0), np.random.default_rng(0))
    assert np.all(sc.load_scale == 1.0)
    assert np.all(sc.pv_fraction == 0.5)


def test_truncation_bounds(ieee37):
    rng = np.random.default_rng(0)
    spec = ScenarioSpec()
    loads = np.concatenate([sample_scenario(ieee37, spec, rng).load_scale for _ in range(350)])
    assert loads.size > 10_000
    assert loads.min() >= 0.8 and loads.max() <= 1.2
    # sigma is a quarter of the width, so the spread is close to that
    assert 0.08 < loads.std() < 0.1
    pv = np.concatenate([sample_scenario(ieee37, spec, rng).pv_fraction for _ in range(200)])
    assert pv.min() >= 0.0 and pv.max() <= 1.0


def test_scenario_stream_is_seeded(ieee37):
    a = [sample_scenario(ieee37, ScenarioSpec(), np.random.default_rng(5)) for _ in range(2)]
    assert np.array_equal(a[0].load_scale, a[1].load_scale)
    assert np.array_equal(a[0].pv_fraction, a[1].pv_fraction)


def test_spec_validation():
    with pytest.raises(ValueError):
        ScenarioSpec(n_samples=0)
    with pytest.raises(ValueError):
        ScenarioSpec(load_range=(1.2, 0.8))


def test_generate_labels_realizable(ieee37, part, small):
    assert len(small.samples) + small.n_infeasible == 50
    assert len(small.samples) >= 45
    assert verify_labels(ieee37, part, small.labels) == []
    nominal_p = ieee37.load_features()
    rated = np.array([sum(g.rated) for g in ieee37.pv_units])
    X = small.features
    n_load = len(ieee37.loads)
    assert np.all(X[:, :n_load] >= 0.8 * nominal_p - 1e-12)
    assert np.all(X[:, :n_load] <= 1.2 * nominal_p + 1e-12)
    assert np.all(X[:, n_load:] >= 0.0) and np.all(X[:, n_load:] <= rated + 1e-12)
    assert all(np.isfinite(s.objective) and s.solve_ms > 0 for s in small.samples)


def test_generate_is_deterministic_and_jobs_invariant(ieee37, part):
    spec = ScenarioSpec(n_samples=6, seed=11)
    a = generate(ieee37, part, spec)
    b = generate(ieee37, part, spec, jobs=2)
    assert dataset_csv(ieee37, part, a.features, a.labels) == dataset_csv(ieee37, part, b.features, b.labels)


def test_zero_load_zero_pv_labels_identical(ieee37, part):
    spec = ScenarioSpec(n_samples=5, load_range=(0.0, 0.0), pv_range=(0.0, 0.0), seed=1)
    data = generate(ieee37, part, spec)
    assert len({tuple(r) for r in data.labels}) == 1


def test_mostly_infeasible_spec_aborts():
    # the only line is rated far below the load
    doc = case_doc(["s", "a"], [line_doc("l", "s", "a", smax=0.1)], ["s"], loads=[("a", 1.0, 0.0)])
    case = case_from_dict(doc)
    with pytest.raises(DataGenerationError, match="no feasible"):
        generate(case, None, ScenarioSpec(n_samples=4, pv_range=(0.0, 0.0)))


@pytest.mark.parametrize("n, sizes", [(5000, (4500, 250, 250)), (2000, (1800, 100, 100)),
                                      (20, (18, 1, 1)), (3, (1, 1, 1))])
def test_split_sizes(n, sizes):
    tr, va, te = split(n, seed=0)
    assert (len(tr), len(va), len(te)) == sizes
    assert sorted(np.concatenate([tr, va, te]).tolist()) == list(range(n))


def test_split_seeded_and_validated():
    assert all(np.array_equal(a, b) for a, b in zip(split(100, seed=4), split(100, seed=4)))
    assert not np.array_equal(split(100, seed=4)[1], split(100, seed=5)[1])
    with pytest.raises(ValueError):
        split(2)
    with pytest.raises(ValueError):
        split(100, (0.5, 0.2, 0.2))


def test_csv_round_trip(ieee37, part, small):
    text = dataset_csv(ieee37, part, small.features, small.labels)
    header = text.split("\n", 1)[0].split(",")
    assert header[0].startswith("load_") and header[-1].startswith("block_")
    assert sum(h.startswith("pv_") for h in header) == 5
    X, L = read_dataset_csv(text, ieee37, part)
    assert np.array_equal(X, small.features)
    assert np.array_equal(L, small.labels)
    with pytest.raises(ValueError, match="columns"):
        read_dataset_csv("a,b\n1,2\n", ieee37, part)


def test_manifest_fields(small):
    m = manifest(small)
    assert m["n_rows"] == len(small.samples)
    assert m["infeasible_dropped"] == small.n_infeasible
    assert m["seed"] == 3 and len(m["case_hash"]) == 64
    assert m["mean_exact_solve_ms"] > 0
