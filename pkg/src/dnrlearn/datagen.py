"""Scenario sampling and exact labeling for supervised training data."""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.stats import truncnorm

from .netcase import BlockAssignment, LoadBlockPartition, NetworkCase, case_hash, load_blocks
from .reconfig import radial_index, solve_exact

MAX_INFEASIBLE_FRACTION = 0.5


@dataclass(frozen=True)
class ScenarioSpec:
    n_samples: int = 5000
    load_range: tuple[float, float] = (0.8, 1.2)
    pv_range: tuple[float, float] = (0.0, 1.0)
    sigma_fraction: float = 0.25  # standard deviation as a fraction of the range width
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        for name in ("load_range", "pv_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} must be ordered, got {(lo, hi)}")
        if self.load_range[0] < 0 or self.pv_range[0] < 0:
            raise ValueError("ranges must be non-negative")
        if self.sigma_fraction < 0:
            raise ValueError("sigma_fraction must be >= 0")


@dataclass(frozen=True)
class Scenario:
    load_scale: np.ndarray   # one factor per load, applied to P and Q
    pv_fraction: np.ndarray  # available fraction of rated output per PV unit


@dataclass(frozen=True)
class LabeledSample:
    features: np.ndarray
    label: BlockAssignment
    objective: float
    solve_ms: float


@dataclass
class GeneratedData:
    samples: list
    n_infeasible: int
    spec: ScenarioSpec
    case_hash: str

    @property
    def features(self) -> np.ndarray:
        return np.array([s.features for s in self.samples])

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label.labels for s in self.samples], dtype=np.int64)


class DataGenerationError(RuntimeError):
    pass


def _truncated(lo: float, hi: float, sigma_fraction: float, size: int, rng) -> np.ndarray:
    mid = 0.5 * (lo + hi)
    sigma = sigma_fraction * (hi - lo)
    if sigma == 0.0:
        return np.full(size, mid)
    a, b = (lo - mid) / sigma, (hi - mid) / sigma
    draws = truncnorm.rvs(a, b, loc=mid, scale=sigma, size=size, random_state=rng)
    return np.clip(draws, lo, hi)


def sample_scenario(case: NetworkCase, spec: ScenarioSpec, rng: np.random.Generator) -> Scenario:
    loads = _truncated(*spec.load_range, spec.sigma_fraction, len(case.loads), rng)
    pv = _truncated(*spec.pv_range, spec.sigma_fraction, len(case.pv_units), rng)
    return Scenario(loads, pv)


def scenario_features(case: NetworkCase, sc: Scenario) -> np.ndarray:
    """Active load per load and available PV output per unit (summed over
    phases, per-unit)."""
    scen = case.with_scenario(sc.load_scale, sc.pv_fraction)
    return np.concatenate([scen.load_features(), scen.pv_features()])


def _label_one(args):
    case, partition, sc = args
    t0 = time.perf_counter()
    res, _ = solve_exact(case.with_scenario(sc.load_scale, sc.pv_fraction), partition)
    ms = (time.perf_counter() - t0) * 1000.0
    if not res.optimal:
        return None
    return res.assignment, res.objective, ms


def generate(case: NetworkCase, partition: LoadBlockPartition | None, spec: ScenarioSpec,
             jobs: int = 1) -> GeneratedData:
    """Sample ``spec.n_samples`` scenarios and label each with the exact
    optimum.  Infeasible scenarios are dropped; rows keep scenario order
    whatever ``jobs`` is."""
    partition = partition or load_blocks(case)
    rng = np.random.default_rng(spec.seed)
    scenarios = [sample_scenario(case, spec, rng) for _ in range(spec.n_samples)]
    radial_index(case, partition)  # warm the enumeration cache before forking
    work = [(case, partition, sc) for sc in scenarios]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_label_one, work, chunksize=max(1, len(work) // (8 * jobs))))
    else:
        results = [_label_one(w) for w in work]
    samples = []
    for sc, r in zip(scenarios, results):
        if r is not None:
            samples.append(LabeledSample(scenario_features(case, sc), r[0], r[1], r[2]))
    n_bad = spec.n_samples - len(samples)
    if n_bad > MAX_INFEASIBLE_FRACTION * spec.n_samples:
        raise DataGenerationError(
            f"{n_bad} of {spec.n_samples} scenarios have no feasible radial configuration; "
            "the sampling ranges are probably inconsistent with the case")
    return GeneratedData(samples, n_bad, spec, case_hash(case))


def split(n: int, fractions: Sequence[float] = (0.90, 0.05, 0.05), seed: int = 0
          ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shuffled train/val/test indices.  Validation and test get
    ``max(1, floor(f * n))`` rows each; training gets the rest."""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    n_val = max(1, math.floor(fractions[1] * n + 1e-9))
    n_test = max(1, math.floor(fractions[2] * n + 1e-9))
    n_train = n - n_val - n_test
    if n_train < 1:
        raise ValueError(f"{n} rows cannot fill three non-empty splits")
    perm = np.random.default_rng(seed).permutation(n)
    return (np.sort(perm[:n_train]), np.sort(perm[n_train:n_train + n_val]),
            np.sort(perm[n_train + n_val:]))


def verify_labels(case: NetworkCase, partition: LoadBlockPartition, labels: np.ndarray) -> list[int]:
    """Rows whose label no radial configuration realizes."""
    index = radial_index(case, partition)
    return [k for k, row in enumerate(labels) if not index.realizable(BlockAssignment(tuple(int(v) for v in row)))]


# ---------------------------------------------------------------------------
# CSV and manifest


def csv_header(case: NetworkCase, partition: LoadBlockPartition) -> list[str]:
    return ([f"load_{ld.id}" for ld in case.loads] + [f"pv_{g.id}" for g in case.pv_units]
            + [f"block_{k}" for k in range(partition.n_blocks)])


def dataset_csv(case: NetworkCase, partition: LoadBlockPartition, features: np.ndarray,
                labels: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(case, partition))
    for f, lab in zip(features, labels):
        w.writerow([repr(float(v)) for v in f] + [int(v) for v in lab])
    return buf.getvalue()


def read_dataset_csv(text: str, case: NetworkCase, partition: LoadBlockPartition
                     ) -> tuple[np.ndarray, np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("dataset is empty")
    header = csv_header(case, partition)
    if rows[0] != header:
        raise ValueError("dataset columns do not match the case "
                         f"({len(rows[0])} columns, case needs {len(header)})")
    n_feat = len(case.loads) + len(case.pv_units)
    body = rows[1:]
    features = np.array([[float(v) for v in r[:n_feat]] for r in body]).reshape(len(body), n_feat)
    labels = np.array([[int(v) for v in r[n_feat:]] for r in body], dtype=np.int64).reshape(len(body), -1)
    return features, labels


def manifest(data: GeneratedData) -> dict:
    ms = [s.solve_ms for s in data.samples]
    return {
        "case_hash": data.case_hash,
        "spec": asdict(data.spec),
        "seed": data.spec.seed,
        "n_rows": len(data.samples),
        "infeasible_dropped": data.n_infeasible,
        "mean_exact_solve_ms": float(np.mean(ms)) if ms else None,
    }
