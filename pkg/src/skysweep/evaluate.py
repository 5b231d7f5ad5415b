"""Benchmark harness: run solvers over instance sets and report gaps.

The headline statistic follows the usual convention in the routing
literature: for each mission
variant, every method's mean collected value is compared against a
reference method, gap = (reference - method) / reference, printed as a
percentage with two decimals.  Positive gaps mean the method trails the
reference; negative gaps mean it beats it.
"""

import csv
import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from . import baselines
from . import policy as pol

CSV_FIELDS = ("variant", "method", "value", "gap", "time_s")


@dataclass(frozen=True)
class GapRecord:
    variant: str
    method: str
    value: float      # mean collected value over the variant's instance set
    gap: float        # fraction relative to the reference method's mean
    time_s: float     # mean wall-clock seconds per instance


def gap(y, y_other):
    """Relative shortfall of `y_other` against `y` as a fraction of `y`."""
    return (y - y_other) / y


def format_gap(g):
    """Render a gap fraction as a signed two-decimal percentage string."""
    return f"{g * 100:.2f}"


def evaluate(instance_sets, methods, reference):
    """Run every method over every variant's instances.

    instance_sets: mapping variant code -> list of instances.
    methods: mapping method name -> callable(instance) -> float value.
    reference: name of the method whose mean anchors the gaps.

    Returns GapRecords ordered by (variant, method-insertion order).
    """
    if reference not in methods:
        raise KeyError(f"reference method {reference!r} not among methods")
    records = []
    for variant in sorted(instance_sets):
        instances = instance_sets[variant]
        means, times = {}, {}
        for name, solve in methods.items():
            start = time.perf_counter()
            values = [float(solve(inst)) for inst in instances]
            elapsed = time.perf_counter() - start
            means[name] = float(np.mean(values)) if values else 0.0
            times[name] = elapsed / max(len(instances), 1)
        ref_mean = means[reference]
        for name in methods:
            records.append(GapRecord(
                variant=variant, method=name, value=means[name],
                gap=gap(ref_mean, means[name]) if ref_mean != 0 else 0.0,
                time_s=times[name]))
    return records


def policy_method(params):
    def solve(inst):
        with ad.no_grad():
            sols, _ = pol.run_rollouts([inst], params, 1, mode="greedy")
        return sols[0][0].total_value
    return solve


def greedy_method():
    return lambda inst: baselines.greedy_heuristic(inst).total_value


def random_method(seed=0):
    rng = np.random.default_rng(seed)
    return lambda inst: baselines.random_policy_rollout(inst, rng).total_value


def oracle_method():
    return lambda inst: baselines.exact_oracle(inst).total_value


def write_gap_csv(records, path):
    """Report-style CSV: the gap column carries the two-decimal percent."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for r in records:
            writer.writerow([r.variant, r.method, f"{r.value:.6f}",
                             format_gap(r.gap), f"{r.time_s:.6f}"])


def read_gap_csv(path):
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            records.append(GapRecord(
                variant=row["variant"], method=row["method"],
                value=float(row["value"]),
                gap=float(row["gap"]) / 100.0,
                time_s=float(row["time_s"])))
    return records


def write_gap_json(records, path):
    with open(path, "w") as fh:
        json.dump({"format": "gap-report/1",
                   "records": [asdict(r) for r in records]}, fh, indent=2)


def read_gap_json(path):
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != "gap-report/1":
        raise ValueError("not a gap-report/1 document")
    return [GapRecord(**entry) for entry in payload["records"]]
