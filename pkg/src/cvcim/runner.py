"""Experiment orchestration: instance resolution, grid execution, file outputs.

The execution grid is (instance x policy x sample).  Samples of one
(instance, policy) cell run as a single vectorized batch; cells are
distributed over a process pool when workers > 1.  Every trajectory's
noise stream derives from (master_seed, instance_label, sample_index), so
outputs are independent of scheduling, and all result rows are sorted
before writing: reruns of the same config are byte-identical for every
output except the wall-time sidecar ``timings.csv``.

Output files (UTF-8, LF, header rows, floats at 17 significant digits):
runs.jsonl, percentiles.csv, summary.csv, sweep.csv, ratio.csv,
reference.csv, timings.csv.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
import logging
import math
import time
from pathlib import Path

import numpy as np

from .boxqp import BoxQpInstance
from .config import ExperimentConfig
from .dynamics import CimParams, GapSeries, simulate_many
from .feedback import PolicyConfig
from .fileio import jsonl_line, write_csv, write_text
from .instances import (
    ConditionedSpec,
    ReferenceTable,
    generate_conditioned,
    grid_oracle,  # noqa: F401  (re-exported for harness users)
    load_reference,
    oracle_best,
    parse_conditioned_label,
    parse_instance,
    sample_seed_sequence,
    serialize_instance,
    serialize_reference,
)

__all__ = [
    "RunRecord",
    "generate_instance_files",
    "oracle_references",
    "ratio_files",
    "run_experiment",
    "sweep_experiment",
]

logger = logging.getLogger("cvcim")

GAP_THRESHOLDS = (1e-2, 1e-3)
SUCCESS_THRESHOLD = 1e-3
RATIO_BUCKET_WIDTH = 0.1


@dataclass(frozen=True)
class RunRecord:
    """One trajectory's outcome, the raw material of all aggregate metrics."""

    instance: str
    policy: str
    sample: int
    seed: int
    diverged_at: int | None
    best_gap: float
    final_gap: float
    first_rt_1e2: int | None
    first_rt_1e3: int | None
    wall_time: float

    def to_json_dict(self) -> dict:
        # wall_time is deliberately excluded: runs.jsonl is under the
        # byte-identical rerun contract, timing goes to timings.csv
        return {
            "instance": self.instance,
            "policy": self.policy,
            "sample": self.sample,
            "seed": self.seed,
            "diverged_at": self.diverged_at,
            "best_gap": self.best_gap,
            "final_gap": self.final_gap,
            "first_rt_1e2": self.first_rt_1e2,
            "first_rt_1e3": self.first_rt_1e3,
        }


# ---------------------------------------------------------------------------
# instance resolution and references


def resolve_instances(sources) -> list[BoxQpInstance]:
    """Load or generate every instance source; fails before any simulation."""
    instances: list[BoxQpInstance] = []
    seen: set[str] = set()
    for src in sources:
        spec = parse_conditioned_label(src)
        if spec is not None:
            inst = generate_conditioned(spec)
        else:
            path = Path(src)
            if not path.is_file():
                raise FileNotFoundError(f"instance file not found: {src}")
            inst = parse_instance(path.read_text(encoding="utf-8"), label=path.stem)
        if inst.label in seen:
            raise ValueError(f"duplicate instance label {inst.label!r}")
        seen.add(inst.label)
        instances.append(inst)
    return instances


def attach_references(
    instances: list[BoxQpInstance], config: ExperimentConfig
) -> tuple[list[BoxQpInstance], ReferenceTable, list[tuple[str, str]]]:
    """Attach a best-known objective to each instance.

    Table entries win; otherwise the seeded projected-gradient oracle
    fills in when oracle_starts > 0.  Instances that end up without a
    usable (nonzero) reference are refused with a logged reason.
    """
    table = ReferenceTable(values={})
    if config.reference_file is not None:
        table = load_reference(Path(config.reference_file).read_text(encoding="utf-8"))
    kept: list[BoxQpInstance] = []
    used: dict[str, float] = {}
    refused: list[tuple[str, str]] = []
    for inst in instances:
        ref = table.get(inst.label)
        if ref is None and config.oracle_starts > 0:
            _, ref = oracle_best(
                inst,
                n_starts=config.oracle_starts,
                max_iters=config.oracle_iters,
                seed=config.oracle_seed,
            )
        if ref is None:
            refused.append((inst.label, "no reference optimum available"))
        elif ref == 0.0:
            refused.append((inst.label, "reference objective is zero; gap undefined"))
        else:
            kept.append(replace(inst, best_known=float(ref)))
            used[inst.label] = float(ref)
    for label, reason in refused:
        logger.warning("refusing instance %s: %s", label, reason)
    return kept, ReferenceTable(values=used), refused


# ---------------------------------------------------------------------------
# grid execution


@dataclass(frozen=True)
class _CellTask:
    inst: BoxQpInstance
    params: CimParams
    policy: PolicyConfig
    master_seed: int
    samples: int
    stride: int
    kappa: float | None = None  # set in sweep mode


@dataclass(frozen=True)
class _CellResult:
    task: _CellTask
    records: list[RunRecord]
    series: list[GapSeries]


def _run_cell(task: _CellTask) -> _CellResult:
    seqs = [
        sample_seed_sequence(task.master_seed, task.inst.label, k) for k in range(task.samples)
    ]
    seed_ints = [int(s.generate_state(1, np.uint64)[0]) for s in seqs]
    t0 = time.perf_counter()
    results = simulate_many(task.inst, task.params, task.policy, seqs, stride=task.stride)
    per_sample_wall = (time.perf_counter() - t0) / task.samples
    records = []
    series_out = []
    for k, (state, series) in enumerate(results):
        records.append(
            RunRecord(
                instance=task.inst.label,
                policy=task.policy.name,
                sample=k,
                seed=seed_ints[k],
                diverged_at=state.diverged_at,
                best_gap=series.best_gap(),
                final_gap=series.final_gap(),
                first_rt_1e2=series.first_reach(GAP_THRESHOLDS[0]),
                first_rt_1e3=series.first_reach(GAP_THRESHOLDS[1]),
                wall_time=per_sample_wall,
            )
        )
        series_out.append(series)
    return _CellResult(task=task, records=records, series=series_out)


def _execute(tasks: list[_CellTask], workers: int) -> list[_CellResult]:
    if workers <= 1 or len(tasks) <= 1:
        return [_run_cell(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell, tasks))


# ---------------------------------------------------------------------------
# run command


def run_experiment(config: ExperimentConfig, workers: int = 1, out_dir=None) -> dict[str, Path]:
    """Execute the full (instance x policy x sample) grid and write outputs."""
    config.require_run_mode()
    out = Path(out_dir if out_dir is not None else config.out)
    policies = config.policy_configs()
    instances = resolve_instances(config.instances)
    kept, used_refs, _ = attach_references(instances, config)

    tasks = [
        _CellTask(
            inst=inst,
            params=config.cim,
            policy=policy,
            master_seed=config.master_seed,
            samples=config.samples,
            stride=config.stride,
        )
        for inst in kept
        for policy in policies
    ]
    results = _execute(tasks, workers)

    records = sorted(
        (r for cell in results for r in cell.records),
        key=lambda r: (r.instance, r.policy, r.sample),
    )
    paths = {
        "runs": out / "runs.jsonl",
        "percentiles": out / "percentiles.csv",
        "summary": out / "summary.csv",
        "reference": out / "reference.csv",
        "timings": out / "timings.csv",
    }
    write_text(paths["runs"], "".join(jsonl_line(r.to_json_dict()) + "\n" for r in records))
    write_csv(
        paths["timings"],
        ["instance", "policy", "sample", "wall_time"],
        [(r.instance, r.policy, r.sample, r.wall_time) for r in records],
    )
    write_text(paths["reference"], serialize_reference(used_refs))
    _write_percentiles(paths["percentiles"], results, config.percentiles)
    _write_summary(paths["summary"], results)
    return paths


def _write_percentiles(path: Path, results: list[_CellResult], percentiles) -> None:
    from .metrics import percentile_series

    rows = []
    for cell in sorted(results, key=lambda c: (c.task.inst.label, c.task.policy.name)):
        for x in percentiles:
            traj = percentile_series(cell.series, x)
            for roundtrip, gap in zip(traj.roundtrips, traj.gaps):
                rows.append(
                    (int(roundtrip), cell.task.inst.label, cell.task.policy.name, float(x), gap)
                )
    write_csv(path, ["roundtrip", "instance", "policy", "X", "gap"], rows)


def _write_summary(path: Path, results: list[_CellResult]) -> None:
    from .metrics import gap_stddev, success_probability

    rows = []
    for cell in sorted(results, key=lambda c: (c.task.inst.label, c.task.policy.name)):
        best = [r.best_gap for r in cell.records]
        for_success = [
            math.nan if r.diverged_at is not None else r.best_gap for r in cell.records
        ]
        rows.append(
            (
                cell.task.inst.label,
                cell.task.policy.name,
                len(cell.records),
                gap_stddev(best),
                success_probability(for_success, SUCCESS_THRESHOLD),
                float(np.median(best)),
            )
        )
    write_csv(
        path,
        ["instance", "policy", "samples", "gap_stddev", "success_probability", "median_best_gap"],
        rows,
    )


# ---------------------------------------------------------------------------
# sweep command


def _sweep_instance_seed(master_seed: int, kappa_index: int) -> int:
    seq = sample_seed_sequence(master_seed, "sweep-instances", kappa_index)
    return int(seq.generate_state(1, np.uint64)[0])


def sweep_experiment(config: ExperimentConfig, workers: int = 1, out_dir=None) -> dict[str, Path]:
    """Run the feedback-strength sensitivity grid on generated instances.

    For each kappa one conditioned instance is generated (seeded from the
    master seed), and every (kappa, lambda) cell runs all policies and
    samples.  Per-cell aggregates use each sample's best gap computed up
    to its point of divergence.
    """
    config.require_sweep_mode()
    if config.oracle_starts < 1:
        raise ValueError("sweep requires oracle references (oracle_starts >= 1)")
    out = Path(out_dir if out_dir is not None else config.out)
    policies = config.policy_configs()

    instances: list[tuple[float, BoxQpInstance]] = []
    used: dict[str, float] = {}
    for kidx, kappa in enumerate(config.kappa_list):
        spec = ConditionedSpec(
            n=config.sweep_n, kappa=kappa, seed=_sweep_instance_seed(config.master_seed, kidx)
        )
        inst = generate_conditioned(spec)
        _, ref = oracle_best(
            inst,
            n_starts=config.oracle_starts,
            max_iters=config.oracle_iters,
            seed=config.oracle_seed,
        )
        if ref == 0.0:
            raise ValueError(f"reference objective is zero for {inst.label}; gap undefined")
        instances.append((kappa, replace(inst, best_known=float(ref))))
        used[inst.label] = float(ref)

    tasks = [
        _CellTask(
            inst=inst,
            params=replace(config.cim, lam=lam),
            policy=policy,
            master_seed=config.master_seed,
            samples=config.samples,
            stride=config.stride,
            kappa=kappa,
        )
        for kappa, inst in instances
        for lam in config.lambda_list
        for policy in policies
    ]
    results = _execute(tasks, workers)

    header = [
        "row",
        "kappa",
        "lambda",
        "policy",
        "instance",
        "sample",
        "diverged_at",
        "best_gap",
        "n_samples",
        "frac_diverged",
        "median_best_gap",
        "gap_min",
        "gap_q25",
        "gap_q75",
        "gap_max",
    ]
    rows = []
    for cell in sorted(
        results, key=lambda c: (c.task.kappa, c.task.params.lam, c.task.policy.name)
    ):
        kappa, lam, pol = cell.task.kappa, cell.task.params.lam, cell.task.policy.name
        label = cell.task.inst.label
        best = np.array([r.best_gap for r in cell.records])
        for r in cell.records:
            rows.append(
                ("sample", kappa, lam, pol, label, r.sample, r.diverged_at, r.best_gap)
                + (None,) * 7
            )
        n_div = sum(1 for r in cell.records if r.diverged_at is not None)
        rows.append(
            (
                "cell",
                kappa,
                lam,
                pol,
                label,
                None,
                None,
                None,
                len(cell.records),
                n_div / len(cell.records),
                float(np.median(best)),
                float(best.min()),
                float(np.percentile(best, 25.0, method="linear")),
                float(np.percentile(best, 75.0, method="linear")),
                float(best.max()),
            )
        )
    paths = {"sweep": out / "sweep.csv", "reference": out / "reference.csv"}
    write_csv(paths["sweep"], header, rows)
    write_text(paths["reference"], serialize_reference(ReferenceTable(values=used)))
    return paths


# ---------------------------------------------------------------------------
# ratio command


def _read_percentiles_csv(path: Path) -> dict[tuple[str, str, float], tuple[list[int], list[float]]]:
    series: dict[tuple[str, str, float], tuple[list[int], list[float]]] = {}
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "roundtrip,instance,policy,X,gap":
        raise ValueError(f"{path}: not a percentiles.csv file")
    for line in lines[1:]:
        roundtrip, instance, policy, x, gap = line.split(",")
        key = (instance, policy, float(x))
        series.setdefault(key, ([], []))
        series[key][0].append(int(roundtrip))
        series[key][1].append(float(gap))
    return series


def ratio_files(
    dir_a,
    dir_b,
    policy_a: str | None = None,
    policy_b: str | None = None,
    xs=(5.0, 10.0, 25.0, 50.0),
    out_dir=None,
) -> Path:
    """Roundtrip-ratio comparison of two run directories, one policy each.

    Reads percentiles.csv from both directories, compares the chosen
    policies per instance and percentile, and writes ratio.csv with the
    per-instance results plus ratio histogram buckets (width 0.1) keyed
    by which variant was faster.
    """
    from .metrics import PercentileTrajectory, roundtrip_ratio

    dir_a, dir_b = Path(dir_a), Path(dir_b)
    series_a = _read_percentiles_csv(dir_a / "percentiles.csv")
    series_b = _read_percentiles_csv(dir_b / "percentiles.csv")

    def pick_policy(series, requested, where):
        names = sorted({pol for _, pol, _ in series})
        if requested is not None:
            if requested not in names:
                raise ValueError(f"policy {requested!r} not present in {where}")
            return requested
        if len(names) != 1:
            raise ValueError(f"{where} holds policies {names}; pick one explicitly")
        return names[0]

    policy_a = pick_policy(series_a, policy_a, str(dir_a))
    policy_b = pick_policy(series_b, policy_b, str(dir_b))

    instances = sorted(
        {inst for inst, pol, _ in series_a if pol == policy_a}
        & {inst for inst, pol, _ in series_b if pol == policy_b}
    )
    if not instances:
        raise ValueError("no common instances between the two run directories")

    header = [
        "row",
        "instance",
        "X",
        "policy_a",
        "policy_b",
        "target_gap",
        "roundtrip_a",
        "roundtrip_b",
        "ratio",
        "faster",
        "zero_roundtrip",
        "bucket_lo",
        "bucket_hi",
        "count",
    ]
    rows = []
    n_buckets = round(1.0 / RATIO_BUCKET_WIDTH)
    hist: dict[tuple[float, str], np.ndarray] = {}
    for x in xs:
        for inst in instances:
            ka, kb = (inst, policy_a, float(x)), (inst, policy_b, float(x))
            if ka not in series_a or kb not in series_b:
                raise ValueError(f"percentile X={x} missing for instance {inst}")
            ta = PercentileTrajectory(
                float(x), np.array(series_a[ka][0]), np.array(series_a[ka][1])
            )
            tb = PercentileTrajectory(
                float(x), np.array(series_b[kb][0]), np.array(series_b[kb][1])
            )
            res = roundtrip_ratio(ta, tb, label_a="a", label_b="b")
            rows.append(
                (
                    "ratio",
                    inst,
                    float(x),
                    policy_a,
                    policy_b,
                    res.target_gap,
                    res.roundtrip_a,
                    res.roundtrip_b,
                    res.ratio,
                    res.faster,
                    res.zero_roundtrip,
                    None,
                    None,
                    None,
                )
            )
            bucket = min(int(res.ratio * n_buckets), n_buckets - 1)
            counts = hist.setdefault((float(x), res.faster), np.zeros(n_buckets, dtype=np.int64))
            counts[bucket] += 1
    for (x, faster), counts in sorted(hist.items()):
        for b in range(n_buckets):
            rows.append(
                (
                    "hist",
                    None,
                    x,
                    policy_a,
                    policy_b,
                    None,
                    None,
                    None,
                    None,
                    faster,
                    None,
                    b / n_buckets,
                    (b + 1) / n_buckets,
                    int(counts[b]),
                )
            )
    out = Path(out_dir) if out_dir is not None else dir_a
    path = out / "ratio.csv"
    write_csv(path, header, rows)
    return path


# ---------------------------------------------------------------------------
# oracle and gen commands


def oracle_references(
    instance_paths, n_starts: int = 100, max_iters: int = 1000, seed: int = 7, out_file=None
) -> ReferenceTable:
    """Compute best-known objectives for instance files; never worsens stored values."""
    values: dict[str, float] = {}
    if out_file is not None and Path(out_file).is_file():
        values.update(load_reference(Path(out_file).read_text(encoding="utf-8")).values)
    for src in instance_paths:
        path = Path(src)
        inst = parse_instance(path.read_text(encoding="utf-8"), label=path.stem)
        _, f = oracle_best(inst, n_starts=n_starts, max_iters=max_iters, seed=seed)
        prev = values.get(inst.label)
        if prev is None or f < prev:
            values[inst.label] = f
    table = ReferenceTable(values=values)
    if out_file is not None:
        write_text(Path(out_file), serialize_reference(table))
    return table


def generate_instance_files(labels, out_dir) -> list[Path]:
    """Write canonical instance files for generator labels (cond-n{n}-k{kappa}-s{seed})."""
    out = Path(out_dir)
    paths = []
    for label in labels:
        spec = parse_conditioned_label(label)
        if spec is None:
            raise ValueError(f"not a generator label: {label!r}")
        inst = generate_conditioned(spec)
        path = out / f"{inst.label}.boxqp"
        write_text(path, serialize_instance(inst))
        paths.append(path)
    return paths
