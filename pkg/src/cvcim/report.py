"""Render figures from a run directory's delimited outputs.

Reads whichever of runs.jsonl, percentiles.csv, summary.csv, sweep.csv,
and ratio.csv are present and writes one PNG per available view next to
them (or into --out).  The tables remain the primary artifact; figures
are a convenience for eyeballing convergence, sample diversity, and the
feedback-strength grid.
"""

from __future__ import annotations

import json
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_report"]

_POLICY_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"]


def _policy_color(policies: list[str], name: str) -> str:
    return _POLICY_COLORS[policies.index(name) % len(_POLICY_COLORS)]


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    lines = path.read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


def _savefig(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _convergence_figure(run_dir: Path, out: Path) -> Path | None:
    path = run_dir / "percentiles.csv"
    if not path.is_file():
        return None
    header, rows = _read_csv(path)
    col = {name: i for i, name in enumerate(header)}
    series = defaultdict(lambda: ([], []))
    for row in rows:
        key = (row[col["instance"]], row[col["policy"]], float(row[col["X"]]))
        series[key][0].append(int(row[col["roundtrip"]]))
        series[key][1].append(float(row[col["gap"]]))
    instances = sorted({k[0] for k in series})
    policies = sorted({k[1] for k in series})
    x_lo = min(k[2] for k in series)  # sharpest percentile on record
    fig, axes = plt.subplots(
        1, len(instances), figsize=(4.2 * len(instances), 3.4), squeeze=False, sharey=True
    )
    for ax, inst in zip(axes[0], instances):
        for pol in policies:
            key = (inst, pol, x_lo)
            if key not in series:
                continue
            r, g = series[key]
            floor = 1e-12
            ax.semilogy(r, np.maximum(g, floor), label=pol, color=_policy_color(policies, pol))
        ax.set_title(inst, fontsize=9)
        ax.set_xlabel("roundtrip")
    axes[0][0].set_ylabel(f"gap (percentile X={x_lo:g})")
    axes[0][0].legend(fontsize=8)
    return _savefig(fig, out / "convergence.png")


def _distribution_figure(run_dir: Path, out: Path) -> Path | None:
    path = run_dir / "runs.jsonl"
    if not path.is_file():
        return None
    gaps = defaultdict(list)
    for line in path.read_text(encoding="utf-8").splitlines():
        rec = json.loads(line)
        gaps[(rec["instance"], rec["policy"])].append(rec["best_gap"])
    instances = sorted({k[0] for k in gaps})
    policies = sorted({k[1] for k in gaps})
    fig, axes = plt.subplots(
        1, len(instances), figsize=(3.6 * len(instances), 3.4), squeeze=False, sharey=True
    )
    for ax, inst in zip(axes[0], instances):
        data = [gaps.get((inst, pol), [np.nan]) for pol in policies]
        parts = ax.violinplot(data, showmedians=True, widths=0.8)
        for body, pol in zip(parts["bodies"], policies):
            body.set_facecolor(_policy_color(policies, pol))
        ax.set_xticks(range(1, len(policies) + 1), policies, fontsize=8, rotation=20)
        ax.set_title(inst, fontsize=9)
    axes[0][0].set_ylabel("best relative gap per sample")
    return _savefig(fig, out / "best_gap_distribution.png")


def _summary_figure(run_dir: Path, out: Path) -> Path | None:
    path = run_dir / "summary.csv"
    if not path.is_file():
        return None
    header, rows = _read_csv(path)
    col = {name: i for i, name in enumerate(header)}
    instances = sorted({r[col["instance"]] for r in rows})
    policies = sorted({r[col["policy"]] for r in rows})
    stddev = {(r[col["instance"]], r[col["policy"]]): float(r[col["gap_stddev"]]) for r in rows}
    psucc = {
        (r[col["instance"]], r[col["policy"]]): float(r[col["success_probability"]]) for r in rows
    }
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    width = 0.8 / len(policies)
    xs = np.arange(len(instances))
    for i, pol in enumerate(policies):
        off = (i - (len(policies) - 1) / 2) * width
        ax1.bar(
            xs + off,
            [stddev.get((inst, pol), 0.0) for inst in instances],
            width,
            label=pol,
            color=_policy_color(policies, pol),
        )
        ax2.bar(
            xs + off,
            [psucc.get((inst, pol), 0.0) for inst in instances],
            width,
            label=pol,
            color=_policy_color(policies, pol),
        )
    for ax, title in ((ax1, "gap standard deviation"), (ax2, "P(gap <= 0.1%)")):
        ax.set_xticks(xs, instances, fontsize=7, rotation=20)
        ax.set_title(title, fontsize=10)
    ax1.legend(fontsize=8)
    return _savefig(fig, out / "summary.png")


def _ratio_figure(run_dir: Path, out: Path) -> Path | None:
    path = run_dir / "ratio.csv"
    if not path.is_file():
        return None
    header, rows = _read_csv(path)
    col = {name: i for i, name in enumerate(header)}
    hist = defaultdict(dict)
    names = {}
    for r in rows:
        if r[col["row"]] != "hist":
            names = {"a": r[col["policy_a"]], "b": r[col["policy_b"]]}
            continue
        x = float(r[col["X"]])
        faster = r[col["faster"]]
        hist[(x, faster)][float(r[col["bucket_lo"]])] = int(r[col["count"]])
    xs_list = sorted({k[0] for k in hist})
    fig, axes = plt.subplots(1, len(xs_list), figsize=(3.2 * len(xs_list), 3.2), squeeze=False)
    for ax, x in zip(axes[0], xs_list):
        for faster, color in (("a", "#1f77b4"), ("b", "#d62728")):
            buckets = hist.get((x, faster), {})
            lows = sorted(buckets)
            ax.bar(
                [lo + 0.05 for lo in lows],
                [buckets[lo] for lo in lows],
                width=0.09,
                label=f"faster: {names.get(faster, faster)}",
                color=color,
                alpha=0.75,
            )
        ax.set_title(f"X={x:g}", fontsize=9)
        ax.set_xlabel("roundtrip ratio")
    axes[0][0].set_ylabel("instances")
    axes[0][0].legend(fontsize=8)
    return _savefig(fig, out / "ratio_histogram.png")


def _sweep_figure(run_dir: Path, out: Path) -> Path | None:
    path = run_dir / "sweep.csv"
    if not path.is_file():
        return None
    header, rows = _read_csv(path)
    col = {name: i for i, name in enumerate(header)}
    samples = defaultdict(list)
    frac_div = {}
    for r in rows:
        key = (float(r[col["kappa"]]), float(r[col["lambda"]]), r[col["policy"]])
        if r[col["row"]] == "sample":
            samples[key].append(float(r[col["best_gap"]]))
        else:
            frac_div[key] = float(r[col["frac_diverged"]])
    kappas = sorted({k[0] for k in samples})
    lams = sorted({k[1] for k in samples})
    policies = sorted({k[2] for k in samples})
    fig, axes = plt.subplots(
        len(kappas),
        len(lams),
        figsize=(2.6 * len(lams), 2.2 * len(kappas)),
        squeeze=False,
        sharex=True,
    )
    for i, kappa in enumerate(kappas):
        for jj, lam in enumerate(lams):
            ax = axes[i][jj]
            for p_idx, pol in enumerate(policies):
                key = (kappa, lam, pol)
                vals = samples.get(key, [])
                if vals:
                    jitter = np.linspace(-0.18, 0.18, len(vals))
                    ax.scatter(
                        np.full(len(vals), p_idx) + jitter,
                        np.maximum(vals, 1e-12),
                        s=6,
                        color=_policy_color(policies, pol),
                    )
                div = frac_div.get(key, 0.0)
                if div > 0:
                    ax.text(p_idx, 1.02, f"{div:.0%}", transform=ax.get_xaxis_transform(),
                            ha="center", fontsize=6, color="red")
            ax.set_yscale("log")
            ax.set_xticks(range(len(policies)), policies, fontsize=6, rotation=30)
            if i == 0:
                ax.set_title(f"lambda={lam:g}", fontsize=8)
            if jj == 0:
                ax.set_ylabel(f"kappa={kappa:g}\nbest gap", fontsize=8)
    return _savefig(fig, out / "sweep_grid.png")


def render_report(run_dir, out_dir=None) -> list[Path]:
    """Render every figure the run directory's outputs support."""
    run_dir = Path(run_dir)
    out = Path(out_dir) if out_dir is not None else run_dir
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for maker in (
        _convergence_figure,
        _distribution_figure,
        _summary_figure,
        _ratio_figure,
        _sweep_figure,
    ):
        path = maker(run_dir, out)
        if path is not None:
            written.append(path)
    if not written:
        raise FileNotFoundError(f"no renderable outputs found in {run_dir}")
    return written
