"""Summary tables, per-axis aggregates, and figures for batches of runs."""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from pathlib import Path
from typing import Sequence

from .experiment import AXES, RunReport

_COUNTS = ["strategy", "seed", "assigned", "n_tasks", "n_workers", "plan_events", "expansions",
           "evaluations", "predicted_dispatched"]
SUMMARY_FIELDS = [*_COUNTS, *(a for a in AXES if a not in _COUNTS),
                  "plan_wall_total", "plan_wall_mean", "plan_wall_max", "run_wall"]
AGG_FIELDS = ["value", "strategy", "runs", "assigned_mean", "expansions_mean",
              "plan_wall_mean", "run_wall_mean"]


class ReportError(OSError):
    def __init__(self, path: Path, cause: OSError):
        super().__init__(f"{path}: {cause.strerror or cause}")
        self.path = path


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise ReportError(path, exc) from None


def _csv_text(fieldnames: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _ordered(reports: Sequence[RunReport]) -> list[RunReport]:
    return sorted(reports, key=lambda r: (r.strategy, r.seed))


def aggregate(reports: Sequence[RunReport], axis: str) -> list[dict]:
    """Means per (axis value, strategy)."""
    groups: dict[tuple, list[RunReport]] = defaultdict(list)
    for r in reports:
        groups[(r.axes.get(axis), r.strategy)].append(r)
    rows = []
    for (value, strategy), rs in sorted(groups.items(), key=lambda kv: (str(kv[0][1]), _num(kv[0][0]))):
        n = len(rs)
        rows.append({
            "value": value, "strategy": strategy, "runs": n,
            "assigned_mean": sum(r.assigned for r in rs) / n,
            "expansions_mean": sum(r.expansions for r in rs) / n,
            "plan_wall_mean": sum(r.plan_wall_total for r in rs) / n,
            "run_wall_mean": sum(r.run_wall for r in rs) / n,
        })
    return rows


def _num(v):
    return (0, float(v)) if isinstance(v, (int, float)) else (1, str(v))


def emit_report(reports: Sequence[RunReport], out_dir: str | Path,
                figures: bool = True) -> list[Path]:
    """Write ``summary.csv``, ``summary.json`` and ``by_<axis>.csv`` files, plus PNG figures."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportError(out, exc) from None
    reports = _ordered(reports)
    written = []
    p = out / "summary.csv"
    _write(p, _csv_text(SUMMARY_FIELDS, [r.row() for r in reports]))
    written.append(p)
    p = out / "summary.json"
    _write(p, json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True))
    written.append(p)
    aggs = {}
    for axis in AXES:
        rows = aggregate(reports, axis)
        aggs[axis] = rows
        p = out / f"by_{axis}.csv"
        _write(p, _csv_text(AGG_FIELDS, rows))
        written.append(p)
    if figures and reports:
        written += _figures(reports, aggs, out)
    return written


AXIS_LABELS = {"n_tasks": "|S|", "n_workers": "|W|", "reach": "reach d (km)",
               "availability": "off - on (s)", "task_valid": "e - p (s)"}


def _figures(reports: list[RunReport], aggs: dict[str, list[dict]], out: Path) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    strategies = sorted({r.strategy for r in reports})
    fig, ax = plt.subplots(figsize=(5, 3.2))
    means = [sum(r.assigned for r in reports if r.strategy == s) /
             sum(1 for r in reports if r.strategy == s) for s in strategies]
    ax.bar(strategies, means, color="0.55")
    ax.set_ylabel("mean assigned tasks")
    fig.tight_layout()
    paths.append(_save(fig, out / "assigned_by_strategy.png"))
    plt.close(fig)

    for axis, rows in aggs.items():
        values = sorted({r["value"] for r in rows}, key=_num)
        if len(values) < 2:
            continue
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.2))
        for s in strategies:
            pts = sorted(((r["value"], r) for r in rows if r["strategy"] == s), key=lambda t: _num(t[0]))
            xs = [v for v, _ in pts]
            a1.plot(xs, [r["assigned_mean"] for _, r in pts], marker="o", label=s)
            a2.plot(xs, [r["expansions_mean"] for _, r in pts], marker="o", label=s)
        a1.set_xlabel(AXIS_LABELS[axis])
        a2.set_xlabel(AXIS_LABELS[axis])
        a1.set_ylabel("assigned tasks")
        a2.set_ylabel("search expansions")
        a1.legend(fontsize=7)
        fig.tight_layout()
        paths.append(_save(fig, out / f"by_{axis}.png"))
        plt.close(fig)
    return paths


def _save(fig, path: Path) -> Path:
    try:
        fig.savefig(path, dpi=120, metadata={"Software": None})
    except OSError as exc:
        raise ReportError(path, exc) from None
    return path
