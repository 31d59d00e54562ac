"""Evaluation reports: one JSON document with fixed keys plus a plain-text
table for humans.

Keys are stable (``pq_all``, ``pq_things``, ``pq_stuff``, ``miou``,
``mean_ap``, ``ap_per_threshold``, ``per_class``) and the JSON serialization
is canonical (sorted keys, fixed layout), so identical inputs produce
byte-identical files.
"""
from __future__ import annotations

import json
from pathlib import Path

from panoptic.metrics import ApReport, IouReport, PqReport


def evaluation_report(
    pq: PqReport,
    iou: IouReport | None = None,
    ap: ApReport | None = None,
    extra: dict | None = None,
) -> dict:
    """Assembles the canonical report dictionary."""
    per_class: dict[str, dict] = {}
    for class_id, stats in sorted(pq.per_class.items()):
        per_class[str(class_id)] = {
            "pq": stats.pq,
            "sq": stats.sq,
            "rq": stats.rq,
            "tp": stats.tp,
            "fp": stats.fp,
            "fn": stats.fn,
            "iou_sum": stats.iou_sum,
        }
    if iou is not None:
        for class_id, value in sorted(iou.per_class_iou.items()):
            per_class.setdefault(str(class_id), {})["iou"] = value

    report = {
        "pq_all": pq.pq_all,
        "pq_things": pq.pq_things,
        "pq_stuff": pq.pq_stuff,
        "miou": iou.miou if iou is not None else None,
        "mean_ap": ap.mean_ap if ap is not None else None,
        "ap_per_threshold": (
            {f"{t:.2f}": v for t, v in sorted(ap.per_threshold.items())}
            if ap is not None
            else None
        ),
        "per_class": per_class,
    }
    if extra:
        report.update(extra)
    return report


def report_to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def write_report(path, report: dict) -> None:
    Path(path).write_text(report_to_json(report), encoding="utf-8")


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def format_report_table(report: dict) -> str:
    """Fixed-width summary plus a per-class table."""
    lines = []
    lines.append("metric        value")
    lines.append("------------  ----------")
    for key in ("pq_all", "pq_things", "pq_stuff", "miou", "mean_ap"):
        if key in report:
            lines.append(f"{key:<12}  {_fmt(report.get(key))}")
    per_class = report.get("per_class") or {}
    if per_class:
        lines.append("")
        lines.append("class      pq        sq        rq      tp    fp    fn")
        lines.append("-----  --------  --------  --------  ----  ----  ----")
        for class_id in sorted(per_class, key=int):
            row = per_class[class_id]
            if "pq" not in row:
                continue
            lines.append(
                f"{class_id:>5}  {row['pq']:8.6f}  {row['sq']:8.6f}  {row['rq']:8.6f}"
                f"  {row['tp']:>4}  {row['fp']:>4}  {row['fn']:>4}"
            )
    return "\n".join(lines) + "\n"
