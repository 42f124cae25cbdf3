"""Benchmark-format ingestion and grounding-accuracy reporting.

Records follow the core dataset format plus optional ``category`` and
``elem_type`` ("text" or "icon") tags, mirroring how grounding benchmarks
break results down per application. A prediction scores a hit iff the
point lies inside the ground-truth box; missing predictions score misses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

from .core import DatasetError, Point, Sample, iter_records, point_in_bbox, record_to_sample


@dataclass(frozen=True)
class BenchRecord:
    sample: Sample
    category: str | None = None
    elem_type: str | None = None


def load_benchmark(path: str) -> list[BenchRecord]:
    """Read benchmark records, aborting with a line-numbered error on bad rows."""
    records = []
    for lineno, raw in iter_records(path):
        sample = record_to_sample(raw, lineno)
        category = raw.get("category")
        elem_type = raw.get("elem_type")
        for name, value in (("category", category), ("elem_type", elem_type)):
            if value is not None and not isinstance(value, str):
                raise DatasetError(f"line {lineno}: {name} must be a string when present")
        records.append(BenchRecord(sample=sample, category=category, elem_type=elem_type))
    return records


def _bucket() -> dict:
    return {"hits": 0, "total": 0}


def _tally(bucket: dict, hit: bool) -> None:
    bucket["total"] += 1
    bucket["hits"] += int(hit)


def _finish(bucket: dict) -> dict:
    bucket["accuracy"] = bucket["hits"] / bucket["total"] if bucket["total"] else 0.0
    return bucket


def score_predictions(
    records: Sequence[BenchRecord],
    predictions: Mapping[str, Point | None],
) -> dict:
    """Overall, per-category (with text/icon sub-splits), and per-elem-type accuracy.

    Raw hit/total counts ride along with every accuracy so bucket totals
    provably aggregate to the overall numbers.
    """
    overall = _bucket()
    by_category: dict[str, dict] = {}
    by_elem: dict[str, dict] = {}
    for rec in records:
        point = predictions.get(rec.sample.id)
        hit = point is not None and point_in_bbox(point, rec.sample.gt_bbox)
        cat = rec.category if rec.category is not None else "uncategorized"
        elem = rec.elem_type if rec.elem_type is not None else "untyped"
        cat_bucket = by_category.setdefault(cat, {"all": _bucket()})
        _tally(overall, hit)
        _tally(cat_bucket["all"], hit)
        _tally(cat_bucket.setdefault(elem, _bucket()), hit)
        _tally(by_elem.setdefault(elem, _bucket()), hit)
    for cat_bucket in by_category.values():
        for sub in cat_bucket.values():
            _finish(sub)
    return {
        "overall": _finish(overall),
        "by_category": dict(sorted(by_category.items())),
        "by_elem_type": {k: _finish(v) for k, v in sorted(by_elem.items())},
    }


def predictions_from_policy(records: Sequence[BenchRecord], policy) -> dict[str, Point]:
    """Greedy predictions from a toy policy, keyed by sample id."""
    from .synthgym import greedy_point

    return {rec.sample.id: greedy_point(policy, rec.sample) for rec in records}


def _cell(cat_bucket: dict, key: str) -> str:
    sub = cat_bucket.get(key)
    if not sub or sub["total"] == 0:
        return "-"
    return f"{sub['accuracy'] * 100:.1f}"


def format_report_table(report: dict) -> str:
    """Aligned text table with a Text / Icon / Avg. breakdown per category."""
    rows = [("Category", "Text", "Icon", "Avg.")]
    for cat, cat_bucket in report["by_category"].items():
        rows.append((cat, _cell(cat_bucket, "text"), _cell(cat_bucket, "icon"), _cell(cat_bucket, "all")))
    by_elem = report["by_elem_type"]
    overall_row = (
        "Overall",
        _cell({"text": by_elem.get("text")}, "text") if by_elem.get("text") else "-",
        _cell({"icon": by_elem.get("icon")}, "icon") if by_elem.get("icon") else "-",
        f"{report['overall']['accuracy'] * 100:.1f}",
    )
    rows.append(overall_row)
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    lines = []
    for idx, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * widths[i] for i in range(4)))
    return "\n".join(lines)


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
