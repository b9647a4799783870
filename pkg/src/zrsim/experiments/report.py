"""Deterministic report files (CSV tables or one JSON document)."""

from __future__ import annotations

import csv
import io
import json
import os

from ..core import ZRError
from .harness import Report

CHECK_COLUMNS = ["name", "value", "target", "tolerance", "kind", "passed", "detail"]


class IoFailure(ZRError):
    pass


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, list):
        return ";".join(str(_cell(x)) for x in v)
    return "" if v is None else v


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def to_json(report: Report) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=1) + "\n"


def from_json(text: str) -> Report:
    return Report.from_dict(json.loads(text))


def render(report: Report, fmt: str = "csv") -> dict:
    """File name -> text, without touching the disk."""
    if fmt == "json":
        return {"report.json": to_json(report)}
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    agg = [[k, report.aggregates[k]] for k in sorted(report.aggregates)]
    return {
        "rows.csv": _csv_text(report.columns, report.rows),
        "aggregates.csv": _csv_text(["name", "value"], agg),
        "checks.csv": _csv_text(CHECK_COLUMNS, [[c[k] for k in CHECK_COLUMNS] for c in report.checks]),
        "meta.json": json.dumps(report.meta, sort_keys=True, indent=1) + "\n",
    }


def emit(report: Report, out_dir, fmt: str = "csv") -> list:
    """Write the report under ``out_dir``; returns the written paths."""
    files = render(report, fmt)
    paths = []
    try:
        os.makedirs(out_dir, exist_ok=True)
        for name, text in files.items():
            path = os.path.join(out_dir, name)
            with open(path, "w", newline="", encoding="utf-8") as fh:
                fh.write(text)
            paths.append(path)
    except OSError as e:
        raise IoFailure(str(e)) from e
    return paths


def load_report(path) -> Report:
    try:
        with open(path, encoding="utf-8") as fh:
            return from_json(fh.read())
    except OSError as e:
        raise IoFailure(str(e)) from e
