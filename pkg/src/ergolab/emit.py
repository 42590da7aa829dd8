"""Report serialization: versioned JSON and flat CSV tables."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1


@dataclass
class Report:
    """What a CLI experiment produces.

    ``body`` is the nested JSON payload; ``columns``/``rows`` is the flat
    table written in CSV mode. ``ok`` is False when a checked inequality or
    certification fails.
    """

    command: str
    config: dict
    body: dict
    columns: list
    rows: list = field(default_factory=list)
    ok: bool = True


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def to_json(report: Report) -> str:
    doc = {
        "schema": SCHEMA_VERSION,
        "command": report.command,
        "config": report.config,
        "ok": report.ok,
    }
    doc.update(report.body)
    return json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n"


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def to_csv(report: Report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(report.columns)
    for row in report.rows:
        w.writerow([_cell(row.get(c)) for c in report.columns])
    return buf.getvalue()


def emit(report: Report, fmt: str = "json", path=None) -> str:
    """Render the report; write it to ``path`` if given. Returns the text."""
    if fmt == "json":
        text = to_json(report)
    elif fmt == "csv":
        text = to_csv(report)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None and str(path) != "-":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def _parse_cell(s: str):
    if s == "":
        return None
    if s in ("true", "false"):
        return s == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_csv(text: str) -> list:
    """Parse CSV text written by :func:`to_csv` back into typed row dicts."""
    reader = csv.DictReader(io.StringIO(text))
    return [{k: _parse_cell(v) for k, v in row.items()} for row in reader]
