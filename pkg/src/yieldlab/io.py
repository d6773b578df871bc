"""Tabular artifact writers and readers (CSV and JSON)."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

SIG_DIGITS = 12
FORMATS = ("csv", "json")


@dataclass(frozen=True)
class Table:
    """Named rows with a fixed column order; the unit every writer consumes."""

    name: str
    fields: tuple[str, ...]
    rows: tuple[dict, ...]

    def __len__(self) -> int:
        return len(self.rows)

    @classmethod
    def from_records(cls, name: str, records: Iterable[dict], fields: Sequence[str] | None = None) -> Table:
        rows = tuple(dict(r) for r in records)
        if fields is None:
            seen: dict[str, None] = {}
            for r in rows:
                for k in r:
                    seen.setdefault(k, None)
            fields = tuple(seen)
        fields = tuple(fields)
        for i, r in enumerate(rows):
            extra = set(r) - set(fields)
            if extra:
                raise ValueError(f"row {i} of {name!r} has unknown fields {sorted(extra)}")
        return cls(name, fields, rows)


def as_table(report: Any, name: str = "report", fields: Sequence[str] | None = None) -> Table:
    if isinstance(report, Table):
        return report
    if hasattr(report, "to_records"):
        return Table.from_records(name, report.to_records(), fields)
    if isinstance(report, dict):
        return Table.from_records(name, [report], fields)
    return Table.from_records(name, report, fields)


def _scalar(v: Any) -> Any:
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating, Fraction)):
        f = float(v)
        if not math.isfinite(f):
            return None
        return float(format(f, f".{SIG_DIGITS}g"))
    if v is None or isinstance(v, (int, str)):
        return v
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _csv_cell(v: Any) -> str:
    v = _scalar(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, f".{SIG_DIGITS}g")
    return str(v)


def render(report: Any, fmt: str, name: str = "report", fields: Sequence[str] | None = None) -> str:
    table = as_table(report, name, fields)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(table.fields)
        for r in table.rows:
            w.writerow([_csv_cell(r.get(k)) for k in table.fields])
        return buf.getvalue()
    if fmt == "json":
        doc = {
            "name": table.name,
            "fields": list(table.fields),
            "rows": [{k: _scalar(r.get(k)) for k in table.fields} for r in table.rows],
        }
        return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"
    raise ValueError(f"format must be one of {FORMATS}")


def emit(report: Any, path: str | Path, fmt: str | None = None, name: str | None = None, fields=None) -> Path:
    """Write ``report`` to ``path``; the format defaults to the file suffix."""
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".")
    text = render(report, fmt, name or path.stem, fields)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def _parse_cell(s: str) -> Any:
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


def read(path: str | Path) -> Table:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    if path.suffix == ".json":
        doc = json.loads(text)
        return Table(doc["name"], tuple(doc["fields"]), tuple(doc["rows"]))
    rows = list(csv.reader(io.StringIO(text)))
    fields = tuple(rows[0]) if rows else ()
    body = tuple({k: _parse_cell(c) for k, c in zip(fields, r)} for r in rows[1:])
    return Table(path.stem, fields, body)


def normalised(report: Any, name: str = "report", fields=None) -> Table:
    """What a written-then-read table should equal: values rounded as the writers round them."""
    t = as_table(report, name, fields)
    return Table(t.name, t.fields, tuple({k: _scalar(r.get(k)) for k in t.fields} for r in t.rows))
