from __future__ import annotations

import json
import math
from fractions import Fraction

import numpy as np
import pytest

from yieldlab.io import Table, emit, normalised, read, render

ROWS = [
    {"maturity": 0.5, "price": 2.4999999999987654321, "ok": True, "label": "a"},
    {"maturity": 1, "price": np.float64(1 / 3), "ok": np.bool_(False), "label": None},
    {"maturity": Fraction(3, 2), "price": math.inf, "ok": True, "label": "c,d"},
]


def test_empty_report_writes_header_only(tmp_path):
    t = Table("empty", ("a", "b"), ())
    p = emit(t, tmp_path / "empty.csv")
    assert p.read_text() == "a,b\n"
    assert read(p).rows == ()
    doc = json.loads(emit(t, tmp_path / "empty.json").read_text())
    assert doc == {"fields": ["a", "b"], "name": "empty", "rows": []}


def test_json_round_trip(tmp_path):
    t = Table.from_records("quotes", ROWS)
    back = read(emit(t, tmp_path / "quotes.json"))
    assert back == normalised(t)


def test_csv_round_trip_and_row_count(tmp_path):
    t = Table.from_records("quotes", ROWS)
    p = emit(t, tmp_path / "quotes.csv")
    lines = p.read_text().splitlines()
    assert len(lines) == len(t) + 1
    back = read(p)
    assert len(back) == len(t)
    assert back == normalised(t, "quotes")


def test_twelve_significant_digits():
    text = render(Table.from_records("r", [{"x": 1 / 3, "y": 123456.789012345678}]), "csv")
    assert text.splitlines()[1] == "0.333333333333,123456.789012"


def test_json_keys_sorted_and_finite():
    text = render(Table.from_records("r", ROWS), "json")
    doc = json.loads(text)
    assert list(doc) == sorted(doc)
    assert all(list(r) == sorted(r) for r in doc["rows"])
    assert doc["rows"][2]["price"] is None
    assert "Infinity" not in text and "NaN" not in text


def test_field_order_is_stable():
    t = Table.from_records("r", [{"b": 1, "a": 2}, {"a": 3, "c": 4}])
    assert t.fields == ("b", "a", "c")
    assert render(t, "csv").splitlines() == ["b,a,c", "1,2,", ",3,4"]


def test_unknown_fields_rejected():
    with pytest.raises(ValueError):
        Table.from_records("r", [{"a": 1, "z": 2}], fields=("a",))


def test_objects_with_records_are_accepted(tmp_path):
    class Report:
        def to_records(self):
            return [{"k": 1}, {"k": 2}]

    p = emit(Report(), tmp_path / "report.csv")
    assert p.read_text() == "k\n1\n2\n"


def test_bad_format_and_values():
    with pytest.raises(ValueError):
        render([{"a": 1}], "xml")
    with pytest.raises(TypeError):
        render([{"a": object()}], "csv")


def test_emit_creates_directories(tmp_path):
    p = emit([{"a": 1}], tmp_path / "deep" / "nested" / "t.json")
    assert p.exists()
