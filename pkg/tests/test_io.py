import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gslf import io, plots


# csv cannot write NUL characters at all; none of our outputs contain them
CELLS = st.floats(allow_nan=False) | st.text(st.characters(blacklist_characters="\x00"), max_size=8) | st.integers()


@given(st.lists(st.lists(CELLS, min_size=2, max_size=2), max_size=5))
def test_csv_roundtrip(rows):
    text = io.csv_text(["a", "b"], rows)
    assert text.endswith("\r\n")
    import csv
    import io as stdio
    parsed = list(csv.reader(stdio.StringIO(text, newline="")))
    assert parsed[0] == ["a", "b"]
    assert parsed[1:] == [[io.fmt(v) for v in r] for r in rows]


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_format_roundtrips_exactly(v):
    assert float(io.fmt(v)) == v


def test_format_special_values():
    assert io.fmt(float("nan")) == "nan"
    assert io.fmt(float("inf")) == "inf"
    assert io.fmt(True) == "true"
    assert io.fmt(np.float64(0.1)) == "0.1"


def test_write_csv_is_atomic_and_crlf(tmp_path):
    p = io.write_csv(tmp_path / "sub" / "t.csv", ["x", "note"], [[1.5, "a,b"], [2, 'q"']])
    raw = p.read_bytes()
    assert raw == b'x,note\r\n1.5,"a,b"\r\n2,"q"""\r\n'
    assert not [f for f in p.parent.iterdir() if f.name != "t.csv"]
    header, rows = io.read_csv(p)
    assert header == ["x", "note"] and rows[0] == ["1.5", "a,b"]


def test_field_file_roundtrip(tmp_path):
    x = np.linspace(0, 1, 4)
    y = np.linspace(0, 2, 3)
    vals = np.random.default_rng(0).random((4, 3))
    p = io.write_field_csv(tmp_path / "f.csv", vals, x, y, {"seed": np.int64(3), "eps": None})
    v2, x2, y2, prov = io.read_field_csv(p)
    assert np.array_equal(v2, vals)
    assert np.allclose(x2, x) and np.allclose(y2, y)
    assert prov == {"eps": None, "seed": 3}
    with pytest.raises(ValueError):
        io.field_text(vals.T, x, y)
    (tmp_path / "bad.csv").write_text("a,b\n")
    with pytest.raises(ValueError):
        io.read_field_csv(tmp_path / "bad.csv")


def test_summary_line_sorted_single_line_valid_json():
    line = io.summary_line({"b": [1.0, float("nan")], "a": np.float64(2.0), "c": {"z": np.arange(2)}})
    assert "\n" not in line
    obj = json.loads(line)
    assert list(obj) == ["a", "b", "c"]
    assert obj["b"] == [1.0, "nan"]
    assert obj["c"] == {"z": [0, 1]}


def test_svg_outputs_parse_as_xml(tmp_path):
    x = 2.0 ** -np.arange(6)
    svgs = [plots.loglog_svg([plots.Series("a", x, x**0.5), plots.Series("b", x, x, dashed=True)], "t", "x", "y"),
            plots.line_plot_svg([plots.Series("c", np.linspace(0, 1, 5), np.linspace(-1, 3, 5))], "lin"),
            plots.heatmap_svg(np.random.default_rng(0).random((8, 6)), "field")]
    for s in svgs:
        root = ET.fromstring(s)
        assert root.tag.endswith("svg")
    p = plots.write_svg(tmp_path / "p.svg", svgs[0])
    ET.parse(p)


def test_svg_constant_series_does_not_break_axes():
    s = plots.line_plot_svg([plots.Series("flat", [0, 1, 2], [1.0, 1.0, 1.0])])
    ET.fromstring(s)
    assert '="nan' not in s and '"inf' not in s
