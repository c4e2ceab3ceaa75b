"""CSV, field and JSON output with deterministic formatting and atomic writes."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

FIELD_MAGIC = "# gslf-field v1"


def fmt(v) -> str:
    """Shortest round-trip text for numbers ('.' decimal, no locale)."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if v is None:
        return ""
    return str(v)


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> Path:
    """RFC-4180 CSV: CRLF line ends, a header row, quoting only where needed."""
    return atomic_write(path, csv_text(header, rows))


def read_csv(path) -> tuple:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def field_text(values, x, y, provenance: dict = None) -> str:
    """Grid values with a two-line '#' header: geometry, then provenance as JSON."""
    values = np.asarray(values, dtype=float)
    if values.shape != (len(x), len(y)):
        raise ValueError("values shape does not match the grid")
    geom = {"nx": len(x), "ny": len(y), "x0": float(x[0]), "x1": float(x[-1]),
            "y0": float(y[0]), "y1": float(y[-1])}
    lines = [f"{FIELD_MAGIC} " + " ".join(f"{k}={fmt(v)}" for k, v in geom.items()),
             "# " + json.dumps(provenance or {}, sort_keys=True, default=_json_default)]
    # row-major: row i holds values[i, :] at x[i]
    for row in values:
        lines.append(",".join(fmt(v) for v in row))
    return "\r\n".join(lines) + "\r\n"


def write_field_csv(path, values, x, y, provenance: dict = None) -> Path:
    return atomic_write(path, field_text(values, x, y, provenance))


def read_field_csv(path) -> tuple:
    """Return ``(values, x, y, provenance)``; the grid is rebuilt from the header."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read().splitlines()
    if len(text) < 2 or not text[0].startswith(FIELD_MAGIC):
        raise ValueError(f"{path}: not a field file")
    geom = dict(kv.split("=") for kv in text[0][len(FIELD_MAGIC):].split())
    prov = json.loads(text[1][2:])
    vals = np.array([[float(v) for v in line.split(",")] for line in text[2:] if line])
    nx, ny = int(geom["nx"]), int(geom["ny"])
    if vals.shape != (nx, ny):
        raise ValueError(f"{path}: expected {nx}x{ny} values, found {vals.shape}")
    x = np.linspace(float(geom["x0"]), float(geom["x1"]), nx)
    y = np.linspace(float(geom["y0"]), float(geom["y1"]), ny)
    return vals, x, y, prov


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _clean(o):
    # JSON has no NaN/inf; map them to strings so output stays valid
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if math.isfinite(f) else fmt(f)
    return o


def summary_line(obj: dict) -> str:
    """One-line JSON with sorted keys."""
    return json.dumps(_clean(obj), sort_keys=True, default=_json_default, separators=(", ", ": "))
