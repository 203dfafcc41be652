"""Deterministic result files: CSV tables, JSON records and a hashed manifest."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .experiments import Bundle

__all__ = ["emit_results", "to_jsonable"]


def _fmt(x: float) -> str:
    return repr(float(x)) if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become ``null``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def _csv_text(columns, data) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in data:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


def emit_results(bundle: Bundle, out_dir: str | Path, fmt: str = "csv") -> dict:
    """Write the bundle and return the manifest.

    ``fmt="csv"`` writes each table as CSV (units in the column names) and
    records/scalars as JSON; ``fmt="structured"`` puts tables into
    ``tables.json`` as well. ``manifest.json`` lists every file with its
    SHA-256 so reruns can be compared byte for byte.
    """
    if fmt not in ("csv", "structured"):
        raise ValueError(f"unknown format {fmt!r}")
    if not bundle.tables and not bundle.records and not bundle.scalars:
        raise ValueError("empty result bundle")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    if fmt == "csv":
        for name, t in sorted(bundle.tables.items()):
            files[f"{name}.csv"] = _csv_text(t.columns, t.data)
    else:
        files["tables.json"] = _json_text(
            {name: {"columns": list(t.columns), "rows": t.data.tolist()} for name, t in bundle.tables.items()}
        )
    for name, rec in sorted(bundle.records.items()):
        files[f"{name}.json"] = _json_text(rec)
    files["scalars.json"] = _json_text(bundle.scalars)
    manifest = {"experiment": bundle.experiment, "files": {}}
    for name, text in sorted(files.items()):
        data = text.encode("utf-8")
        (out / name).write_bytes(data)
        manifest["files"][name] = hashlib.sha256(data).hexdigest()
    (out / "manifest.json").write_text(_json_text(manifest), encoding="utf-8")
    return manifest
