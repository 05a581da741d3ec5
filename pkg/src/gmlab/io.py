"""Atomic artifact writers.

Every file is written to a temporary sibling and renamed into place, so a
crash never leaves a partially written artifact behind.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def fmt(x) -> str:
    """Format a number with 12 significant digits, stable across runs."""
    if isinstance(x, bool):
        return str(x)
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def write_csv(path, header, rows) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return atomic_write_text(path, buf.getvalue())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):  # numpy scalars
        return obj.item()
    if isinstance(obj, float) and obj != obj:
        return None
    return obj


def write_json(path, payload) -> Path:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True, allow_nan=True)
    return atomic_write_text(path, text + "\n")


def write_columns(path, x, y) -> Path:
    """Write a whitespace-separated two-column data file."""
    if len(x) == 0 or len(x) != len(y):
        raise ValueError(f"cannot write {path}: empty or mismatched columns")
    lines = [f"{xi:.12g} {yi:.12g}" for xi, yi in zip(map(float, x), map(float, y))]
    return atomic_write_text(path, "\n".join(lines) + "\n")
