"""Deterministic CSV for training metrics and evaluation tables.

Floats are written with repr, which round-trips doubles exactly, so a rerun
with the same seed produces a byte-identical file. Column order comes from
the first row and every later row must carry the same keys.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .errors import ModelError


def format_value(x) -> str:
    if hasattr(x, "item"):  # numpy scalar -> python scalar
        x = x.item()
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path, rows, columns=None) -> None:
    """Write dict rows; newline and float formatting are pinned down so the
    same rows always produce the same bytes."""
    rows = list(rows)
    if columns is None:
        if not rows:
            raise ModelError("cannot infer columns from an empty table")
        columns = list(rows[0].keys())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(columns)]
    for row in rows:
        if set(row.keys()) != set(columns):
            raise ModelError("metrics row keys changed mid-table")
        lines.append(",".join(format_value(row[c]) for c in columns))
    path.write_text("\n".join(lines) + "\n")


def read_csv(path) -> list:
    """Read back rows as dicts, parsing numeric fields."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row = {}
            for key, val in raw.items():
                try:
                    row[key] = int(val)
                except (TypeError, ValueError):
                    try:
                        row[key] = float(val)
                    except (TypeError, ValueError):
                        row[key] = val
            rows.append(row)
    return rows
