"""Deterministic CSV and JSON writers for experiment artifacts.

CSV files follow RFC 4180: comma separators, CRLF record ends, a header
row, and double-quote escaping.  JSON is emitted by a small canonical
writer so that every float carries 17 significant digits (enough to
round-trip any double bit for bit) and key order is exactly insertion
order.  Rerunning a scenario therefore reproduces its files byte for byte.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

FLOAT_FORMAT = ".17g"


def format_float(value: float) -> str:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"cannot serialize non-finite float {value!r}")
    return format(value, FLOAT_FORMAT)


def format_cell(value) -> str:
    """One CSV cell: floats at full precision, everything else as text."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n",
                            quoting=csv.QUOTE_MINIMAL)
        writer.writerow([str(name) for name in header])
        for row in rows:
            writer.writerow([format_cell(cell) for cell in row])
    return path


def _dumps(node, indent: int, level: int) -> str:
    pad = " " * (indent * level)
    inner = " " * (indent * (level + 1))
    if isinstance(node, dict):
        if not node:
            return "{}"
        parts = []
        for key, value in node.items():
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be str, got {key!r}")
            parts.append(f"{inner}{json.dumps(key)}: "
                         f"{_dumps(value, indent, level + 1)}")
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    if isinstance(node, (list, tuple)):
        if not len(node):
            return "[]"
        parts = [f"{inner}{_dumps(item, indent, level + 1)}" for item in node]
        return "[\n" + ",\n".join(parts) + "\n" + pad + "]"
    if isinstance(node, bool) or isinstance(node, np.bool_):
        return "true" if node else "false"
    if isinstance(node, (int, np.integer)):
        return str(int(node))
    if isinstance(node, (float, np.floating)):
        return format_float(node)
    if isinstance(node, str):
        return json.dumps(node)
    if node is None:
        return "null"
    if isinstance(node, np.ndarray):
        return _dumps(node.tolist(), indent, level)
    raise TypeError(f"cannot serialize {type(node).__name__} to JSON")


def dumps_json(data, indent: int = 2) -> str:
    return _dumps(data, indent, 0) + "\n"


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = dumps_json(data)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
    return path


def read_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
