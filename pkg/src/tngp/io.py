"""Deterministic CSV/JSON emission and the training-data reader."""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile

import numpy as np

from .errors import ConfigError


def fmt(value):
    """17 significant digits, enough to round-trip a double."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if isinstance(value, str):
        return value
    return format(float(value), ".17g")


def atomic_write(path, data):
    """Write bytes or text to ``path`` via a temporary file and rename."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_csv(comment, header, rows):
    lines = [f"# {comment}", ",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_csv(path, comment, header, rows):
    atomic_write(path, render_csv(comment, header, rows))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload):
    text = json.dumps(_clean(payload), sort_keys=True, indent=2, allow_nan=False)
    atomic_write(path, text + "\n")


def read_csv(path):
    """Read a comment-tolerant CSV with a header row.

    Returns the header and a float array of rows.  Malformed rows raise
    :class:`ConfigError` naming the file line.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    header, rows = None, []
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (row[0].lstrip().startswith("#")):
                continue
            if header is None:
                header = [c.strip() for c in row]
                continue
            if len(row) != len(header):
                raise ConfigError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: non-numeric field in {row}") from None
    if header is None:
        raise ConfigError(f"{path}: missing header row")
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def read_training_data(path, input_length):
    """Coordinates and targets from a CSV whose target column is ``y``."""
    header, data = read_csv(path)
    if "y" not in header:
        raise ConfigError(f"{path}: header needs a 'y' target column, got {header}")
    target = header.index("y")
    coords = [i for i in range(len(header)) if i != target]
    if len(coords) != input_length:
        raise ConfigError(
            f"{path}: {len(coords)} coordinate columns but the model takes {input_length}"
        )
    if data.shape[0] == 0:
        raise ConfigError(f"{path}: no data rows")
    return [row for row in data[:, coords]], data[:, target]
