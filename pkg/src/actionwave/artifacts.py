"""Deterministic artifact writers: canonical JSON and fixed-format CSV.

Identical run configurations must produce bit-identical artifacts, so all
floats are written with repr-exact round-trip formatting, keys are sorted,
iteration orders are fixed, and no wall-clock content enters any file
(timestamps appear only in directory names).
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

__all__ = ["canon_json", "write_json", "write_csv", "make_run_dir", "read_csv_columns"]

FLOAT_FMT = "%.17g"


def _sanitize(obj):
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if np.isnan(v) else v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canon_json(obj) -> str:
    return json.dumps(_sanitize(obj), sort_keys=True, indent=1,
                      separators=(",", ": ")) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(canon_json(obj))


def write_csv(path, columns: dict, trailing_comments=()) -> None:
    """Write named columns (equal-length 1D arrays) as CSV with %.17g floats.

    trailing_comments lines are appended verbatim prefixed with '# '.
    """
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    n = arrays[0].shape[0]
    lines = [",".join(names)]
    for i in range(n):
        cells = []
        for a in arrays:
            v = a[i]
            if isinstance(v, (np.integer, int)):
                cells.append(str(int(v)))
            else:
                v = float(v)
                cells.append("nan" if np.isnan(v) else FLOAT_FMT % v)
        lines.append(",".join(cells))
    for c in trailing_comments:
        lines.append("# " + c)
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv_columns(path) -> dict:
    """Read a CSV written by write_csv back into named float arrays."""
    rows = []
    header = None
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        if header is None:
            header = line.split(",")
            continue
        rows.append([float(c) for c in line.split(",")])
    data = np.asarray(rows) if rows else np.empty((0, len(header or [])))
    return {name: data[:, i] for i, name in enumerate(header or [])}


def make_run_dir(base, label: str) -> Path:
    """Create base/<label>-<timestamp>[-<seq>] and repoint base/latest at it.

    The wall clock appears only in the directory name, never in contents.
    """
    import time
    base = Path(base)
    base.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    run_dir = base / f"{label}-{stamp}"
    seq = 0
    while run_dir.exists():
        seq += 1
        run_dir = base / f"{label}-{stamp}-{seq}"
    run_dir.mkdir()
    latest = base / "latest"
    if latest.is_symlink() or latest.exists():
        latest.unlink()
    try:
        os.symlink(run_dir.name, latest)
    except OSError:
        (base / "latest.txt").write_text(run_dir.name + "\n")
    return run_dir
