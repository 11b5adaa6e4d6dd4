"""CSV/JSON result files with embedded run metadata.

The CSV is the primary, plot-ready output: comment lines carry the
canonical config echo, the seed, and the package version, so re-running
the embedded config reproduces the file byte for byte. Wall-clock time
and thread count are volatile, so they live only in the JSON mirror.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

VERSION = "0.1.0"


def format_cell(v) -> str:
    """Shortest round-trip text for one cell; floats keep full precision."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    s = str(v)
    if "," in s or "\n" in s or "#" in s:
        raise ValueError(f"cell value {s!r} would corrupt the CSV")
    return s


def config_echo(config: dict) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def write_report(
    path,
    columns,
    rows,
    config: dict,
    wallclock_s: float | None = None,
    threads: int | None = None,
) -> Path:
    """Write `path` (CSV) and its JSON mirror; returns the CSV path."""
    path = Path(path)
    columns = list(columns)
    table = [[format_cell(v) for v in row] for row in rows]
    for row in table:
        if len(row) != len(columns):
            raise ValueError("row width does not match the column list")
    lines = [
        f"# sipsim {VERSION}",
        f"# config: {config_echo(config)}",
        f"# seed: {config.get('seed', '')}",
        ",".join(columns),
    ]
    lines.extend(",".join(row) for row in table)
    path.write_text("\n".join(lines) + "\n")
    mirror = {
        "version": VERSION,
        "config": config,
        "columns": columns,
        "rows": table,
    }
    if wallclock_s is not None:
        mirror["wallclock_s"] = wallclock_s
    if threads is not None:
        mirror["threads"] = threads
    path.with_suffix(".json").write_text(
        json.dumps(mirror, sort_keys=True, indent=2) + "\n"
    )
    return path


def read_report(path):
    """Parse a report CSV back into (meta, columns, rows of strings)."""
    meta = {}
    columns = None
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                key, _, val = body.partition(":")
                meta[key.strip()] = val.strip()
            continue
        if not line:
            continue
        if columns is None:
            columns = line.split(",")
        else:
            rows.append(line.split(","))
    if columns is None:
        raise ValueError(f"{path} holds no table")
    return meta, columns, rows
