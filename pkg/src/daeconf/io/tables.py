"""CSV output with a fixed column order."""

from __future__ import annotations

import csv
from pathlib import Path


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(float(v))
    if isinstance(v, (tuple, list)):
        return " ".join(str(x) for x in v)
    if v is None:
        return ""
    return str(v)


def write_csv(path, columns: list[str], rows) -> Path:
    """Write ``rows`` (dicts or sequences) under a header row of ``columns``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            vals = [row[c] for c in columns] if isinstance(row, dict) else list(row)
            w.writerow([_cell(v) for v in vals])
    return path
