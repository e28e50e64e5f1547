from __future__ import annotations

import csv
from pathlib import Path

METRICS_COLUMNS = ("iteration", "seed", "episodes", "mean", "stderr", "iqm")
CORRUPTION_COLUMNS = ("method", "c", "variance", "lof_percent", "threshold", "seed")


def _write(path, columns, rows, append: bool):
    path = Path(path)
    new = not (append and path.exists())
    with path.open("a" if append else "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        if new:
            w.writeheader()
        for row in rows:
            w.writerow({c: _fmt(row[c]) for c in columns})


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else v


def write_metrics(path, reports, append: bool = False):
    _write(path, METRICS_COLUMNS, [r.as_dict() for r in reports], append)


def write_corruption_diag(path, rows, append: bool = False):
    _write(path, CORRUPTION_COLUMNS, rows, append)


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
