"""Result rows and their CSV / JSON serialization."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path

FIELDS = ("experiment", "beta", "h", "nu1", "nu2", "metric", "value", "runtime_ms", "seed")
METRICS = ("mu", "omega", "rho_lfa", "rho_hat", "iters")


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    beta: float | None
    h: float | None
    nu1: int | None
    nu2: int | None
    metric: str
    value: float | int | None
    runtime_ms: float | None = None
    seed: int | None = None

    def sort_key(self):
        def k(v):
            return (v is None, v if v is not None else 0)
        return (self.experiment, k(self.beta), k(self.h), k(self.nu1), k(self.nu2),
                METRICS.index(self.metric) if self.metric in METRICS else len(METRICS), self.metric)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIELDS)
    for r in rows:
        w.writerow([_fmt(getattr(r, f)) for f in FIELDS])
    return buf.getvalue()


def to_json(rows: list[ResultRow]) -> str:
    return json.dumps([{f: asdict(r)[f] for f in FIELDS} for r in rows], indent=2) + "\n"


def emit(rows: list[ResultRow], fmt: str = "csv", path: str | Path | None = None) -> str:
    """Serialize ``rows`` and write them to ``path`` (``None`` or ``-`` returns only)."""
    if not rows:
        raise ValueError("no rows to emit")
    if fmt == "csv":
        text = to_csv(rows)
    elif fmt == "json":
        text = to_json(rows)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None and str(path) != "-":
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)
    return text
