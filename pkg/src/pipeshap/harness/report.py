"""CSV and JSON writers. Output depends only on the values passed in."""

from __future__ import annotations

import csv
import io
import json
import sys
from pathlib import Path

from .. import __version__
from ..errors import ConfigError
from ..provenance import TrackedDataset
from ..shapley import ShapleyReport
from .benchmark import BenchmarkReport
from .repair import CheckpointReport

IMPORTANCE_COLUMNS = ("source_id", "variable", "shapley_value", "rank")
SIMULATION_COLUMNS = ("checkpoint_fraction", "metric_median", "metric_p10", "metric_p90", "importance_seconds")
BENCHMARK_COLUMNS = ("n_train", "n_validation", "seconds", "slope")


def _num(x):
    # repr round-trips a float exactly; None becomes an empty cell
    return "" if x is None else repr(float(x))


def importance_rows(report: ShapleyReport, d: TrackedDataset) -> list[dict]:
    return [{"source_id": d.source_of(var), "variable": var, "shapley_value": value, "rank": r + 1}
            for r, (var, value) in enumerate(report.ascending())]


def simulation_rows(reports: list[CheckpointReport]) -> list[dict]:
    return [{"checkpoint_fraction": c.fraction, "metric_median": c.metric_median, "metric_p10": c.metric_p10,
             "metric_p90": c.metric_p90, "importance_seconds": c.importance_seconds} for c in reports]


def benchmark_rows(report: BenchmarkReport) -> list[dict]:
    return [{"n_train": r.n_train, "n_validation": r.n_validation, "seconds": r.seconds,
             "slope": report.slopes.get(r.n_validation)} for r in report.rows]


def to_csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_num(row[c]) if isinstance(row[c], float) or row[c] is None else row[c] for c in columns])
    return buf.getvalue()


def to_json(rows: list[dict], metadata: dict) -> str:
    doc = {"metadata": {**metadata, "version": __version__}, "rows": rows}
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=True) + "\n"


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror}") from None


def emit_report(rows: list[dict], columns, metadata: dict, out: str | None, fmt: str = "csv") -> list[Path]:
    """Write rows as CSV, JSON or both; with no ``out`` path, print to stdout.

    ``format=both`` writes ``<out>.csv`` and ``<out>.json``; otherwise ``out``
    is used as given.
    """
    texts = {}
    if fmt in ("csv", "both"):
        texts["csv"] = to_csv(rows, columns)
    if fmt in ("json", "both"):
        texts["json"] = to_json(rows, metadata)
    if not texts:
        raise ConfigError(f"format must be csv, json or both, got {fmt!r}")
    if out is None:
        for text in texts.values():
            sys.stdout.write(text)
        return []
    base = Path(out)
    written = []
    for ext, text in texts.items():
        path = base.with_suffix("." + ext) if fmt == "both" else base
        _write(path, text)
        written.append(path)
    return written
