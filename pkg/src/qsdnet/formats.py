"""CSV and JSON layouts for distributions, tables, curves, traces and records.

Floats are written with 9 significant digits so outputs diff cleanly across
platforms; parsing and re-serializing a file reproduces it byte for byte.
Outcome tables are the exception: parsing renormalizes each row, which can
move the last printed digit.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .discrimination import OutcomeTable
from .errors import ValidationError
from .experiment import EventRecord
from .network import SinkTable, TimeBinnedDistribution


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if x is None:
        return ""
    return f"{float(x):.9g}"


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def _rows(text: str) -> list[list[str]]:
    return [r for r in csv.reader(io.StringIO(text)) if r]


def write_text(path: Path | str, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# time-binned distributions


def distribution_to_csv(d: TimeBinnedDistribution) -> str:
    rows = [(k + 1, p5, p6) for k, (p5, p6) in enumerate(d.bins)]
    return _csv_text(("bin_index", "p_sink5", "p_sink6"), rows + [("residual", d.residual, "")])


def distribution_from_csv(text: str, first_step_discarded: bool = False) -> TimeBinnedDistribution:
    rows = _rows(text)
    if rows[0] != ["bin_index", "p_sink5", "p_sink6"] or rows[-1][0] != "residual":
        raise ValidationError("not a time-binned distribution CSV")
    bins = [(float(r[1]), float(r[2])) for r in rows[1:-1]]
    return TimeBinnedDistribution(np.array(bins), float(rows[-1][1]), first_step_discarded)


def distribution_to_json(d: TimeBinnedDistribution) -> str:
    return dump_json(d.to_dict())


def sink_table_to_csv(t: SinkTable) -> str:
    return _csv_text(("bin_index", "p_sink5", "p_sink6"), [(k, p[0], p[1]) for k, p in zip(t.bin_indices, t.probs)])


def sink_table_from_csv(text: str) -> SinkTable:
    rows = _rows(text)[1:]
    return SinkTable([int(r[0]) for r in rows], [(float(r[1]), float(r[2])) for r in rows])


# outcome tables and curves


def _outcome_name(o) -> str:
    return f"s{o[0]}_b{o[1]}"


def outcome_table_to_csv(t: OutcomeTable) -> str:
    header = ["hypothesis"] + [_outcome_name(o) for o in t.outcomes]
    return _csv_text(header, [[label, *row] for label, row in zip(t.labels, t.probs)])


def outcome_table_from_csv(text: str) -> OutcomeTable:
    rows = _rows(text)
    outcomes = []
    for name in rows[0][1:]:
        s, b = name.split("_")
        outcomes.append((int(s[1:]), int(b[1:])))
    probs = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    # 9-digit rounding can leave row sums off by ~1e-9
    probs /= probs.sum(axis=1, keepdims=True)
    return OutcomeTable(probs, tuple(outcomes), tuple(r[0] for r in rows[1:]))


def curve_to_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    return _csv_text(header, rows)


def read_csv(text: str) -> tuple[list[str], list[list[str]]]:
    rows = _rows(text)
    return rows[0], rows[1:]


def trace_to_csv(trace: Iterable[tuple[int, int, float]]) -> str:
    return _csv_text(("restart", "iteration", "objective"), trace)


# event records


def record_to_csv(rec: EventRecord, hide_label: bool = False) -> str:
    meta = {
        "duration": fmt(rec.duration),
        "raw": str(rec.raw).lower(),
        "averaged": str(rec.averaged).lower(),
        "seed": "" if rec.seed is None else str(rec.seed),
        "clamped": str(rec.clamped),
    }
    if not hide_label:
        meta["state_label"] = rec.state_label or ""
    head = "".join(f"# {k}: {v}\n" for k, v in meta.items())
    rows = [(sink, int(k), rec.counts[i, j]) for i, k in enumerate(rec.bin_indices) for j, sink in enumerate((5, 6))]
    return head + _csv_text(("sink", "bin", "count"), rows)


def record_from_csv(text: str) -> EventRecord:
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition(": ")
            meta[k] = v
        elif line:
            body.append(line)
    rows = _rows("\n".join(body))[1:]
    bins = sorted({int(r[1]) for r in rows})
    counts = np.zeros((len(bins), 2))
    for sink, b, c in rows:
        counts[bins.index(int(b)), (5, 6).index(int(sink))] = float(c)
    return EventRecord(
        counts,
        bins,
        float(meta["duration"]),
        raw=meta.get("raw", "true") == "true",
        averaged=meta.get("averaged", "false") == "true",
        seed=int(meta["seed"]) if meta.get("seed") else None,
        state_label=meta.get("state_label") or None,
        clamped=int(meta.get("clamped", 0)),
    )
