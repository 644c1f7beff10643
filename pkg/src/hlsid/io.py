"""File formats: event CSVs, curve CSVs, JSON reports and configs."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError, MalformedInput, NonMonotone
from .simulate import EventSeries

EVENT_HEADER = "t"


def read_events(path, horizon: float | None = None) -> EventSeries:
    """Read a single-column ``t`` CSV.

    ``horizon`` defaults to the last event time, which is only valid for a
    non-empty file.
    """
    path = Path(path)
    times = []
    with path.open(newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or [h.strip() for h in header] != [EVENT_HEADER]:
            raise MalformedInput(f"expected header '{EVENT_HEADER}'", 1)
        for line, row in enumerate(rows, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 1:
                raise MalformedInput(f"expected one column, got {len(row)}", line)
            try:
                v = float(row[0])
            except ValueError:
                raise MalformedInput(f"not a number: {row[0]!r}", line) from None
            if not math.isfinite(v):
                raise MalformedInput(f"non-finite time {row[0]!r}", line)
            if times and v <= times[-1][0]:
                raise NonMonotone(len(times), line)
            times.append((v, line))
    values = np.array([v for v, _ in times], dtype=float)
    if horizon is None:
        if not values.size:
            raise ConfigError("an empty event file needs an explicit horizon")
        horizon = float(values[-1])
    if values.size and values[0] <= 0:
        raise MalformedInput("event times must be positive", times[0][1])
    if values.size and values[-1] > horizon:
        bad = int(np.argmax(values > horizon))
        raise MalformedInput(f"event time beyond horizon {horizon}", times[bad][1])
    return EventSeries(values, horizon)


def write_events(events: EventSeries, path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(EVENT_HEADER + "\n")
        for t in events.times:
            fh.write(f"{t:.17g}\n")


def write_curves(path, t, values) -> None:
    """CSV with columns ``t, value_1..value_P``; ``values`` has shape ``(P, len(t))``."""
    values = np.atleast_2d(values)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"value_{i + 1}" for i in range(values.shape[0])])
        for k, tk in enumerate(t):
            w.writerow([f"{tk:.17g}"] + [f"{v:.17g}" for v in values[:, k]])


def _jsonable(obj):
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def dumps_report(report) -> str:
    return json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"


def write_report(report, path) -> None:
    Path(path).write_text(dumps_report(report))


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"invalid JSON: {exc.msg}", exc.lineno) from None
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg
