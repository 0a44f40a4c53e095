"""Sensor traces: fixed-interval measurement matrices with CSV round trip."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NetworkError


@dataclass(frozen=True)
class TrafficTrace:
    """Rectangular block of sensor measurements in fixed-length intervals.

    ``values`` has one row per interval and one column per sensor;
    ``start_seconds`` anchors the first row on the absolute time axis (phase
    alignment for the periodic detector model).
    """

    sensors: tuple[str, ...]
    interval_seconds: float
    values: np.ndarray
    start_seconds: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != len(self.sensors):
            raise NetworkError("trace matrix must be (intervals, sensors)")
        if not np.isfinite(v).all():
            raise NetworkError("trace contains missing or non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def n_intervals(self) -> int:
        return self.values.shape[0]

    @property
    def duration_seconds(self) -> float:
        return self.n_intervals * self.interval_seconds

    def column(self, sensor: str) -> np.ndarray:
        return self.values[:, self.sensors.index(sensor)]

    def slice_intervals(self, start: int, stop: int) -> "TrafficTrace":
        return TrafficTrace(
            self.sensors, self.interval_seconds,
            self.values[start:stop],
            self.start_seconds + start * self.interval_seconds,
        )

    def concat(self, other: "TrafficTrace") -> "TrafficTrace":
        if other.sensors != self.sensors or other.interval_seconds != self.interval_seconds:
            raise NetworkError("traces are not compatible")
        return TrafficTrace(
            self.sensors, self.interval_seconds,
            np.vstack([self.values, other.values]), self.start_seconds,
        )


def trace_to_csv(trace: TrafficTrace) -> str:
    lines = ["timestamp," + ",".join(trace.sensors)]
    for row_idx in range(trace.n_intervals):
        ts = trace.start_seconds + row_idx * trace.interval_seconds
        vals = ",".join(format(v, "g") for v in trace.values[row_idx])
        lines.append(f"{format(ts, 'g')},{vals}")
    return "\n".join(lines) + "\n"


def trace_from_csv(text: str) -> TrafficTrace:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("timestamp"):
        raise NetworkError("trace CSV must start with a 'timestamp,...' header")
    sensors = tuple(lines[0].split(",")[1:])
    stamps, rows = [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(sensors) + 1:
            raise NetworkError("trace CSV row width does not match header")
        stamps.append(float(parts[0]))
        rows.append([float(p) for p in parts[1:]])
    if not rows:
        raise NetworkError("trace CSV has no data rows")
    values = np.asarray(rows)
    if len(stamps) >= 2:
        steps = np.diff(stamps)
        interval = steps[0]
        if not np.allclose(steps, interval):
            raise NetworkError("trace timestamps are not evenly spaced")
    else:
        interval = 15.0
    return TrafficTrace(sensors, float(interval), values, start_seconds=stamps[0])
