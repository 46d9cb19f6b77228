"""Per-hour context rows and their 40-slot numeric encoding.

Layout of an encoded row::

    [0:24)   hour-of-day one-hot
    [24:31)  day-of-week one-hot (Monday = 0)
    [31]     holiday flag (0/1)
    [32:37)  weather one-hot (clear, cloudy, rainy, snowy, mist)
    [37]     temperature, standardized
    [38]     inflow, standardized
    [39]     outflow, standardized
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from cvit.grid import GridSpec, NormStats

log = logging.getLogger(__name__)

WEATHER = ("clear", "cloudy", "rainy", "snowy", "mist")
HOUR_SLOT, DOW_SLOT, HOLIDAY_SLOT, WEATHER_SLOT = 0, 24, 31, 32
TEMP_SLOT, INFLOW_SLOT, OUTFLOW_SLOT = 37, 38, 39
CONTEXT_DIM = 40


@dataclass(frozen=True)
class ContextRow:
    hour_of_day: int
    day_of_week: int
    is_holiday: bool
    weather_condition: str
    temperature: float
    inflow: float = 0.0
    outflow: float = 0.0
    hour_index: int = -1

    def __post_init__(self):
        if not 0 <= self.hour_of_day <= 23:
            raise ValueError(f"hour_of_day out of range: {self.hour_of_day}")
        if not 0 <= self.day_of_week <= 6:
            raise ValueError(f"day_of_week out of range: {self.day_of_week}")
        if self.weather_condition not in WEATHER:
            raise ValueError(f"unknown weather condition {self.weather_condition!r}")
        if not math.isfinite(self.temperature):
            raise ValueError("temperature must be finite")


def encode_context(row: ContextRow, stats: NormStats) -> np.ndarray:
    v = np.zeros(CONTEXT_DIM)
    v[HOUR_SLOT + row.hour_of_day] = 1.0
    v[DOW_SLOT + row.day_of_week] = 1.0
    v[HOLIDAY_SLOT] = 1.0 if row.is_holiday else 0.0
    v[WEATHER_SLOT + WEATHER.index(row.weather_condition)] = 1.0
    for slot, name in ((TEMP_SLOT, "temperature"), (INFLOW_SLOT, "inflow"), (OUTFLOW_SLOT, "outflow")):
        mu, sd = stats.features.get(name, (0.0, 1.0))
        v[slot] = (getattr(row, name) - mu) / sd
    return v


def encode_rows(rows: Sequence[ContextRow], stats: NormStats) -> np.ndarray:
    """(len(rows), 40) matrix."""
    return np.stack([encode_context(r, stats) for r in rows])


# ---------------------------------------------------------------- trip flows


@dataclass
class FlowSeries:
    inflow: np.ndarray  # dropoffs in bbox per hour
    outflow: np.ndarray  # pickups in bbox per hour
    skipped: int = 0


def flows_from_trips(trips: Sequence[dict], grid: GridSpec, hours: range, start: datetime) -> FlowSeries:
    """City-wide hourly inflow/outflow from pickup/dropoff rows.

    Each row is a mapping with ``pickup_ts, pickup_lat, pickup_lon,
    dropoff_ts, dropoff_lat, dropoff_lon``.  Rows that fail to parse are
    skipped and counted.
    """
    from cvit.grid import hour_index, parse_timestamp

    inflow = np.zeros(len(hours))
    outflow = np.zeros(len(hours))
    skipped = 0
    for row in trips:
        try:
            p_ts = parse_timestamp(row["pickup_ts"])
            d_ts = parse_timestamp(row["dropoff_ts"])
            p_lat, p_lon = float(row["pickup_lat"]), float(row["pickup_lon"])
            d_lat, d_lon = float(row["dropoff_lat"]), float(row["dropoff_lon"])
        except (KeyError, TypeError, ValueError):
            skipped += 1
            continue
        h = hour_index(p_ts, start)
        if h in hours and grid.contains(p_lat, p_lon):
            outflow[h - hours.start] += 1
        h = hour_index(d_ts, start)
        if h in hours and grid.contains(d_lat, d_lon):
            inflow[h - hours.start] += 1
    if skipped:
        log.warning("flows_from_trips: skipped %d malformed rows", skipped)
    return FlowSeries(inflow, outflow, skipped)


def read_trips(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes"):
        return True
    if t in ("0", "false", "no", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def read_context_rows(
    path: str | Path,
    start: datetime,
    hours: range,
    flows: FlowSeries | None = None,
) -> list[ContextRow]:
    """Read ``timestamp,is_holiday,weather_condition,temperature`` into one row per hour.

    Every hour in ``hours`` must be present; hour-of-day and day-of-week are
    derived from the timestamp.
    """
    from cvit.grid import hour_index, parse_timestamp

    by_hour: dict[int, dict] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            by_hour[hour_index(parse_timestamp(row["timestamp"]), start)] = row
    missing = [h for h in hours if h not in by_hour]
    if missing:
        raise ValueError(f"context CSV is missing {len(missing)} hours (first: {missing[0]})")
    out = []
    for k, h in enumerate(hours):
        raw = by_hour[h]
        ts = start + timedelta(hours=h)
        out.append(
            ContextRow(
                hour_of_day=ts.hour,
                day_of_week=ts.weekday(),
                is_holiday=_parse_bool(raw["is_holiday"]),
                weather_condition=raw["weather_condition"].strip(),
                temperature=float(raw["temperature"]),
                inflow=float(flows.inflow[k]) if flows is not None else 0.0,
                outflow=float(flows.outflow[k]) if flows is not None else 0.0,
                hour_index=h,
            )
        )
    return out
