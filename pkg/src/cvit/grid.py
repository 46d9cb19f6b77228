"""Accident records -> hourly risk frames -> 7-channel history samples."""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from cvit.context import ContextRow

log = logging.getLogger(__name__)

HOURS_PER_WEEK = 168
# weekly lags (same hour-of-day) oldest-first, then the last three hours oldest-first
DEFAULT_LAGS: tuple[int, ...] = (672, 504, 336, 168, 3, 2, 1)
NORM_STD_FLOOR = 1e-8


class Severity(str, enum.Enum):
    MINOR = "minor"
    INJURED = "injured"
    FATAL = "fatal"


_RISK = {Severity.MINOR: 1.0, Severity.INJURED: 2.0, Severity.FATAL: 3.0}


def risk_score(severity: Severity | str) -> float:
    return _RISK[Severity(severity)]


def parse_timestamp(text: str) -> datetime:
    """ISO-8601 -> aware UTC datetime (naive input is taken as UTC)."""
    ts = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def hour_index(ts: datetime, start: datetime) -> int:
    return math.floor((ts - start).total_seconds() / 3600.0)


@dataclass(frozen=True)
class AccidentRecord:
    timestamp: datetime
    latitude: float
    longitude: float
    severity: Severity

    def __post_init__(self):
        if not (math.isfinite(self.latitude) and math.isfinite(self.longitude)):
            raise ValueError(f"non-finite coordinates: {self.latitude}, {self.longitude}")
        object.__setattr__(self, "severity", Severity(self.severity))


@dataclass(frozen=True)
class GridSpec:
    min_lat: float
    max_lat: float
    min_lon: float
    max_lon: float
    rows: int = 20
    cols: int = 20

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"grid needs at least one row and column, got {self.rows}x{self.cols}")
        if not (self.max_lat > self.min_lat and self.max_lon > self.min_lon):
            raise ValueError("degenerate bounding box")

    def cell_of(self, lat: float, lon: float) -> tuple[int, int] | None:
        """(row, col) of the cell holding the point, or None outside the bbox.

        Rows grow with latitude, columns with longitude.  Cells are half-open,
        so a point on an interior edge lands in the higher-index cell.
        """
        if not (self.min_lat <= lat < self.max_lat and self.min_lon <= lon < self.max_lon):
            return None
        r = int((lat - self.min_lat) / (self.max_lat - self.min_lat) * self.rows)
        c = int((lon - self.min_lon) / (self.max_lon - self.min_lon) * self.cols)
        return min(r, self.rows - 1), min(c, self.cols - 1)

    def contains(self, lat: float, lon: float) -> bool:
        return self.min_lat <= lat < self.max_lat and self.min_lon <= lon < self.max_lon

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        dlat = (self.max_lat - self.min_lat) / self.rows
        dlon = (self.max_lon - self.min_lon) / self.cols
        return self.min_lat + (row + 0.5) * dlat, self.min_lon + (col + 0.5) * dlon


@dataclass
class RiskFrame:
    hour_index: int
    values: np.ndarray  # (rows, cols), non-negative


def bin_records(
    records: Iterable[AccidentRecord],
    grid: GridSpec,
    hours: range,
    start: datetime | None = None,
) -> list[RiskFrame]:
    """Sum severity scores per cell-hour.

    ``hours`` indexes whole hours since ``start`` (defaults to the epoch of the
    first hour, i.e. ``start`` must be given whenever records carry real
    timestamps).  Records outside the bbox or the hour range are dropped and
    counted in the log.
    """
    if len(hours) == 0:
        raise ValueError("empty hour range")
    if hours.step != 1:
        raise ValueError("hour range must be contiguous")
    if start is None:
        start = datetime(1970, 1, 1, tzinfo=timezone.utc)
    cube = np.zeros((len(hours), grid.rows, grid.cols))
    dropped = 0
    for rec in records:
        h = hour_index(rec.timestamp, start)
        cell = grid.cell_of(rec.latitude, rec.longitude)
        if cell is None or h not in hours:
            dropped += 1
            continue
        cube[h - hours.start, cell[0], cell[1]] += risk_score(rec.severity)
    if dropped:
        log.info("bin_records: dropped %d records outside bbox or hour range", dropped)
    return [RiskFrame(h, cube[k]) for k, h in enumerate(hours)]


def read_accidents(path: str | Path) -> list[AccidentRecord]:
    """Read ``timestamp,latitude,longitude,severity`` CSV."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                AccidentRecord(
                    parse_timestamp(row["timestamp"]),
                    float(row["latitude"]),
                    float(row["longitude"]),
                    Severity(row["severity"].strip()),
                )
            )
    return out


# ---------------------------------------------------------------- samples


@dataclass
class Sample:
    """One forecasting example.

    ``history`` and ``target`` are on the raw risk scale; ``context`` holds the
    raw rows for the lag hours (encoded later, once train-split stats exist).
    """

    history: np.ndarray  # (T, I, J)
    context: tuple[ContextRow, ...]  # T rows, same order as history channels
    target: np.ndarray  # (I, J)
    target_hour: int
    target_hour_of_day: int


def build_samples(
    frames: Sequence[RiskFrame],
    context: Sequence[ContextRow],
    lags: Sequence[int] = DEFAULT_LAGS,
) -> list[Sample]:
    """One sample per target hour with a complete lag window.

    ``frames`` must be a contiguous hour run; ``context[k]`` describes the
    same hour as ``frames[k]``.
    """
    if len(context) != len(frames):
        raise ValueError(f"{len(frames)} frames but {len(context)} context rows")
    for k in range(1, len(frames)):
        if frames[k].hour_index != frames[k - 1].hour_index + 1:
            raise ValueError(f"frames not contiguous at position {k}")
    max_lag = max(lags)
    if len(frames) < max_lag + 1:
        raise ValueError(f"insufficient history: need {max_lag + 1} hours, have {len(frames)}")
    cube = np.stack([f.values for f in frames])
    lag_arr = np.asarray(lags)
    samples = []
    for k in range(max_lag, len(frames)):
        idx = k - lag_arr
        samples.append(
            Sample(
                history=cube[idx].copy(),
                context=tuple(context[i] for i in idx),
                target=cube[k].copy(),
                target_hour=frames[k].hour_index,
                target_hour_of_day=context[k].hour_of_day,
            )
        )
    return samples


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.6
    val: float = 0.2
    test: float = 0.2

    def __post_init__(self):
        fr = (self.train, self.val, self.test)
        if any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be non-negative and sum to 1, got {fr}")


def chronological_split(samples: Sequence[Sample], spec: SplitSpec = SplitSpec()):
    """Contiguous train/val/test blocks; train and val sizes are floored."""
    if len(samples) < 3:
        raise ValueError(f"need at least 3 samples to split, got {len(samples)}")
    hours = [s.target_hour for s in samples]
    if any(b <= a for a, b in zip(hours, hours[1:])):
        raise ValueError("samples must be sorted by strictly increasing target_hour")
    n = len(samples)
    n_train = math.floor(spec.train * n + 1e-9)
    n_val = math.floor(spec.val * n + 1e-9)
    return (
        list(samples[:n_train]),
        list(samples[n_train : n_train + n_val]),
        list(samples[n_train + n_val :]),
    )


# ---------------------------------------------------------------- normalization


@dataclass
class NormStats:
    """Mean/std pairs for the risk scale and each scalar context feature."""

    risk_mean: float = 0.0
    risk_std: float = 1.0
    features: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        self.risk_std = max(float(self.risk_std), NORM_STD_FLOOR)
        self.features = {k: (float(m), max(float(s), NORM_STD_FLOOR)) for k, (m, s) in self.features.items()}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["features"] = {k: list(v) for k, v in self.features.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(d["risk_mean"], d["risk_std"], {k: tuple(v) for k, v in d["features"].items()})


SCALAR_FEATURES = ("temperature", "inflow", "outflow")


def _mean_std(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def fit_norm(train: Sequence[Sample]) -> NormStats:
    """Statistics from the training split only.

    Risk stats cover every cell of every training target; context stats cover
    the distinct hours seen in training history windows.
    """
    if not train:
        raise ValueError("cannot fit normalization on an empty training set")
    risk_mean, risk_std = _mean_std(np.stack([s.target for s in train]))
    rows = list({r.hour_index: r for s in train for r in s.context}.values())
    feats = {name: _mean_std([getattr(r, name) for r in rows]) for name in SCALAR_FEATURES}
    return NormStats(risk_mean, risk_std, feats)


def apply_norm(x, stats: NormStats, feature: str | None = None):
    mu, sd = (stats.risk_mean, stats.risk_std) if feature is None else stats.features[feature]
    return (np.asarray(x, dtype=np.float64) - mu) / sd


def invert_norm(x, stats: NormStats, feature: str | None = None):
    mu, sd = (stats.risk_mean, stats.risk_std) if feature is None else stats.features[feature]
    return np.asarray(x, dtype=np.float64) * sd + mu
