"""CSV files -> frames, context rows and samples, as the CLI uses them."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import datetime
from typing import Sequence

import numpy as np

from cvit.config import RunConfig
from cvit.context import ContextRow, FlowSeries, flows_from_trips, read_context_rows, read_trips
from cvit.grid import (
    RiskFrame,
    Sample,
    bin_records,
    build_samples,
    chronological_split,
    parse_timestamp,
    read_accidents,
)

log = logging.getLogger(__name__)


@dataclass
class Dataset:
    start: datetime
    frames: list[RiskFrame]
    context: list[ContextRow]
    samples: list[Sample]
    lags: tuple[int, ...]
    skipped_trips: int = 0

    @property
    def n_hours(self) -> int:
        return len(self.frames)


def context_span(path) -> tuple[datetime, int]:
    """(first hour, number of hours) covered by the context CSV."""
    with open(path, newline="") as fh:
        stamps = [parse_timestamp(r["timestamp"]) for r in csv.DictReader(fh)]
    if not stamps:
        raise ValueError(f"{path}: no rows")
    first = min(stamps).replace(minute=0, second=0, microsecond=0)
    last = max(stamps)
    return first, int((last - first).total_seconds() // 3600) + 1


def load_dataset(cfg: RunConfig) -> Dataset:
    grid = cfg.grid_spec
    start, n = context_span(cfg.path("context"))
    hours = range(n)
    frames = bin_records(read_accidents(cfg.path("accidents")), grid, hours, start)
    trips_path = cfg.path("trips")
    flows = None
    if trips_path is not None:
        flows = flows_from_trips(read_trips(trips_path), grid, hours, start)
    context = read_context_rows(cfg.path("context"), start, hours, flows)
    lags = tuple(int(l) for l in cfg.lags)
    samples = build_samples(frames, context, lags)
    return Dataset(start, frames, context, samples, lags, flows.skipped if flows else 0)


def split_samples(ds: Dataset, cfg: RunConfig) -> dict[str, list[Sample]]:
    train, val, test = chronological_split(ds.samples, cfg.split_spec)
    return {"train": train, "val": val, "test": test}


def input_window(ds: Dataset, t: int) -> Sample:
    """Model input for target hour ``t``; ``t`` may be one past the last observed hour.

    The returned target is all zeros when hour ``t`` is not observed.
    """
    max_lag = max(ds.lags)
    if t < max_lag:
        raise ValueError(f"insufficient history for hour {t}: need at least {max_lag} earlier hours")
    if t > ds.n_hours:
        raise ValueError(f"hour {t} is beyond the data (last observed hour {ds.n_hours - 1})")
    idx = [t - l for l in ds.lags]
    observed = t < ds.n_hours
    target = ds.frames[t].values.copy() if observed else np.zeros_like(ds.frames[0].values)
    hod = ds.context[t].hour_of_day if observed else (ds.context[t - 1].hour_of_day + 1) % 24
    return Sample(
        history=np.stack([ds.frames[i].values for i in idx]),
        context=tuple(ds.context[i] for i in idx),
        target=target,
        target_hour=t,
        target_hour_of_day=hod,
    )


def sample_by_hour(samples: Sequence[Sample]) -> dict[int, Sample]:
    return {s.target_hour: s for s in samples}
