"""RMSE, Recall and MAP on raw-scale risk maps, plus the rush-hour filter."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

RUSH_HOURS = frozenset({7, 8, 9, 16, 17, 18, 19})
REPORT_COLUMNS = ("rmse", "recall", "map", "n_samples", "filter")


def _stack(preds, targets) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"prediction shape {p.shape} != target shape {t.shape}")
    if p.size == 0 or p.shape[0] == 0:
        raise ValueError("no samples to evaluate")
    return p.reshape(p.shape[0], -1), t.reshape(t.shape[0], -1)


def rmse(preds, targets) -> float:
    p, t = _stack(preds, targets)
    return math.sqrt(float(np.mean((p - t) ** 2)))


def _ranking(pred_row: np.ndarray) -> np.ndarray:
    # descending by value, ties by ascending cell index
    return np.argsort(-pred_row, kind="stable")


def recall(preds, targets) -> float:
    """Mean over samples of |top-|A| predicted cells ∩ A| / |A|, A = cells with target > 0.

    Samples without any accident cell are skipped.
    """
    p, t = _stack(preds, targets)
    scores = []
    for pr, tr in zip(p, t):
        positive = tr > 0
        k = int(positive.sum())
        if k == 0:
            continue
        top = _ranking(pr)[:k]
        scores.append(positive[top].sum() / k)
    if not scores:
        raise ValueError("recall undefined: no sample has any accident cell")
    return float(np.mean(scores))


def map_score(preds, targets) -> float:
    """Mean average precision of the full predicted cell ranking."""
    p, t = _stack(preds, targets)
    scores = []
    for pr, tr in zip(p, t):
        hits = (tr > 0)[_ranking(pr)]
        k = int(hits.sum())
        if k == 0:
            continue
        precision_at = np.cumsum(hits) / np.arange(1, hits.size + 1)
        scores.append(float(precision_at[hits].sum()) / k)
    if not scores:
        raise ValueError("MAP undefined: no sample has any accident cell")
    return float(np.mean(scores))


def is_rush_hour(hour_of_day: int) -> bool:
    return hour_of_day in RUSH_HOURS


def rush_hour_filter(samples: Sequence) -> list:
    """Keep samples whose target hour-of-day is 7-9 or 16-19 (inclusive)."""
    return [s for s in samples if is_rush_hour(s.target_hour_of_day)]


@dataclass
class EvalReport:
    rmse: float
    recall: float
    map: float
    n_samples: int
    filter: str = "all"

    def __post_init__(self):
        if self.filter not in ("all", "rush_hours"):
            raise ValueError(f"unknown filter {self.filter!r}")

    def as_text(self) -> str:
        return "\n".join(f"{k}: {v}" for k, v in asdict(self).items())

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            w.writerow([repr(self.rmse), repr(self.recall), repr(self.map), self.n_samples, self.filter])


def _safe(fn, preds, targets) -> float:
    try:
        return fn(preds, targets)
    except ValueError:
        return float("nan")


def evaluate(preds, targets, filter: str = "all") -> EvalReport:
    """All three metrics at once; recall/MAP are NaN when no sample has an accident."""
    p = np.asarray(preds)
    return EvalReport(rmse(preds, targets), _safe(recall, preds, targets), _safe(map_score, preds, targets), int(p.shape[0]), filter)
