"""Weighted-MSE training with Adam."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from cvit import tensor as tn
from cvit.context import encode_rows
from cvit.grid import NormStats, Sample, apply_norm, invert_norm
from cvit.metrics import evaluate
from cvit.model import CvitModel
from cvit.tensor import Tensor

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "train_loss", "val_rmse", "val_recall", "val_map", "seconds")


@dataclass(frozen=True)
class LossWeights:
    """Per-cell weights by raw risk class: 0, 1, 2, >=3."""

    zero: float = 0.05
    one: float = 0.2
    two: float = 0.25
    three_plus: float = 0.5

    def __post_init__(self):
        if min(self.zero, self.one, self.two, self.three_plus) <= 0:
            raise ValueError("loss weights must be positive")

    def for_targets(self, raw_target: np.ndarray) -> np.ndarray:
        raw = np.asarray(raw_target, dtype=np.float64)
        # risk values are integer sums of severity scores; classes split at 0.5/1.5/2.5
        return np.select(
            [raw < 0.5, raw < 1.5, raw < 2.5],
            [self.zero, self.one, self.two],
            default=self.three_plus,
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.003
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")


def weighted_mse(pred: Tensor, target, raw_target, weights: LossWeights = LossWeights()) -> Tensor:
    """Mean over cells of w(class(raw)) * (pred - target)^2.

    With a batch axis this is the mean over samples of per-sample cell means.
    ``raw_target`` only selects the class weights.
    """
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or target.shape != np.shape(raw_target):
        raise tn.ShapeError(f"weighted_mse: pred {pred.shape}, target {target.shape}, raw {np.shape(raw_target)}")
    diff = pred - target
    return tn.mean(diff * diff * weights.for_targets(raw_target))


# ---------------------------------------------------------------- Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(params: dict[str, Tensor], state: AdamState, cfg: TrainConfig) -> None:
    """One bias-corrected Adam update from each parameter's ``grad`` (missing grad = zero)."""
    state.step += 1
    t = state.step
    c1 = 1.0 - cfg.beta1**t
    c2 = 1.0 - cfg.beta2**t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        p.data = p.data - cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


# ---------------------------------------------------------------- data plumbing


@dataclass
class SampleArrays:
    """Model-ready stack of samples."""

    history: np.ndarray  # (N, T, I, J) standardized
    context: np.ndarray  # (N, T, F) encoded
    target: np.ndarray  # (N, I, J) standardized
    raw_target: np.ndarray  # (N, I, J)
    target_hour: np.ndarray  # (N,)
    hour_of_day: np.ndarray  # (N,)

    def __len__(self) -> int:
        return self.history.shape[0]

    def subset(self, idx) -> "SampleArrays":
        return SampleArrays(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))


def prepare(samples: Sequence[Sample], stats: NormStats) -> SampleArrays:
    if not samples:
        raise ValueError("no samples")
    raw_target = np.stack([s.target for s in samples])
    return SampleArrays(
        history=apply_norm(np.stack([s.history for s in samples]), stats),
        context=np.stack([encode_rows(s.context, stats) for s in samples]),
        target=apply_norm(raw_target, stats),
        raw_target=raw_target,
        target_hour=np.array([s.target_hour for s in samples]),
        hour_of_day=np.array([s.target_hour_of_day for s in samples]),
    )


def predict_raw(model: CvitModel, data: SampleArrays, stats: NormStats, batch_size: int = 64) -> np.ndarray:
    """Raw-scale (N, I, J) predictions."""
    out = []
    with tn.no_grad():
        for s in range(0, len(data), batch_size):
            sl = slice(s, s + batch_size)
            out.append(model.forward(data.history[sl], data.context[sl]).data)
    return invert_norm(np.concatenate(out), stats)


# ---------------------------------------------------------------- loop


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_rmse: float
    val_recall: float
    val_map: float
    seconds: float


@dataclass
class TrainResult:
    history: list[EpochLog]
    best_epoch: int
    best_val_rmse: float


def train_epoch(model, data: SampleArrays, cfg: TrainConfig, state: AdamState, rng, weights: LossWeights) -> float:
    order = rng.permutation(len(data))
    total = 0.0
    for s in range(0, len(data), cfg.batch_size):
        idx = order[s : s + cfg.batch_size]
        model.zero_grad()
        pred = model.forward(data.history[idx], data.context[idx])
        loss = weighted_mse(pred, data.target[idx], data.raw_target[idx], weights)
        tn.backward(loss)
        adam_step(model.params, state, cfg)
        total += loss.item() * len(idx)
    return total / len(data)


def train(
    model: CvitModel,
    train_data: SampleArrays,
    val_data: SampleArrays,
    stats: NormStats,
    cfg: TrainConfig = TrainConfig(),
    weights: LossWeights = LossWeights(),
    timer=time.perf_counter,
) -> TrainResult:
    """Mini-batch Adam; keeps (and restores into ``model``) the best-validation-RMSE parameters.

    Shuffling uses one Philox stream seeded from ``cfg.seed``.
    """
    if len(train_data) == 0 or len(val_data) == 0:
        raise ValueError("train and validation splits must be non-empty")
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    state = AdamState()
    history: list[EpochLog] = []
    best_rmse, best_epoch, best_state = math.inf, 0, model.state_dict()
    for epoch in range(1, cfg.epochs + 1):
        t0 = timer()
        loss = train_epoch(model, train_data, cfg, state, rng, weights)
        report = evaluate(predict_raw(model, val_data, stats), val_data.raw_target)
        entry = EpochLog(epoch, loss, report.rmse, report.recall, report.map, timer() - t0)
        history.append(entry)
        log.info(
            "epoch %d loss %.6f val rmse %.4f recall %.4f map %.4f (%.1fs)",
            epoch, loss, report.rmse, report.recall, report.map, entry.seconds,
        )
        if report.rmse < best_rmse:
            best_rmse, best_epoch, best_state = report.rmse, epoch, model.state_dict()
    model.load_state_dict(best_state)
    return TrainResult(history, best_epoch, best_rmse)


def write_log(path: str | Path, history: Sequence[EpochLog], include_seconds: bool = True) -> None:
    """Epoch log CSV.  ``include_seconds=False`` writes 0 in the timing column (reproducible bytes)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for e in history:
            secs = f"{e.seconds:.3f}" if include_seconds else "0"
            w.writerow([e.epoch, repr(e.train_loss), repr(e.val_rmse), repr(e.val_recall), repr(e.val_map), secs])
