"""Reusable experiment runners shared by scripts/ and the acceptance tests."""

from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cvit.config import RunConfig
from cvit.gradcheck import GradCheckResult, check_gradients
from cvit.grid import fit_norm
from cvit.metrics import EvalReport, evaluate, rush_hour_filter
from cvit.model import CvitModel, ModelConfig
from cvit.pipeline import load_dataset, split_samples
from cvit.synth import SynthConfig, dense_hotspot_world, generate
from cvit.training import EpochLog, LossWeights, TrainConfig, predict_raw, prepare, train, weighted_mse

REDUCED = ModelConfig(rows=10, cols=10, patch=5, dim=16, heads=2, layers=2, ffn_hidden=64, head_hidden=128)


def gradcheck_reduced(model_seed: int = 0, data_seed: int = 0, batch: int = 2) -> tuple[GradCheckResult, float]:
    """Finite-difference check of every parameter of the reduced model.  Returns (result, seconds)."""
    cfg = REDUCED
    model = CvitModel(cfg, seed=model_seed)
    rng = np.random.default_rng(data_seed)
    history = rng.uniform(-1, 1, (batch, cfg.channels, cfg.rows, cfg.cols))
    context = rng.uniform(-1, 1, (batch, cfg.channels, cfg.context_dim))
    target = rng.uniform(-1, 1, (batch, cfg.rows, cfg.cols))
    raw = rng.integers(0, 5, (batch, cfg.rows, cfg.cols)).astype(float)
    t0 = time.perf_counter()
    res = check_gradients(model.params, lambda: weighted_mse(model.forward(history, context), target, raw))
    return res, time.perf_counter() - t0


@dataclass
class OverfitResult:
    history: list[EpochLog]
    test_all: EvalReport
    test_rush: EvalReport
    seconds: float

    @property
    def loss_ratio(self) -> float:
        return self.history[-1].train_loss / self.history[0].train_loss


def run_world(
    world: SynthConfig,
    model_config: ModelConfig = ModelConfig(),
    train_config: TrainConfig = TrainConfig(epochs=50),
    weights: LossWeights = LossWeights(),
    workdir: str | Path | None = None,
) -> OverfitResult:
    """Generate ``world``, train on its chronological split and score the test split."""
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(workdir or tmp)
        generate(world).write(root)
        cfg = RunConfig(
            base_dir=str(root), accidents="accidents.csv", context="context.csv", trips="trips.csv",
            grid=dict(vars(world.grid)),
        )
        splits = split_samples(load_dataset(cfg), cfg)
    stats = fit_norm(splits["train"])
    model = CvitModel(model_config, seed=train_config.seed)
    res = train(model, prepare(splits["train"], stats), prepare(splits["val"], stats), stats, train_config, weights)
    test = splits["test"]
    rush = rush_hour_filter(test)
    all_report = evaluate(predict_raw(model, prepare(test, stats), stats), np.stack([s.target for s in test]))
    rush_report = evaluate(
        predict_raw(model, prepare(rush, stats), stats), np.stack([s.target for s in rush]), "rush_hours"
    )
    return OverfitResult(res.history, all_report, rush_report, time.perf_counter() - t0)


def overfit_experiment(world_seed: int = 0, model_seed: int = 0, epochs: int = 50, weeks: int = 8) -> OverfitResult:
    """Default model and optimiser on the dense-hotspot synthetic world."""
    return run_world(dense_hotspot_world(seed=world_seed, weeks=weeks), train_config=TrainConfig(epochs=epochs, seed=model_seed))
