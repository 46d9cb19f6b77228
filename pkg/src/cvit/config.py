"""Run configuration (JSON).

Schema (all keys optional except the data paths)::

    {
      "accidents": "data/accidents.csv",      # timestamp,latitude,longitude,severity
      "context":   "data/context.csv",        # timestamp,is_holiday,weather_condition,temperature
      "trips":     "data/trips.csv",          # optional; zero flows when absent
      "grid":  {"min_lat":..,"max_lat":..,"min_lon":..,"max_lon":..,"rows":20,"cols":20},
      "lags":  [672,504,336,168,3,2,1],
      "split": {"train":0.6,"val":0.2,"test":0.2},
      "model": {ModelConfig fields},
      "train": {TrainConfig fields},
      "loss_weights": {"zero":0.05,"one":0.2,"two":0.25,"three_plus":0.5},
      "output_dir": "run"
    }

Relative paths resolve against the directory holding the config file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict, fields
from pathlib import Path

from cvit.grid import DEFAULT_LAGS, GridSpec, SplitSpec
from cvit.model import ModelConfig
from cvit.training import LossWeights, TrainConfig


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(problems))


@dataclass
class RunConfig:
    accidents: str = "data/accidents.csv"
    context: str = "data/context.csv"
    trips: str | None = "data/trips.csv"
    grid: dict = field(default_factory=lambda: asdict(GridSpec(40.70, 40.88, -74.02, -73.90, 20, 20)))
    lags: list = field(default_factory=lambda: list(DEFAULT_LAGS))
    split: dict = field(default_factory=lambda: asdict(SplitSpec()))
    model: dict = field(default_factory=lambda: asdict(ModelConfig()))
    train: dict = field(default_factory=lambda: asdict(TrainConfig()))
    loss_weights: dict = field(default_factory=lambda: asdict(LossWeights()))
    output_dir: str = "run"
    base_dir: str = field(default=".", repr=False)

    # typed views; validate() guarantees these construct
    @property
    def grid_spec(self) -> GridSpec:
        return GridSpec(**self.grid)

    @property
    def split_spec(self) -> SplitSpec:
        return SplitSpec(**self.split)

    @property
    def model_config(self) -> ModelConfig:
        return ModelConfig(**self.model)

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.train)

    @property
    def weights(self) -> LossWeights:
        return LossWeights(**self.loss_weights)

    def path(self, name: str) -> Path | None:
        value = getattr(self, name)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def validate(self, check_files: bool = True) -> None:
        """Raise ConfigError listing every problem found."""
        problems = []
        typed = {}
        for key, cls in (("grid", GridSpec), ("split", SplitSpec), ("model", ModelConfig),
                         ("train", TrainConfig), ("loss_weights", LossWeights)):
            try:
                typed[key] = cls(**getattr(self, key))
            except (TypeError, ValueError) as exc:
                problems.append(f"{key}: {exc}")
        if not self.lags or any(int(l) != l or l < 1 for l in self.lags):
            problems.append(f"lags must be positive integers, got {self.lags}")
        if "model" in typed:
            m = typed["model"]
            if m.channels != len(self.lags):
                problems.append(f"model.channels={m.channels} but {len(self.lags)} lags configured")
            if "grid" in typed and (m.rows, m.cols) != (typed["grid"].rows, typed["grid"].cols):
                problems.append(f"model grid {m.rows}x{m.cols} != data grid {typed['grid'].rows}x{typed['grid'].cols}")
        if check_files:
            for name in ("accidents", "context", "trips"):
                p = self.path(name)
                if p is not None and not p.is_file():
                    problems.append(f"{name}: file not found: {p}")
        if problems:
            raise ConfigError(problems)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path = ".") -> "RunConfig":
        known = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError([f"unknown key {k!r}" for k in sorted(unknown)])
        cfg = cls(**{k: v for k, v in d.items()}, base_dir=str(base_dir))
        defaults = cls()
        for key in ("grid", "split", "model", "train", "loss_weights"):
            merged = dict(getattr(defaults, key))
            merged.update(getattr(cfg, key))
            setattr(cfg, key, merged)
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.resolve().parent)


def default_config_json() -> str:
    return json.dumps(RunConfig().to_dict(), indent=2)
