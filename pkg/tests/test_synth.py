import csv
import io
import logging
from datetime import timedelta

import numpy as np
import pytest

from cvit.config import RunConfig
from cvit.grid import GridSpec, parse_timestamp, read_accidents
from cvit.pipeline import load_dataset
from cvit.synth import SynthConfig, dense_hotspot_world, generate


@pytest.fixture(scope="module")
def eight_weeks():
    cfg = SynthConfig(seed=3)
    return cfg, generate(cfg)


def _accident_rows(out):
    return list(csv.DictReader(io.StringIO(out.accidents)))


def test_zero_rates_zero_accidents():
    cfg = SynthConfig(weeks=1, hotspots=[], background_rate=0.0)
    assert generate(cfg).row_counts()["accidents"] == 0


def test_same_seed_identical():
    a = generate(SynthConfig(weeks=1, seed=9))
    b = generate(SynthConfig(weeks=1, seed=9))
    assert (a.accidents, a.context, a.trips) == (b.accidents, b.context, b.trips)
    c = generate(SynthConfig(weeks=1, seed=10))
    assert c.accidents != a.accidents


def test_hotspot_means_within_three_standard_errors(eight_weeks):
    cfg, out = eight_weeks
    start = cfg.start_time
    counts = np.zeros((cfg.hours, cfg.grid.rows, cfg.grid.cols))
    for row in _accident_rows(out):
        h = int((parse_timestamp(row["timestamp"]) - start).total_seconds() // 3600)
        r, c = cfg.grid.cell_of(float(row["latitude"]), float(row["longitude"]))
        counts[h, r, c] += 1
    mult = np.array([
        cfg.daily_profile[(start + timedelta(hours=h)).hour] * cfg.weekly_profile[(start + timedelta(hours=h)).weekday()]
        for h in range(cfg.hours)
    ])
    for (r, c), rate in cfg.hotspots:
        lam = (rate + cfg.background_rate) * mult
        expected = lam.mean()
        se = np.sqrt(lam.sum()) / cfg.hours  # Poisson: var of sum = sum of means
        assert abs(counts[:, r, c].mean() - expected) < 3 * se


def test_weekly_profile_rank_correlation():
    cfg = SynthConfig(weeks=8, seed=4, weekly_profile=[0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 1.7])
    out = generate(cfg)
    per_day = np.zeros(7)
    for row in _accident_rows(out):
        per_day[parse_timestamp(row["timestamp"]).weekday()] += 1
    rank = lambda x: np.argsort(np.argsort(x))  # noqa: E731
    rho = np.corrcoef(rank(per_day), rank(np.array(cfg.weekly_profile)))[0, 1]
    assert rho > 0


def test_outputs_parse_cleanly(tmp_path, eight_weeks, caplog):
    cfg, out = eight_weeks
    out.write(tmp_path)
    records = read_accidents(tmp_path / "accidents.csv")
    assert all(cfg.grid.contains(r.latitude, r.longitude) for r in records)
    run = RunConfig(base_dir=str(tmp_path), accidents="accidents.csv", context="context.csv", trips="trips.csv",
                    grid=dict(vars(cfg.grid)))
    with caplog.at_level(logging.INFO):
        ds = load_dataset(run)
    assert ds.skipped_trips == 0
    assert "dropped" not in caplog.text
    assert ds.n_hours == cfg.hours
    assert sum(f.values.sum() for f in ds.frames) > 0


def test_invalid_configs():
    with pytest.raises(ValueError):
        SynthConfig(severity_mix=[0.5, 0.5, 0.5])
    with pytest.raises(ValueError):
        SynthConfig(hotspots=[[[25, 0], 1.0]])
    with pytest.raises(ValueError):
        SynthConfig(daily_profile=[1.0] * 23)
    with pytest.raises(ValueError):
        SynthConfig(grid=GridSpec(0, 1, 0, 1), hotspots=[[[0, 0], -1.0]])


def test_dense_world_is_valid():
    cfg = dense_hotspot_world(seed=1, weeks=1)
    assert max(rate for _, rate in cfg.hotspots) > 10
    assert generate(cfg).row_counts()["accidents"] > 1000
