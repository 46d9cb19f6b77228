from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cvit.context import (
    CONTEXT_DIM,
    WEATHER,
    ContextRow,
    encode_context,
    encode_rows,
    flows_from_trips,
    read_context_rows,
)
from cvit.grid import GridSpec, NormStats

T0 = datetime(2024, 1, 1, tzinfo=timezone.utc)  # a Monday
GRID = GridSpec(40.0, 41.0, -74.0, -73.0, 10, 10)
STATS = NormStats(0.0, 1.0, {"temperature": (12.0, 4.0), "inflow": (0.0, 5.0), "outflow": (0.0, 5.0)})

rows_strategy = st.builds(
    ContextRow,
    hour_of_day=st.integers(0, 23),
    day_of_week=st.integers(0, 6),
    is_holiday=st.booleans(),
    weather_condition=st.sampled_from(WEATHER),
    temperature=st.floats(-30, 45),
    inflow=st.floats(0, 500),
    outflow=st.floats(0, 500),
)


def oracle_encode(row, stats):
    """Field-by-field re-derivation using list concatenation."""
    hour = [1.0 if h == row.hour_of_day else 0.0 for h in range(24)]
    dow = [1.0 if d == row.day_of_week else 0.0 for d in range(7)]
    weather = [1.0 if w == row.weather_condition else 0.0 for w in ("clear", "cloudy", "rainy", "snowy", "mist")]
    scalars = []
    for name in ("temperature", "inflow", "outflow"):
        m, s = stats.features[name]
        scalars.append((getattr(row, name) - m) / s)
    return np.array(hour + dow + [float(row.is_holiday)] + weather + scalars)


def test_example_vector():
    v = encode_context(ContextRow(0, 0, False, "clear", 12.0, 0.0, 0.0), STATS)
    assert v.shape == (CONTEXT_DIM,)
    assert np.flatnonzero(v).tolist() == [0, 24, 32]
    assert v[32] == 1.0  # clear slot


def test_weather_only_changes_weather_block():
    a = encode_context(ContextRow(5, 3, True, "rainy", 3.0, 10.0, 4.0), STATS)
    b = encode_context(ContextRow(5, 3, True, "mist", 3.0, 10.0, 4.0), STATS)
    assert set(np.flatnonzero(a != b)) <= set(range(32, 37))


def test_full_encoding_matches_oracle(rng):
    rows = [
        ContextRow(int(rng.integers(24)), int(rng.integers(7)), bool(rng.integers(2)), WEATHER[rng.integers(5)],
                   float(rng.normal(10, 5)), float(rng.poisson(30)), float(rng.poisson(30)))
        for _ in range(300)
    ]
    expected = np.stack([oracle_encode(r, STATS) for r in rows])
    np.testing.assert_array_equal(encode_rows(rows, STATS), expected)


@given(rows_strategy)
def test_one_hot_blocks(row):
    v = encode_context(row, STATS)
    for lo, hi in ((0, 24), (24, 31), (32, 37)):
        block = v[lo:hi]
        assert block.sum() == 1.0 and np.count_nonzero(block) == 1
    assert v[31] in (0.0, 1.0)


@given(rows_strategy, rows_strategy)
def test_injective_on_categories(a, b):
    cats = lambda r: (r.hour_of_day, r.day_of_week, r.is_holiday, r.weather_condition)  # noqa: E731
    if cats(a) != cats(b):
        assert not np.array_equal(encode_context(a, STATS)[:37], encode_context(b, STATS)[:37])


@pytest.mark.parametrize("kwargs", [
    dict(hour_of_day=24), dict(day_of_week=7), dict(weather_condition="hail"), dict(temperature=float("nan")),
])
def test_out_of_range_rejected(kwargs):
    base = dict(hour_of_day=0, day_of_week=0, is_holiday=False, weather_condition="clear", temperature=1.0)
    with pytest.raises(ValueError):
        ContextRow(**{**base, **kwargs})


# ---------------------------------------------------------------- flows


def trip(p_hour, d_hour, p=(40.5, -73.5), d=(40.5, -73.5)):
    iso = lambda h: (T0 + timedelta(hours=h, minutes=10)).isoformat()  # noqa: E731
    return {"pickup_ts": iso(p_hour), "pickup_lat": p[0], "pickup_lon": p[1],
            "dropoff_ts": iso(d_hour), "dropoff_lat": d[0], "dropoff_lon": d[1]}


def test_no_trips_all_zero():
    f = flows_from_trips([], GRID, range(5), T0)
    assert not f.inflow.any() and not f.outflow.any() and f.skipped == 0


def test_three_pickups_two_dropoffs():
    trips = [trip(2, 4)] * 3 + [trip(0, 2)] * 2
    f = flows_from_trips(trips, GRID, range(5), T0)
    assert f.outflow[2] == 3 and f.inflow[2] == 2


def test_random_trips_match_naive_counter(rng):
    trips = []
    for _ in range(400):
        ph = int(rng.integers(0, 12))
        p = (rng.uniform(39.8, 41.2), rng.uniform(-74.2, -72.8))
        d = (rng.uniform(39.8, 41.2), rng.uniform(-74.2, -72.8))
        trips.append(trip(ph, ph + int(rng.integers(0, 2)), p, d))
    f = flows_from_trips(trips, GRID, range(12), T0)
    inflow, outflow = np.zeros(12), np.zeros(12)
    inside = lambda lat, lon: 40.0 <= lat < 41.0 and -74.0 <= lon < -73.0  # noqa: E731
    for t in trips:
        ph = int((datetime.fromisoformat(t["pickup_ts"]) - T0).total_seconds() // 3600)
        dh = int((datetime.fromisoformat(t["dropoff_ts"]) - T0).total_seconds() // 3600)
        if ph < 12 and inside(t["pickup_lat"], t["pickup_lon"]):
            outflow[ph] += 1
        if dh < 12 and inside(t["dropoff_lat"], t["dropoff_lon"]):
            inflow[dh] += 1
    np.testing.assert_array_equal(f.inflow, inflow)
    np.testing.assert_array_equal(f.outflow, outflow)


def test_malformed_rows_skipped_and_counted():
    bad = trip(1, 1)
    bad["pickup_lat"] = "not-a-number"
    f = flows_from_trips([trip(1, 1), bad, {"pickup_ts": "x"}], GRID, range(3), T0)
    assert f.skipped == 2
    assert f.outflow[1] == 1


def test_read_context_rows(tmp_path):
    p = tmp_path / "ctx.csv"
    lines = ["timestamp,is_holiday,weather_condition,temperature"]
    for h in range(30):
        lines.append(f"{(T0 + timedelta(hours=h)).isoformat()},{int(h >= 24)},cloudy,{h / 2}")
    p.write_text("\n".join(lines) + "\n")
    rows = read_context_rows(p, T0, range(30))
    assert rows[25].hour_of_day == 1 and rows[25].day_of_week == 1 and rows[25].is_holiday
    assert rows[3].temperature == 1.5 and rows[3].hour_index == 3
    with pytest.raises(ValueError, match="missing"):
        read_context_rows(p, T0, range(31))
