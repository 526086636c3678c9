"""Telemetry: renewable physics, synthetic generation, CSV ingest, replay."""

from __future__ import annotations

import math

import numpy as np
import pytest

from slesim.telemetry import (
    GenerationSpec,
    InvalidSpecError,
    MalformedRowError,
    MeterReading,
    NonMonotoneError,
    ReplayClock,
    TelemetryError,
    TimeSeries,
    UnknownVectorError,
    Vector,
    generate_synthetic_profiles,
    ingest_csv,
    parse_timestamp,
    pv_output,
    replay,
    wind_output,
    write_csv,
)

START = parse_timestamp("2022-06-06T00:00:00Z")


# -- PV physics --------------------------------------------------------------

def test_pv_clips_at_ac_nominal():
    assert pv_output(5500, 4400, 1.0, 1000) == 4400.0


def test_pv_zero_at_night():
    assert pv_output(5500, 4400, 0.9, 0) == 0.0


def test_pv_linear_below_clip():
    # 5500 * 0.5 * 0.9, by hand
    assert pv_output(5500, 4400, 0.9, 500) == pytest.approx(2475.0, abs=1e-12)


def test_pv_monotone_and_capped():
    rng = np.random.default_rng(7)
    for _ in range(20):
        ghi = np.sort(rng.uniform(0, 1400, size=50))
        out = pv_output(5500, 4400, 0.9, ghi)
        assert np.all(np.diff(out) >= 0)
        assert np.all(out <= 4400.0)
        assert np.all(out >= 0.0)


def test_pv_vectorized_matches_scalar():
    ghi = np.array([0.0, 250.0, 900.0, 1300.0])
    vec = pv_output(5500, 4400, 0.9, ghi)
    assert list(vec) == [pv_output(5500, 4400, 0.9, g) for g in ghi]


# -- wind physics ------------------------------------------------------------

def test_wind_below_cut_in_is_zero():
    assert wind_output(1900, 3, 12, 25, 2.0) == 0.0


def test_wind_rated_plateau():
    assert wind_output(1900, 3, 12, 25, 14.0) == 1900.0
    assert wind_output(1900, 3, 12, 25, 12.0) == 1900.0


def test_wind_cut_out_is_zero():
    assert wind_output(1900, 3, 12, 25, 25.0) == 0.0
    assert wind_output(1900, 3, 12, 25, 30.0) == 0.0


def test_wind_cubic_ramp_value():
    expected = 1900.0 * (7.5**3 - 3.0**3) / (12.0**3 - 3.0**3)
    assert wind_output(1900, 3, 12, 25, 7.5) == pytest.approx(expected, abs=1e-9)


def test_wind_continuous_at_curve_joints():
    eps = 1e-7
    below = wind_output(1900, 3, 12, 25, 3.0 - eps)
    above = wind_output(1900, 3, 12, 25, 3.0 + eps)
    assert below == 0.0
    assert abs(above) < 1e-2
    near_rated = wind_output(1900, 3, 12, 25, 12.0 - eps)
    assert abs(near_rated - 1900.0) < 1e-2


def test_wind_vectorized_matches_scalar():
    speeds = np.array([0.0, 3.0, 7.5, 12.0, 24.9, 25.0])
    vec = wind_output(1900, 3, 12, 25, speeds)
    assert list(vec) == [wind_output(1900, 3, 12, 25, v) for v in speeds]


# -- synthetic generation ----------------------------------------------------

def test_generation_is_deterministic():
    spec = GenerationSpec(meters=12, start=START, days=2, annual_electric_kwh=1e5, annual_heat_kwh=5e4)
    a = generate_synthetic_profiles(spec, 42)
    b = generate_synthetic_profiles(spec, 42)
    for vector in (Vector.ELECTRIC, Vector.HEAT):
        assert np.array_equal(a.demand_kwh[vector], b.demand_kwh[vector])
    assert np.array_equal(a.ghi_w_m2, b.ghi_w_m2)
    assert np.array_equal(a.wind_ms, b.wind_ms)
    assert np.array_equal(a.carbon_kg_per_kwh, b.carbon_kg_per_kwh)
    c = generate_synthetic_profiles(spec, 43)
    assert not np.array_equal(a.demand_kwh[Vector.ELECTRIC], c.demand_kwh[Vector.ELECTRIC])


def test_generation_honors_meter_count_and_grid():
    spec = GenerationSpec(meters=7, start=START, days=3, annual_electric_kwh=1e5)
    ds = generate_synthetic_profiles(spec, 1)
    assert len(ds.meter_ids) == 7
    assert ds.demand_kwh[Vector.ELECTRIC].shape == (7, 3 * 48)
    assert len(ds.timestamps()) == 3 * 48
    assert ds.timestamps()[1] - ds.timestamps()[0] == ds.timestamps()[-1] - ds.timestamps()[-2]


def test_single_meter_day_hits_prorated_target():
    # annual 48,000 kWh -> one day carries 48,000/365 = 131.5 kWh over 48 slots
    spec = GenerationSpec(meters=1, start=START, days=1, annual_electric_kwh=48_000.0)
    ds = generate_synthetic_profiles(spec, 42)
    values = ds.demand_kwh[Vector.ELECTRIC]
    assert values.shape == (1, 48)
    assert values.sum() == pytest.approx(48_000.0 / 365.0, rel=1e-9)
    assert values.sum() == pytest.approx(131.5, abs=0.1)


def test_full_year_campus_calibration():
    spec = GenerationSpec(meters=1500, start=parse_timestamp("2022-01-01T00:00:00Z"),
                          days=365, annual_electric_kwh=63e6)
    ds = generate_synthetic_profiles(spec, 42)
    total_gwh = ds.total_kwh(Vector.ELECTRIC) / 1e6
    assert 62.37 <= total_gwh <= 63.63


def test_generation_shape_daytime_peak_weekday_skew():
    spec = GenerationSpec(meters=40, start=START, days=14, annual_electric_kwh=2e6)
    ds = generate_synthetic_profiles(spec, 42)
    per_interval = ds.demand_kwh[Vector.ELECTRIC].sum(axis=0).reshape(14, 48)
    day_mean = per_interval[:, 20:36].mean()  # 10:00-18:00
    night_mean = per_interval[:, 0:10].mean()  # 00:00-05:00
    assert day_mean > night_mean
    weekday = per_interval[[0, 1, 2, 3, 4, 7, 8, 9, 10, 11]].sum()
    weekend = per_interval[[5, 6, 12, 13]].sum() * 10 / 4
    assert weekday > weekend


def test_zero_targets_disable_vectors():
    spec = GenerationSpec(meters=3, start=START, days=1, annual_electric_kwh=1e4)
    ds = generate_synthetic_profiles(spec, 5)
    assert Vector.ELECTRIC in ds.demand_kwh
    assert Vector.HEAT not in ds.demand_kwh
    assert Vector.GAS not in ds.demand_kwh


def test_carbon_signal_stays_in_band():
    spec = GenerationSpec(meters=2, start=START, days=7, annual_electric_kwh=1e4)
    ds = generate_synthetic_profiles(spec, 9)
    assert np.all(ds.carbon_kg_per_kwh >= 0.10)
    assert np.all(ds.carbon_kg_per_kwh <= 0.35)
    assert np.all(ds.ghi_w_m2 >= 0.0)
    assert np.all(ds.wind_ms >= 0.0)


def test_invalid_specs_rejected():
    with pytest.raises(InvalidSpecError):
        GenerationSpec(meters=0, start=START, days=1)
    with pytest.raises(InvalidSpecError):
        GenerationSpec(meters=1, start=START, days=0)
    with pytest.raises(InvalidSpecError):
        GenerationSpec(meters=1, start=START, days=1, interval_minutes=7)


# -- CSV ingest --------------------------------------------------------------

def test_ingest_two_row_file(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text(
        "meter_id,vector,timestamp,value_kwh\n"
        "M1,electric,2022-06-06T00:00:00+00:00,1.5\n"
        "M1,electric,2022-06-06T00:30:00+00:00,2.0\n"
    )
    collection = ingest_csv(path)
    series = collection[("M1", Vector.ELECTRIC)]
    assert series.values == (1.5, 2.0)
    assert series.interval_minutes == 30
    assert series.start == START


def test_ingest_round_trip(tmp_path):
    original = {
        ("M1", Vector.ELECTRIC): TimeSeries(start=START, values=(1.0, 2.0, 3.0)),
        ("M1", Vector.GAS): TimeSeries(start=START, values=(0.4, math.nan, 0.6)),
        ("M2", Vector.ELECTRIC): TimeSeries(start=START, values=(5.0,)),
    }
    path = tmp_path / "rt.csv"
    write_csv(original, path)
    loaded = ingest_csv(path)
    assert set(loaded) == set(original)
    for key, series in original.items():
        got = loaded[key]
        assert got.start == series.start
        assert got.interval_minutes == series.interval_minutes
        assert len(got) == len(series)
        for a, b in zip(got.values, series.values):
            assert (math.isnan(a) and math.isnan(b)) or a == b


def test_ingest_gap_becomes_nan(tmp_path):
    path = tmp_path / "gap.csv"
    path.write_text(
        "meter_id,vector,timestamp,value_kwh\n"
        "M1,electric,2022-06-06T00:00:00+00:00,1.0\n"
        "M1,electric,2022-06-06T01:00:00+00:00,3.0\n"  # 00:30 absent
        "M1,electric,2022-06-06T01:30:00+00:00,2.0\n"
    )
    series = ingest_csv(path)[("M1", Vector.ELECTRIC)]
    assert series.interval_minutes == 30
    assert len(series) == 4
    assert math.isnan(series.values[1])
    assert series.total() == pytest.approx(6.0)


def test_ingest_empty_value_cell_is_gap(tmp_path):
    path = tmp_path / "cell.csv"
    path.write_text(
        "meter_id,vector,timestamp,value_kwh\n"
        "M1,electric,2022-06-06T00:00:00+00:00,1.0\n"
        "M1,electric,2022-06-06T00:30:00+00:00,\n"
        "M1,electric,2022-06-06T01:00:00+00:00,3.0\n"
    )
    series = ingest_csv(path)[("M1", Vector.ELECTRIC)]
    assert len(series) == 3
    assert math.isnan(series.values[1])


def test_ingest_rejects_non_monotone_naming_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        "meter_id,vector,timestamp,value_kwh\n"
        "M1,electric,2022-06-06T01:00:00+00:00,1.0\n"
        "M1,electric,2022-06-06T00:30:00+00:00,2.0\n"
    )
    with pytest.raises(NonMonotoneError, match=":3:"):
        ingest_csv(path)


def test_ingest_rejects_malformed_rows(tmp_path):
    short = tmp_path / "short.csv"
    short.write_text("meter_id,vector,timestamp,value_kwh\nM1,electric,2022-06-06T00:00:00+00:00\n")
    with pytest.raises(MalformedRowError, match=":2:"):
        ingest_csv(short)
    nonnum = tmp_path / "nonnum.csv"
    nonnum.write_text("meter_id,vector,timestamp,value_kwh\nM1,electric,2022-06-06T00:00:00+00:00,abc\n")
    with pytest.raises(MalformedRowError):
        ingest_csv(nonnum)
    badheader = tmp_path / "head.csv"
    badheader.write_text("meter,vector,time,kwh\n")
    with pytest.raises(MalformedRowError, match="header"):
        ingest_csv(badheader)


def test_ingest_rejects_unknown_vector(tmp_path):
    path = tmp_path / "vec.csv"
    path.write_text("meter_id,vector,timestamp,value_kwh\nM1,steam,2022-06-06T00:00:00+00:00,1.0\n")
    with pytest.raises(UnknownVectorError, match="steam"):
        ingest_csv(path)


def test_dataset_csv_round_trip(tmp_path):
    spec = GenerationSpec(meters=3, start=START, days=1, annual_electric_kwh=5e4, annual_gas_kwh=2e4)
    ds = generate_synthetic_profiles(spec, 11)
    path = tmp_path / "telemetry.csv"
    rows = ds.write_telemetry_csv(path)
    assert rows == 3 * 48 * 2  # meters x intervals x vectors
    collection = ingest_csv(path)
    assert len(collection) == 6
    series = collection[("M0001", Vector.ELECTRIC)]
    np.testing.assert_allclose(series.values, ds.demand_kwh[Vector.ELECTRIC][0], atol=1e-6)


# -- replay ------------------------------------------------------------------

def reading(meter: str, minute: int, value: float = 1.0) -> MeterReading:
    return MeterReading(meter, Vector.ELECTRIC, START.replace(minute=minute), value)


def test_replay_orders_by_timestamp():
    readings = [reading("M1", 30), reading("M1", 0), reading("M2", 30)]
    seen: list[MeterReading] = []
    summary = replay(readings, ReplayClock(speed=1e9), seen.append)
    assert summary.delivered == 3
    assert [r.timestamp.minute for r in seen] == [0, 30, 30]
    assert summary.first == seen[0].timestamp
    assert summary.last == seen[-1].timestamp


def test_replay_breaks_ties_by_meter_id():
    readings = [reading("M9", 0), reading("M1", 0), reading("M5", 0)]
    seen: list[MeterReading] = []
    replay(readings, ReplayClock(speed=1e9), seen.append)
    assert [r.meter_id for r in seen] == ["M1", "M5", "M9"]


def test_replay_order_is_speed_invariant():
    spec = GenerationSpec(meters=4, start=START, days=1, annual_electric_kwh=1e4)
    ds = generate_synthetic_profiles(spec, 3)
    fast: list[tuple] = []
    faster: list[tuple] = []
    replay(ds, ReplayClock(speed=1e8), lambda r: fast.append((r.timestamp, r.meter_id)))
    summary = replay(ds, ReplayClock(speed=1e9), lambda r: faster.append((r.timestamp, r.meter_id)))
    assert fast == faster
    assert summary.delivered == 4 * 48


def test_replay_clock_validation_and_monotonicity():
    with pytest.raises(TelemetryError):
        ReplayClock(speed=0)
    clock = ReplayClock(speed=1e9)
    clock.advance_to(START)
    clock.advance_to(START.replace(minute=30))
    assert clock.cursor == START.replace(minute=30)
    clock.advance_to(START)  # going backwards never rewinds the cursor
    assert clock.cursor == START.replace(minute=30)
