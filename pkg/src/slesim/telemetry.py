"""Smart-meter and weather telemetry: synthesis, ingestion and replay.

The campus dataset is synthetic but shape-plausible: per-meter base load,
a diurnal profile, a weekday/weekend factor and seeded noise, rescaled so the
annualized total hits a configured target. Everything is a pure function of
(spec, seed), which is what makes twin scenarios reproducible.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterator, Union

import numpy as np


class TelemetryError(Exception):
    """Base class for telemetry errors."""


class InvalidSpecError(TelemetryError):
    """Generation spec is unusable (zero meters, empty date range, ...)."""


class MalformedRowError(TelemetryError):
    """CSV row has the wrong shape, type or grid alignment."""


class NonMonotoneError(TelemetryError):
    """Timestamps within one series go backwards or repeat."""


class UnknownVectorError(TelemetryError):
    """Vector token outside {electric, heat, gas}."""


class Vector(str, Enum):
    ELECTRIC = "electric"
    HEAT = "heat"
    GAS = "gas"


UTC = timezone.utc


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 UTC timestamp ('Z' suffix accepted)."""
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=UTC)
    return ts.astimezone(UTC)


@dataclass(frozen=True)
class MeterReading:
    meter_id: str
    vector: Vector
    timestamp: datetime
    value_kwh: float


@dataclass(frozen=True)
class WeatherRecord:
    timestamp: datetime
    ghi_w_m2: float
    wind_ms: float
    temp_c: float


@dataclass(frozen=True)
class TimeSeries:
    """Regularly sampled series; gaps are represented by NaN, never dropped."""

    start: datetime
    values: tuple[float, ...]
    interval_minutes: int = 30
    unit: str = "kwh"

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.interval_minutes <= 0:
            raise TelemetryError("interval_minutes must be positive")

    def __len__(self) -> int:
        return len(self.values)

    def timestamp(self, index: int) -> datetime:
        return self.start + timedelta(minutes=self.interval_minutes * index)

    def timestamps(self) -> list[datetime]:
        return [self.timestamp(i) for i in range(len(self.values))]

    def total(self) -> float:
        return float(np.nansum(self.values))


SeriesKey = tuple[str, Vector]
SeriesCollection = dict[SeriesKey, TimeSeries]


@dataclass
class ReplayClock:
    """Simulated wall clock; ``speed`` is the sim-seconds per real-second ratio."""

    speed: float = 1.0
    cursor: datetime | None = None

    def __post_init__(self) -> None:
        if self.speed <= 0:
            raise TelemetryError("replay speed must be > 0")

    def advance_to(self, instant: datetime) -> None:
        if self.cursor is not None and instant > self.cursor:
            delay = (instant - self.cursor).total_seconds() / self.speed
            if delay > 1e-4:
                time.sleep(delay)
        if self.cursor is None or instant > self.cursor:
            self.cursor = instant


# --------------------------------------------------------------------------
# Renewable output physics
# --------------------------------------------------------------------------

def pv_output(dc_kw: float, ac_cap_kw: float, derate: float, ghi_w_m2):
    """AC output of a PV plant: linear in irradiance, clipped at the inverter.

    ghi may be a scalar or a numpy array; output has the same shape.
    """
    raw = dc_kw * (np.asarray(ghi_w_m2, dtype=float) / 1000.0) * derate
    out = np.minimum(np.maximum(raw, 0.0), ac_cap_kw)
    return float(out) if out.ndim == 0 else out


def wind_output(rated_kw: float, cut_in: float, rated_v: float, cut_out: float, v):
    """Turbine power curve: cubic ramp between cut-in and rated speed.

    Zero below cut-in and at/above cut-out; rated between rated_v and cut_out.
    """
    v = np.asarray(v, dtype=float)
    ramp = rated_kw * (v**3 - cut_in**3) / (rated_v**3 - cut_in**3)
    out = np.where(
        (v < cut_in) | (v >= cut_out),
        0.0,
        np.where(v >= rated_v, rated_kw, ramp),
    )
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Synthetic generation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GenerationSpec:
    """What to synthesize. Annual targets are per vector; zero disables a vector.

    The campus-wide annual demand figure is assumed to span all three vectors,
    so callers set per-vector targets explicitly.
    """

    meters: int
    start: datetime
    days: int
    interval_minutes: int = 30
    annual_electric_kwh: float = 0.0
    annual_heat_kwh: float = 0.0
    annual_gas_kwh: float = 0.0

    def __post_init__(self) -> None:
        if self.meters <= 0:
            raise InvalidSpecError("meter count must be positive")
        if self.days <= 0:
            raise InvalidSpecError("date range must end after it starts")
        if self.interval_minutes <= 0 or (24 * 60) % self.interval_minutes != 0:
            raise InvalidSpecError("interval_minutes must divide a day")

    @property
    def intervals(self) -> int:
        return self.days * (24 * 60) // self.interval_minutes


# Diurnal profile parameters per vector: (peak hour, swing, weekend factor).
_VECTOR_SHAPE = {
    Vector.ELECTRIC: (13.0, 0.60, 0.72),
    Vector.HEAT: (8.0, 0.50, 0.80),
    Vector.GAS: (9.0, 0.45, 0.80),
}


@dataclass
class SyntheticDataset:
    """Seeded synthetic campus telemetry held as dense arrays.

    demand_kwh maps vector -> (meters x intervals) energy matrix; weather and
    carbon intensity are per-interval arrays on the same grid.
    """

    spec: GenerationSpec
    seed: int
    meter_ids: tuple[str, ...]
    demand_kwh: dict[Vector, np.ndarray]
    ghi_w_m2: np.ndarray
    wind_ms: np.ndarray
    temp_c: np.ndarray
    carbon_kg_per_kwh: np.ndarray
    _timestamps: list[datetime] = field(default_factory=list, repr=False)

    @property
    def intervals(self) -> int:
        return self.spec.intervals

    def timestamps(self) -> list[datetime]:
        if not self._timestamps:
            step = timedelta(minutes=self.spec.interval_minutes)
            self._timestamps = [self.spec.start + step * i for i in range(self.intervals)]
        return self._timestamps

    def total_kwh(self, vector: Vector) -> float:
        return float(self.demand_kwh[vector].sum())

    def carbon_series(self) -> TimeSeries:
        return TimeSeries(
            start=self.spec.start,
            values=tuple(self.carbon_kg_per_kwh),
            interval_minutes=self.spec.interval_minutes,
            unit="kg_per_kwh",
        )

    def weather_records(self) -> list[WeatherRecord]:
        return [
            WeatherRecord(ts, float(g), float(w), float(t))
            for ts, g, w, t in zip(self.timestamps(), self.ghi_w_m2, self.wind_ms, self.temp_c)
        ]

    def iter_readings(self) -> Iterator[MeterReading]:
        """Readings in (timestamp, meter_id, vector) order."""
        stamps = self.timestamps()
        vectors = [v for v in Vector if v in self.demand_kwh]
        order = sorted(range(len(self.meter_ids)), key=lambda i: self.meter_ids[i])
        for t, ts in enumerate(stamps):
            for m in order:
                for vec in vectors:
                    yield MeterReading(self.meter_ids[m], vec, ts, float(self.demand_kwh[vec][m, t]))

    def write_telemetry_csv(self, path: Union[str, Path]) -> int:
        count = 0
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["meter_id", "vector", "timestamp", "value_kwh"])
            for reading in self.iter_readings():
                writer.writerow(
                    [
                        reading.meter_id,
                        reading.vector.value,
                        reading.timestamp.isoformat(),
                        f"{reading.value_kwh:.6f}",
                    ]
                )
                count += 1
        return count

    def write_weather_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["timestamp", "ghi_w_m2", "wind_ms", "temp_c"])
            for rec in self.weather_records():
                writer.writerow(
                    [rec.timestamp.isoformat(), f"{rec.ghi_w_m2:.3f}", f"{rec.wind_ms:.3f}", f"{rec.temp_c:.3f}"]
                )

    def write_carbon_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["timestamp", "kg_per_kwh"])
            for ts, value in zip(self.timestamps(), self.carbon_kg_per_kwh):
                writer.writerow([ts.isoformat(), f"{value:.6f}"])


def _interval_grid(spec: GenerationSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(hour-of-day, weekday flag, day-of-year fraction) arrays, one per interval."""
    step_h = spec.interval_minutes / 60.0
    idx = np.arange(spec.intervals)
    minutes = idx * spec.interval_minutes
    start = spec.start
    hour = ((start.hour + start.minute / 60.0) + idx * step_h) % 24.0
    day_index = (np.floor((start.hour * 60 + start.minute + minutes) / (24 * 60))).astype(int)
    weekday0 = start.weekday()
    is_weekday = ((weekday0 + day_index) % 7) < 5
    doy = ((start.timetuple().tm_yday - 1 + day_index) % 365) / 365.0
    return hour, is_weekday, doy


def _demand_matrix(spec: GenerationSpec, seed: int, vector: Vector, target_kwh: float) -> np.ndarray:
    peak_hour, swing, weekend_factor = _VECTOR_SHAPE[vector]
    rng = np.random.default_rng([seed, list(Vector).index(vector)])
    hour, is_weekday, doy = _interval_grid(spec)

    base = rng.uniform(0.5, 1.5, size=spec.meters)
    phase = rng.uniform(-1.5, 1.5, size=spec.meters)
    diurnal = 1.0 + swing * np.cos(2 * np.pi * (hour[None, :] - peak_hour - phase[:, None]) / 24.0)
    week = np.where(is_weekday, 1.0, weekend_factor)[None, :]
    seasonal = 1.0
    if vector in (Vector.HEAT, Vector.GAS):
        seasonal = 1.0 + 0.45 * np.cos(2 * np.pi * (doy - 0.04))[None, :]
    noise = 1.0 + 0.15 * rng.standard_normal((spec.meters, spec.intervals))
    matrix = np.clip(base[:, None] * diurnal * week * seasonal * noise, 0.0, None)

    period_target = target_kwh * spec.days / 365.0
    total = matrix.sum()
    if total > 0:
        matrix *= period_target / total
    return matrix


def generate_synthetic_profiles(spec: GenerationSpec, seed: int) -> SyntheticDataset:
    """Deterministic synthetic dataset for (spec, seed).

    The generated period total equals annual_target * days / 365 exactly per
    vector, so the annualized demand hits the target.
    """
    hour, _, doy = _interval_grid(spec)
    meter_ids = tuple(f"M{i + 1:04d}" for i in range(spec.meters))

    demand: dict[Vector, np.ndarray] = {}
    targets = {
        Vector.ELECTRIC: spec.annual_electric_kwh,
        Vector.HEAT: spec.annual_heat_kwh,
        Vector.GAS: spec.annual_gas_kwh,
    }
    for vector, target in targets.items():
        if target > 0:
            demand[vector] = _demand_matrix(spec, seed, vector, target)

    wrng = np.random.default_rng([seed, 10])
    elevation = np.sin(np.pi * np.clip((hour - 6.0) / 12.0, 0.0, 1.0))
    season = 0.65 + 0.35 * np.cos(2 * np.pi * (doy - 0.47))
    day_index = np.minimum((np.arange(spec.intervals) * spec.interval_minutes) // (24 * 60), spec.days - 1)
    cloud_daily = wrng.uniform(0.25, 1.0, size=spec.days)
    cloud = cloud_daily[day_index] * (1.0 - 0.15 * wrng.random(spec.intervals))
    ghi = np.clip(1000.0 * elevation * season * cloud, 0.0, None)

    steps = wrng.standard_normal(spec.intervals)
    wind = np.empty(spec.intervals)
    level = 7.0
    alpha = 0.92
    for i in range(spec.intervals):
        level = alpha * level + (1 - alpha) * 7.0 + 1.1 * steps[i]
        wind[i] = max(level, 0.0)

    temp = (
        9.0
        + 7.5 * np.cos(2 * np.pi * (doy - 0.55))
        + 3.5 * np.cos(2 * np.pi * (hour - 15.0) / 24.0)
        + 0.6 * wrng.standard_normal(spec.intervals)
    )

    crng = np.random.default_rng([seed, 11])
    carbon = 0.225 + 0.125 * np.cos(2 * np.pi * (hour - 17.0) / 24.0)
    carbon = np.clip(carbon + 0.008 * crng.standard_normal(spec.intervals), 0.10, 0.35)

    return SyntheticDataset(
        spec=spec,
        seed=seed,
        meter_ids=meter_ids,
        demand_kwh=demand,
        ghi_w_m2=ghi,
        wind_ms=wind,
        temp_c=temp,
        carbon_kg_per_kwh=carbon,
    )


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------

def ingest_csv(path: Union[str, Path]) -> SeriesCollection:
    """Read a telemetry CSV into one TimeSeries per (meter_id, vector).

    Gaps in a series become NaN markers; they are never interpolated.
    """
    rows: dict[SeriesKey, list[tuple[datetime, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["meter_id", "vector", "timestamp", "value_kwh"]:
            raise MalformedRowError(f"{path}: bad or missing header")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise MalformedRowError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            meter_id, vector_token, stamp, value = (cell.strip() for cell in row)
            try:
                vector = Vector(vector_token)
            except ValueError:
                raise UnknownVectorError(f"{path}:{lineno}: unknown vector {vector_token!r}") from None
            try:
                ts = parse_timestamp(stamp)
                # empty value cell = explicit gap marker
                kwh = math.nan if value == "" else float(value)
            except ValueError as exc:
                raise MalformedRowError(f"{path}:{lineno}: {exc}") from None
            if kwh < 0:
                raise MalformedRowError(f"{path}:{lineno}: value_kwh must be >= 0")
            series = rows.setdefault((meter_id, vector), [])
            if series and ts <= series[-1][0]:
                raise NonMonotoneError(
                    f"{path}:{lineno}: timestamp {stamp} not after previous reading for "
                    f"({meter_id}, {vector.value})"
                )
            series.append((ts, kwh))

    collection: SeriesCollection = {}
    for key, points in rows.items():
        start = points[0][0]
        # gcd of the gap-spanning diffs recovers the grid; a lone diff cannot
        # distinguish "coarse series" from "fine series with a gap"
        interval_minutes = 30
        diffs = []
        for (a, _), (b, _) in zip(points, points[1:]):
            minutes = (b - a).total_seconds() / 60.0
            if minutes != int(minutes):
                raise MalformedRowError(f"{key}: cannot infer a whole-minute interval")
            diffs.append(int(minutes))
        if diffs:
            interval_minutes = math.gcd(*diffs)
        values: list[float] = []
        for ts, kwh in points:
            offset = (ts - start).total_seconds() / 60.0
            slots = offset / interval_minutes
            if abs(slots - round(slots)) > 1e-9:
                raise MalformedRowError(f"{key}: timestamp {ts.isoformat()} off the interval grid")
            slot = int(round(slots))
            while len(values) < slot:
                values.append(math.nan)
            values.append(kwh)
        collection[key] = TimeSeries(start=start, values=tuple(values), interval_minutes=interval_minutes)
    return collection


def write_csv(collection: SeriesCollection, path: Union[str, Path]) -> None:
    """Write a series collection in the telemetry CSV format.

    Gaps become rows with an empty value cell, so every slot is written and
    ingest_csv(write_csv(x)) reproduces x exactly.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["meter_id", "vector", "timestamp", "value_kwh"])
        for (meter_id, vector), series in sorted(collection.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
            for i, value in enumerate(series.values):
                cell = "" if math.isnan(value) else repr(value)
                writer.writerow([meter_id, vector.value, series.timestamp(i).isoformat(), cell])


# --------------------------------------------------------------------------
# Replay
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplaySummary:
    delivered: int
    first: datetime | None
    last: datetime | None


def replay(
    readings: Union[SyntheticDataset, Iterator[MeterReading], list[MeterReading]],
    clock: ReplayClock,
    sink: Callable[[MeterReading], None],
) -> ReplaySummary:
    """Deliver readings to ``sink`` in (timestamp, meter_id) order, paced by ``clock``.

    Delivery order is identical at any speed; only the pacing changes.
    """
    if isinstance(readings, SyntheticDataset):
        stream = list(readings.iter_readings())
    else:
        stream = list(readings)
    stream.sort(key=lambda r: (r.timestamp, r.meter_id, r.vector.value))
    first = last = None
    for reading in stream:
        clock.advance_to(reading.timestamp)
        sink(reading)
        if first is None:
            first = reading.timestamp
        last = reading.timestamp
    return ReplaySummary(delivered=len(stream), first=first, last=last)
