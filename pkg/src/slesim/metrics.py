"""Energy-balance decomposition and the KPI arithmetic behind the dashboards.

Self-sufficiency is the share of demand met by on-site generation consumed
directly; self-consumption is the share of on-site generation consumed
directly rather than exported. Carbon saved credits directly used renewables
at a configurable displaced-grid intensity.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .telemetry import TimeSeries

# Default displaced-grid intensity for carbon-saved credits; override per
# deployment to match the local supply mix.
DEFAULT_DISPLACED_INTENSITY_KG_PER_KWH = 0.276138


class MetricsError(Exception):
    """Base class for KPI computation errors."""


class MisalignedSeriesError(MetricsError):
    """Generation and demand series do not share a grid."""


class ZeroDenominatorError(MetricsError):
    """Ratio KPI requested on an all-zero base quantity."""


@dataclass(frozen=True)
class EnergyBalanceBreakdown:
    """kWh totals over one window; direct + feed_in = generation and
    direct + grid_draw = demand hold by construction."""

    demand_kwh: float
    generation_kwh: float
    direct_consumption_kwh: float
    feed_in_kwh: float
    grid_draw_kwh: float

    def combine(self, other: "EnergyBalanceBreakdown") -> "EnergyBalanceBreakdown":
        return EnergyBalanceBreakdown(
            demand_kwh=self.demand_kwh + other.demand_kwh,
            generation_kwh=self.generation_kwh + other.generation_kwh,
            direct_consumption_kwh=self.direct_consumption_kwh + other.direct_consumption_kwh,
            feed_in_kwh=self.feed_in_kwh + other.feed_in_kwh,
            grid_draw_kwh=self.grid_draw_kwh + other.grid_draw_kwh,
        )


@dataclass(frozen=True)
class KpiReport:
    entity: str
    window_start: datetime
    window_end: datetime
    self_sufficiency_pct: float
    self_consumption_pct: float
    renewables_used_kwh: float
    energy_saved_kwh: float
    carbon_saved_kg: float


def decompose_flows(gen: TimeSeries, demand: TimeSeries) -> EnergyBalanceBreakdown:
    """Split aligned kW series into direct use, feed-in and grid draw (kWh).

    Per interval: direct = min(gen, demand), feed_in = max(gen - demand, 0),
    draw = max(demand - gen, 0); energies via the interval length.
    """
    if (
        gen.start != demand.start
        or gen.interval_minutes != demand.interval_minutes
        or len(gen) != len(demand)
    ):
        raise MisalignedSeriesError(
            f"series differ in start/interval/length: "
            f"({gen.start}, {gen.interval_minutes}m, {len(gen)}) vs "
            f"({demand.start}, {demand.interval_minutes}m, {len(demand)})"
        )
    g = np.asarray(gen.values, dtype=float)
    d = np.asarray(demand.values, dtype=float)
    hours = gen.interval_minutes / 60.0
    direct = np.minimum(g, d)
    feed_in = np.maximum(g - d, 0.0)
    draw = np.maximum(d - g, 0.0)
    return EnergyBalanceBreakdown(
        demand_kwh=float(d.sum() * hours),
        generation_kwh=float(g.sum() * hours),
        direct_consumption_kwh=float(direct.sum() * hours),
        feed_in_kwh=float(feed_in.sum() * hours),
        grid_draw_kwh=float(draw.sum() * hours),
    )


def breakdown_from_arrays(gen_kw: np.ndarray, demand_kw: np.ndarray, interval_minutes: int) -> EnergyBalanceBreakdown:
    """decompose_flows for raw arrays already known to be aligned."""
    hours = interval_minutes / 60.0
    g = np.asarray(gen_kw, dtype=float)
    d = np.asarray(demand_kw, dtype=float)
    return EnergyBalanceBreakdown(
        demand_kwh=float(d.sum() * hours),
        generation_kwh=float(g.sum() * hours),
        direct_consumption_kwh=float(np.minimum(g, d).sum() * hours),
        feed_in_kwh=float(np.maximum(g - d, 0.0).sum() * hours),
        grid_draw_kwh=float(np.maximum(d - g, 0.0).sum() * hours),
    )


def self_sufficiency(b: EnergyBalanceBreakdown) -> float:
    """Share of demand met by directly consumed on-site generation, in percent."""
    if b.demand_kwh <= 0:
        raise ZeroDenominatorError("self_sufficiency undefined for zero demand")
    return 100.0 * b.direct_consumption_kwh / b.demand_kwh


def self_consumption(b: EnergyBalanceBreakdown) -> float:
    """Share of on-site generation consumed directly, in percent."""
    if b.generation_kwh <= 0:
        raise ZeroDenominatorError("self_consumption undefined for zero generation")
    return 100.0 * b.direct_consumption_kwh / b.generation_kwh


def carbon_saved(renewables_used_kwh: float, displaced_intensity: float) -> float:
    """kg CO2 avoided by consuming renewables instead of grid electricity."""
    if renewables_used_kwh < 0 or displaced_intensity < 0:
        raise MetricsError("carbon_saved arguments must be >= 0")
    return renewables_used_kwh * displaced_intensity


def kpi_report(
    entity: str,
    window: tuple[datetime, datetime],
    breakdown: EnergyBalanceBreakdown,
    energy_saved_kwh: float = 0.0,
    displaced_intensity: float = DEFAULT_DISPLACED_INTENSITY_KG_PER_KWH,
) -> KpiReport:
    """Assemble the per-entity KPI triple plus the SS/SC ratios.

    Zero-activity entities report 0% rather than raising; renewables used is
    the entity's directly consumed generation.
    """
    renewables_used = breakdown.direct_consumption_kwh
    ss = self_sufficiency(breakdown) if breakdown.demand_kwh > 0 else 0.0
    sc = self_consumption(breakdown) if breakdown.generation_kwh > 0 else 0.0
    return KpiReport(
        entity=entity,
        window_start=window[0],
        window_end=window[1],
        self_sufficiency_pct=ss,
        self_consumption_pct=sc,
        renewables_used_kwh=renewables_used,
        energy_saved_kwh=energy_saved_kwh,
        carbon_saved_kg=carbon_saved(renewables_used, displaced_intensity),
    )


KPI_CSV_HEADER = [
    "entity",
    "window_start",
    "window_end",
    "ss_pct",
    "sc_pct",
    "renewables_kwh",
    "energy_saved_kwh",
    "carbon_kg",
]


def write_kpi_csv(reports: Iterable[KpiReport], path: Union[str, Path]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(KPI_CSV_HEADER)
        for r in reports:
            writer.writerow(
                [
                    r.entity,
                    r.window_start.isoformat(),
                    r.window_end.isoformat(),
                    f"{r.self_sufficiency_pct:.4f}",
                    f"{r.self_consumption_pct:.4f}",
                    f"{r.renewables_used_kwh:.4f}",
                    f"{r.energy_saved_kwh:.4f}",
                    f"{r.carbon_saved_kg:.4f}",
                ]
            )


def kpi_report_to_dict(r: KpiReport) -> dict:
    return {
        "entity": r.entity,
        "window_start": r.window_start.isoformat(),
        "window_end": r.window_end.isoformat(),
        "ss_pct": r.self_sufficiency_pct,
        "sc_pct": r.self_consumption_pct,
        "renewables_kwh": r.renewables_used_kwh,
        "energy_saved_kwh": r.energy_saved_kwh,
        "carbon_kg": r.carbon_saved_kg,
    }
