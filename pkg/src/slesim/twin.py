"""What-if scenario engine over the full simulation pipeline.

A scenario is a closed set of overrides (weather/carbon substitution, demand
scaling, asset and switch changes, strategy choice) applied to a baseline
configuration. Running one executes telemetry -> dispatch -> power flow ->
KPIs deterministically; identical (config, scenario, seed) triples produce
identical results, recorded by a provenance hash. Network modifications can
be rehearsed on a copy before being committed to the live system.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from typing import Mapping, Optional, Sequence

import numpy as np

from .dispatch import (
    BatteryState,
    DispatchProblem,
    DispatchSchedule,
    FlexLoad,
    SimulatedTimeline,
    SimulationInputs,
    baseline_schedule,
    optimize_co2,
    simulate_schedule,
)
from .metrics import (
    DEFAULT_DISPLACED_INTENSITY_KG_PER_KWH,
    KpiReport,
    breakdown_from_arrays,
    kpi_report,
)
from .network import (
    Asset,
    AssetKind,
    Line,
    NetworkError,
    NetworkTopology,
    SwitchState,
    ValidationReport,
    energized_buses,
    load_network,
    validate_topology,
)
from .powerflow import (
    DcSolver,
    NonRadialPathError,
    check_line_limits,
    dc_power_flow,
    default_injections,
    fault_current_3ph,
    restore_after_outage,
)
from .telemetry import (
    GenerationSpec,
    Vector,
    generate_synthetic_profiles,
    ingest_csv,
    parse_timestamp,
    pv_output,
    wind_output,
)

LOAD_ASSET_KINDS = (AssetKind.FIXED_LOAD, AssetKind.FLEXIBLE_LOAD)


class TwinError(Exception):
    """Base class for scenario-engine errors."""


class InvalidOverrideError(TwinError):
    """Scenario override references an unknown entity or has a bad value."""


class WindowMismatchError(TwinError):
    """Results being compared cover different windows or entity sets."""


@dataclass(frozen=True)
class PipelineConfig:
    """Baseline run configuration. ``network`` is a network document."""

    network: dict
    seed: int = 42
    start: str = "2022-06-06T00:00:00+00:00"
    days: int = 7
    interval_minutes: int = 30
    meters: int = 1500
    annual_electric_kwh: float = 10.5e6
    annual_heat_kwh: float = 30.5e6
    annual_gas_kwh: float = 22.0e6
    strategy: str = "lp"
    forecast_sigma: float = 0.0
    displaced_intensity: float = DEFAULT_DISPLACED_INTENSITY_KG_PER_KWH
    telemetry_csv: Optional[str] = None
    weather_csv: Optional[str] = None
    carbon_csv: Optional[str] = None

    def start_instant(self) -> datetime:
        return parse_timestamp(self.start)


@dataclass(frozen=True)
class Scenario:
    """Closed override set; anything not listed here is not overridable."""

    name: str = "baseline"
    demand_scale: Mapping[str, float] = field(default_factory=dict)
    switch_overrides: Mapping[str, str] = field(default_factory=dict)
    add_assets: tuple[dict, ...] = ()
    remove_assets: tuple[str, ...] = ()
    rerate_assets: Mapping[str, float] = field(default_factory=dict)
    weather_csv: Optional[str] = None
    carbon_csv: Optional[str] = None
    strategy: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "demand_scale", dict(self.demand_scale))
        object.__setattr__(self, "switch_overrides", dict(self.switch_overrides))
        object.__setattr__(self, "add_assets", tuple(dict(a) for a in self.add_assets))
        object.__setattr__(self, "remove_assets", tuple(self.remove_assets))
        object.__setattr__(self, "rerate_assets", dict(self.rerate_assets))
        for building, factor in self.demand_scale.items():
            if factor < 0:
                raise InvalidOverrideError(f"demand scale for {building!r} must be >= 0")
        for asset, rating in self.rerate_assets.items():
            if rating < 0:
                raise InvalidOverrideError(f"re-rating for {asset!r} must be >= 0")


IDENTITY_SCENARIO = Scenario()


@dataclass(frozen=True)
class PowerFlowSummary:
    worst_line_id: Optional[str]
    worst_loading_pct: float
    worst_interval: int
    violations: tuple[tuple[int, str, float, float], ...]


@dataclass(frozen=True)
class DispatchSummary:
    strategy: str
    total_co2_kg: float
    baseline_co2_kg: float
    clamp_count: int


@dataclass(frozen=True)
class ScenarioResult:
    scenario_name: str
    window_start: datetime
    window_end: datetime
    kpis: tuple[KpiReport, ...]
    powerflow: PowerFlowSummary
    dispatch: DispatchSummary
    provenance: str

    def kpi_for(self, entity: str) -> KpiReport:
        for report in self.kpis:
            if report.entity == entity:
                return report
        raise KeyError(entity)


@dataclass(frozen=True)
class ScenarioDiff:
    """Field-wise deltas b - a between two scenario results."""

    kpi_deltas: Mapping[str, Mapping[str, float]]
    co2_delta_kg: float
    baseline_co2_delta_kg: float
    worst_loading_delta_pct: float
    violations_added: tuple[tuple[int, str], ...]
    violations_removed: tuple[tuple[int, str], ...]

    @property
    def is_zero(self) -> bool:
        if self.violations_added or self.violations_removed:
            return False
        if any((self.co2_delta_kg, self.baseline_co2_delta_kg, self.worst_loading_delta_pct)):
            return False
        return all(v == 0.0 for fields in self.kpi_deltas.values() for v in fields.values())


def _canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "name": s.name,
        "demand_scale": dict(s.demand_scale),
        "switch_overrides": dict(s.switch_overrides),
        "add_assets": [dict(a) for a in s.add_assets],
        "remove_assets": list(s.remove_assets),
        "rerate_assets": dict(s.rerate_assets),
        "weather_csv": s.weather_csv,
        "carbon_csv": s.carbon_csv,
        "strategy": s.strategy,
    }


def scenario_from_dict(raw: dict) -> Scenario:
    unknown = set(raw) - set(scenario_to_dict(Scenario()))
    if unknown:
        raise InvalidOverrideError(f"unknown scenario fields: {sorted(unknown)}")
    return Scenario(
        name=str(raw.get("name", "scenario")),
        demand_scale={k: float(v) for k, v in raw.get("demand_scale", {}).items()},
        switch_overrides={k: str(v) for k, v in raw.get("switch_overrides", {}).items()},
        add_assets=tuple(raw.get("add_assets", ())),
        remove_assets=tuple(raw.get("remove_assets", ())),
        rerate_assets={k: float(v) for k, v in raw.get("rerate_assets", {}).items()},
        weather_csv=raw.get("weather_csv"),
        carbon_csv=raw.get("carbon_csv"),
        strategy=raw.get("strategy"),
    )


def config_to_dict(c: PipelineConfig) -> dict:
    return {
        "network": c.network,
        "seed": c.seed,
        "start": c.start,
        "days": c.days,
        "interval_minutes": c.interval_minutes,
        "meters": c.meters,
        "annual_electric_kwh": c.annual_electric_kwh,
        "annual_heat_kwh": c.annual_heat_kwh,
        "annual_gas_kwh": c.annual_gas_kwh,
        "strategy": c.strategy,
        "forecast_sigma": c.forecast_sigma,
        "displaced_intensity": c.displaced_intensity,
        "telemetry_csv": c.telemetry_csv,
        "weather_csv": c.weather_csv,
        "carbon_csv": c.carbon_csv,
    }


def config_from_dict(raw: dict) -> PipelineConfig:
    return PipelineConfig(
        network=raw["network"],
        seed=int(raw.get("seed", 42)),
        start=str(raw.get("start", "2022-06-06T00:00:00+00:00")),
        days=int(raw.get("days", 7)),
        interval_minutes=int(raw.get("interval_minutes", 30)),
        meters=int(raw.get("meters", 1500)),
        annual_electric_kwh=float(raw.get("annual_electric_kwh", 10.5e6)),
        annual_heat_kwh=float(raw.get("annual_heat_kwh", 30.5e6)),
        annual_gas_kwh=float(raw.get("annual_gas_kwh", 22.0e6)),
        strategy=str(raw.get("strategy", "lp")),
        forecast_sigma=float(raw.get("forecast_sigma", 0.0)),
        displaced_intensity=float(raw.get("displaced_intensity", DEFAULT_DISPLACED_INTENSITY_KG_PER_KWH)),
        telemetry_csv=raw.get("telemetry_csv"),
        weather_csv=raw.get("weather_csv"),
        carbon_csv=raw.get("carbon_csv"),
    )


def apply_scenario_to_network(net: NetworkTopology, s: Scenario) -> NetworkTopology:
    """Value-semantics application of the network-affecting overrides."""
    line_ids = set(net.line_map)
    asset_ids = {a.id for a in net.assets}
    for line_id, state in s.switch_overrides.items():
        if line_id not in line_ids:
            raise InvalidOverrideError(f"switch override references unknown line {line_id!r}")
        if state not in (SwitchState.CLOSED.value, SwitchState.OPEN.value):
            raise InvalidOverrideError(f"bad switch state {state!r} for line {line_id!r}")
    for asset_id in list(s.remove_assets) + list(s.rerate_assets):
        if asset_id not in asset_ids:
            raise InvalidOverrideError(f"override references unknown asset {asset_id!r}")

    lines = tuple(
        replace(ln, switch_state=SwitchState(s.switch_overrides[ln.id]))
        if ln.id in s.switch_overrides
        else ln
        for ln in net.lines
    )
    assets = [a for a in net.assets if a.id not in s.remove_assets]
    assets = [
        replace(a, rating_kw=s.rerate_assets[a.id]) if a.id in s.rerate_assets else a
        for a in assets
    ]
    for raw in s.add_assets:
        try:
            assets.append(
                Asset(
                    id=str(raw["id"]),
                    bus=str(raw["bus"]),
                    kind=AssetKind(raw["kind"]),
                    rating_kw=float(raw["rating_kw"]),
                    extra={k: float(v) for k, v in raw.get("extra", {}).items()},
                )
            )
        except (KeyError, ValueError) as exc:
            raise InvalidOverrideError(f"bad asset addition {raw.get('id')!r}: {exc}") from exc
    try:
        return replace(net, lines=lines, assets=tuple(assets))
    except NetworkError as exc:
        raise InvalidOverrideError(str(exc)) from exc


def _assign_meters(buildings: Sequence[Asset], n_meters: int) -> dict[str, list[int]]:
    """Deterministic meter-to-building roster, proportional to rating."""
    total = sum(a.rating_kw for a in buildings) or 1.0
    counts = {a.id: int(n_meters * a.rating_kw / total) for a in buildings}
    assigned = sum(counts.values())
    order = sorted(a.id for a in buildings)
    for k in range(n_meters - assigned):
        counts[order[k % len(order)]] += 1
    roster: dict[str, list[int]] = {}
    cursor = 0
    for asset_id in order:
        roster[asset_id] = list(range(cursor, cursor + counts[asset_id]))
        cursor += counts[asset_id]
    return roster


def _read_weather_csv(path: str, expect: int) -> tuple[np.ndarray, np.ndarray]:
    import csv as _csv

    ghi, wind = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv.DictReader(fh)
        for row in reader:
            ghi.append(float(row["ghi_w_m2"]))
            wind.append(float(row["wind_ms"]))
    if len(ghi) != expect:
        raise WindowMismatchError(f"weather series has {len(ghi)} rows, expected {expect}")
    return np.asarray(ghi), np.asarray(wind)


def _read_carbon_csv(path: str, expect: int) -> np.ndarray:
    import csv as _csv

    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv.DictReader(fh)
        for row in reader:
            values.append(float(row["kg_per_kwh"]))
    if len(values) != expect:
        raise WindowMismatchError(f"carbon series has {len(values)} rows, expected {expect}")
    return np.asarray(values)


@dataclass(frozen=True)
class PipelineArtifacts:
    """Everything a run produced; ScenarioResult is the condensed view."""

    result: "ScenarioResult"
    problem: DispatchProblem
    schedule: DispatchSchedule
    timeline: SimulatedTimeline
    actuals: SimulationInputs
    net: NetworkTopology
    timestamps: tuple[datetime, ...]
    line_flows_kw: Mapping[str, np.ndarray]


def _renewable_series(asset: Asset, ghi: np.ndarray, wind: np.ndarray) -> np.ndarray:
    if asset.kind is AssetKind.PV:
        dc = float(asset.extra.get("dc_kw", asset.rating_kw))
        derate = float(asset.extra.get("derate", 0.9))
        return pv_output(dc, asset.rating_kw, derate, ghi)
    if asset.kind is AssetKind.WIND:
        return wind_output(
            asset.rating_kw,
            float(asset.extra.get("cut_in_ms", 3.0)),
            float(asset.extra.get("rated_ms", 12.0)),
            float(asset.extra.get("cut_out_ms", 25.0)),
            wind,
        )
    raise InvalidOverrideError(f"asset {asset.id!r} is not a renewable generator")


def run_pipeline(
    config: PipelineConfig,
    scenario: Scenario = IDENTITY_SCENARIO,
    seed: Optional[int] = None,
) -> PipelineArtifacts:
    """Full deterministic pipeline; run_scenario returns its condensed result."""
    run_seed = config.seed if seed is None else seed
    provenance = hashlib.sha256(
        _canonical_json(
            {"config": config_to_dict(config), "scenario": scenario_to_dict(scenario), "seed": run_seed}
        ).encode("utf-8")
    ).hexdigest()

    net = apply_scenario_to_network(load_network(dict(config.network)), scenario)
    energized = energized_buses(net)

    spec = GenerationSpec(
        meters=config.meters,
        start=config.start_instant(),
        days=config.days,
        interval_minutes=config.interval_minutes,
        annual_electric_kwh=config.annual_electric_kwh,
        annual_heat_kwh=config.annual_heat_kwh,
        annual_gas_kwh=config.annual_gas_kwh,
    )
    dataset = generate_synthetic_profiles(spec, run_seed)
    T = spec.intervals
    dt_hours = config.interval_minutes / 60.0
    timestamps = tuple(dataset.timestamps())

    ghi = dataset.ghi_w_m2
    wind = dataset.wind_ms
    carbon = dataset.carbon_kg_per_kwh
    weather_path = scenario.weather_csv or config.weather_csv
    if weather_path:
        ghi, wind = _read_weather_csv(weather_path, T)
    carbon_path = scenario.carbon_csv or config.carbon_csv
    if carbon_path:
        carbon = _read_carbon_csv(carbon_path, T)

    if config.telemetry_csv:
        collection = ingest_csv(config.telemetry_csv)
        electric = {
            meter: np.nan_to_num(np.asarray(series.values), nan=0.0)
            for (meter, vector), series in collection.items()
            if vector is Vector.ELECTRIC
        }
        if not electric:
            raise WindowMismatchError("telemetry file contains no electric series")
        meter_matrix = np.vstack([electric[m] for m in sorted(electric)])
        if meter_matrix.shape[1] != T:
            raise WindowMismatchError(
                f"telemetry covers {meter_matrix.shape[1]} intervals, expected {T}"
            )
    else:
        meter_matrix = dataset.demand_kwh[Vector.ELECTRIC]

    buildings = sorted(
        (a for a in net.assets if a.kind in LOAD_ASSET_KINDS), key=lambda a: a.id
    )
    building_ids = {a.id for a in buildings}
    for building in sorted(scenario.demand_scale):
        if building not in building_ids:
            raise InvalidOverrideError(f"demand scale references unknown building {building!r}")

    roster = _assign_meters(buildings, meter_matrix.shape[0])
    demand_kw: dict[str, np.ndarray] = {}
    for asset in buildings:
        if asset.bus not in energized:
            continue  # disconnected building: no load served, zero KPI
        rows = roster[asset.id]
        series = meter_matrix[rows].sum(axis=0) / dt_hours if rows else np.zeros(T)
        series = series * scenario.demand_scale.get(asset.id, 1.0)
        demand_kw[asset.id] = series

    renewable_kw: dict[str, np.ndarray] = {}
    for asset in net.assets:
        if asset.kind in (AssetKind.PV, AssetKind.WIND) and asset.bus in energized:
            renewable_kw[asset.id] = _renewable_series(asset, ghi, wind)

    battery = None
    for asset in net.assets:
        if asset.kind is AssetKind.BATTERY and asset.bus in energized:
            capacity = float(asset.extra.get("capacity_kwh", 2.0 * asset.rating_kw))
            battery = BatteryState(
                soc_kwh=capacity / 2.0,
                capacity_kwh=capacity,
                power_limit_kw=asset.rating_kw,
                eta_charge=float(asset.extra.get("eta_charge", 0.95)),
                eta_discharge=float(asset.extra.get("eta_discharge", 0.95)),
                asset_id=asset.id,
            )
            break

    flexible = tuple(
        FlexLoad(asset_id=a.id, shiftable_fraction=float(a.extra.get("shiftable_fraction", 0.2)))
        for a in buildings
        if a.kind is AssetKind.FLEXIBLE_LOAD and a.id in demand_kw
    )
    emission_factors = {a.id: a.emission_factor for a in net.assets if a.emission_factor > 0}

    rng_demand = np.random.default_rng([run_seed, 20])
    rng_renew = np.random.default_rng([run_seed, 21])
    sigma = config.forecast_sigma

    def noisy(series: np.ndarray, rng: np.random.Generator) -> tuple[float, ...]:
        if sigma <= 0:
            return tuple(series)
        return tuple(np.maximum(series * (1.0 + sigma * rng.standard_normal(len(series))), 0.0))

    problem = DispatchProblem(
        interval_minutes=config.interval_minutes,
        horizon=T,
        demand_kw={b: noisy(s, rng_demand) for b, s in demand_kw.items()},
        renewable_kw={a: noisy(s, rng_renew) for a, s in renewable_kw.items()},
        grid_intensity=tuple(carbon),
        battery=battery,
        flexible=flexible,
        emission_factors=emission_factors,
    )
    strategy = scenario.strategy or config.strategy
    schedule = optimize_co2(problem, strategy=strategy)
    base = baseline_schedule(problem)

    actuals = SimulationInputs(
        demand_kw={b: tuple(s) for b, s in demand_kw.items()},
        renewable_kw={a: tuple(s) for a, s in renewable_kw.items()},
        grid_intensity=tuple(carbon),
    )
    timeline = simulate_schedule(problem, schedule, actuals)

    flows, pf_summary = _interval_power_flows(net, timeline, demand_kw, renewable_kw, battery)

    window = (timestamps[0], timestamps[-1] + timedelta(minutes=config.interval_minutes))
    kpis = _build_kpis(config, timeline, demand_kw, window)

    result = ScenarioResult(
        scenario_name=scenario.name,
        window_start=window[0],
        window_end=window[1],
        kpis=kpis,
        powerflow=pf_summary,
        dispatch=DispatchSummary(
            strategy=strategy,
            total_co2_kg=timeline.total_co2_kg,
            baseline_co2_kg=base.total_co2_kg,
            clamp_count=len(timeline.clamp_events),
        ),
        provenance=provenance,
    )
    return PipelineArtifacts(
        result=result,
        problem=problem,
        schedule=schedule,
        timeline=timeline,
        actuals=actuals,
        net=net,
        timestamps=timestamps,
        line_flows_kw=flows,
    )


def _interval_power_flows(
    net: NetworkTopology,
    timeline: SimulatedTimeline,
    demand_kw: Mapping[str, np.ndarray],
    renewable_kw: Mapping[str, np.ndarray],
    battery: Optional[BatteryState],
) -> tuple[dict[str, np.ndarray], PowerFlowSummary]:
    """One factorized DC solve over all intervals; returns per-line flow series."""
    solver = DcSolver(net)
    T = timeline.horizon
    n = len(solver.index)
    asset_bus = {a.id: a.bus for a in net.assets}
    injections = np.zeros((n, T))

    def bus_row(asset_id: str) -> Optional[int]:
        return solver.index.get(asset_bus[asset_id])

    for asset_id in demand_kw:
        row = bus_row(asset_id)
        if row is not None:
            injections[row] -= np.asarray(timeline.realized_demand_kw[asset_id])
    for asset_id, series in renewable_kw.items():
        row = bus_row(asset_id)
        if row is not None:
            injections[row] += np.asarray(series)
    if battery is not None:
        row = bus_row(battery.asset_id)
        if row is not None:
            injections[row] -= np.asarray(timeline.battery_kw)

    scale = net.base_mva * 1000.0
    theta = solver.solve_angles(injections / scale)
    flows: dict[str, np.ndarray] = {ln.id: np.zeros(T) for ln in net.lines}
    for ln in solver.active_lines:
        i = solver.index.get(ln.from_bus)
        j = solver.index.get(ln.to_bus)
        theta_from = theta[i] if i is not None else np.zeros(T)
        theta_to = theta[j] if j is not None else np.zeros(T)
        flows[ln.id] = (theta_from - theta_to) / ln.reactance_pu * scale

    worst_line, worst_pct, worst_t = None, 0.0, 0
    violations: list[tuple[int, str, float, float]] = []
    for ln in net.lines:
        series = np.abs(flows[ln.id])
        if not series.any():
            continue
        t = int(series.argmax())
        pct = 100.0 * float(series[t]) / ln.capacity_kw
        if pct > worst_pct:
            worst_line, worst_pct, worst_t = ln.id, pct, t
        over = np.nonzero(series > ln.capacity_kw)[0]
        for ti in over:
            violations.append((int(ti), ln.id, float(series[ti]), ln.capacity_kw))
    violations.sort()
    return flows, PowerFlowSummary(
        worst_line_id=worst_line,
        worst_loading_pct=worst_pct,
        worst_interval=worst_t,
        violations=tuple(violations),
    )


def _build_kpis(
    config: PipelineConfig,
    timeline: SimulatedTimeline,
    demand_kw: Mapping[str, np.ndarray],
    window: tuple[datetime, datetime],
) -> tuple[KpiReport, ...]:
    """Campus KPI plus per-building KPIs that sum back to the campus row.

    Generation is attributed to buildings in proportion to their share of
    interval demand, which preserves additivity of every breakdown field.
    """
    gen_total = timeline.total_renewable_kw
    demand_total = timeline.total_demand_kw
    interval_minutes = timeline.interval_minutes

    reports = [
        kpi_report(
            "campus",
            window,
            breakdown_from_arrays(gen_total, demand_total, interval_minutes),
            energy_saved_kwh=float(sum(timeline.energy_saved_kwh.values())),
            displaced_intensity=config.displaced_intensity,
        )
    ]
    safe_total = np.where(demand_total > 0, demand_total, 1.0)
    for building in sorted(demand_kw):
        series = np.asarray(timeline.realized_demand_kw[building])
        share = gen_total * (series / safe_total)
        reports.append(
            kpi_report(
                building,
                window,
                breakdown_from_arrays(share, series, interval_minutes),
                energy_saved_kwh=timeline.energy_saved_kwh.get(building, 0.0),
                displaced_intensity=config.displaced_intensity,
            )
        )
    return tuple(reports)


def run_scenario(
    config: PipelineConfig,
    scenario: Scenario = IDENTITY_SCENARIO,
    seed: Optional[int] = None,
) -> ScenarioResult:
    """Deterministic what-if run; see module docstring for the pipeline."""
    return run_pipeline(config, scenario, seed).result


def compare(a: ScenarioResult, b: ScenarioResult) -> ScenarioDiff:
    """Field-wise deltas b - a; violation sets diffed as added/removed."""
    if (a.window_start, a.window_end) != (b.window_start, b.window_end):
        raise WindowMismatchError("results cover different windows")
    entities_a = {r.entity for r in a.kpis}
    entities_b = {r.entity for r in b.kpis}
    if entities_a != entities_b:
        raise WindowMismatchError(
            f"entity sets differ: {sorted(entities_a ^ entities_b)}"
        )
    deltas: dict[str, dict[str, float]] = {}
    for report_b in b.kpis:
        report_a = a.kpi_for(report_b.entity)
        deltas[report_b.entity] = {
            "ss_pct": report_b.self_sufficiency_pct - report_a.self_sufficiency_pct,
            "sc_pct": report_b.self_consumption_pct - report_a.self_consumption_pct,
            "renewables_kwh": report_b.renewables_used_kwh - report_a.renewables_used_kwh,
            "energy_saved_kwh": report_b.energy_saved_kwh - report_a.energy_saved_kwh,
            "carbon_kg": report_b.carbon_saved_kg - report_a.carbon_saved_kg,
        }
    set_a = {(t, line) for t, line, _, _ in a.powerflow.violations}
    set_b = {(t, line) for t, line, _, _ in b.powerflow.violations}
    return ScenarioDiff(
        kpi_deltas=deltas,
        co2_delta_kg=b.dispatch.total_co2_kg - a.dispatch.total_co2_kg,
        baseline_co2_delta_kg=b.dispatch.baseline_co2_kg - a.dispatch.baseline_co2_kg,
        worst_loading_delta_pct=b.powerflow.worst_loading_pct - a.powerflow.worst_loading_pct,
        violations_added=tuple(sorted(set_b - set_a)),
        violations_removed=tuple(sorted(set_a - set_b)),
    )


# --------------------------------------------------------------------------
# Pre-commitment network modification rehearsal
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NetworkMods:
    switch_states: Mapping[str, str] = field(default_factory=dict)
    add_lines: tuple[dict, ...] = ()
    remove_lines: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "switch_states", dict(self.switch_states))
        object.__setattr__(self, "add_lines", tuple(dict(ln) for ln in self.add_lines))
        object.__setattr__(self, "remove_lines", tuple(self.remove_lines))


@dataclass(frozen=True)
class RestorationReadiness:
    failed: str
    restored_buses: int
    unserved_kw: float
    actions: int
    limit_safe: bool


@dataclass(frozen=True)
class WhatIfReport:
    validation: ValidationReport
    de_energized_buses: tuple[str, ...]
    limit_violations: tuple[tuple[str, float, float], ...]
    fault_currents_ka: Mapping[str, float]
    restoration: tuple[RestorationReadiness, ...]


def apply_mods(net: NetworkTopology, mods: NetworkMods) -> NetworkTopology:
    line_ids = set(net.line_map)
    for line_id in list(mods.switch_states) + list(mods.remove_lines):
        if line_id not in line_ids:
            raise InvalidOverrideError(f"modification references unknown line {line_id!r}")
    lines = [ln for ln in net.lines if ln.id not in mods.remove_lines]
    lines = [
        replace(ln, switch_state=SwitchState(mods.switch_states[ln.id]))
        if ln.id in mods.switch_states
        else ln
        for ln in lines
    ]
    for raw in mods.add_lines:
        try:
            lines.append(
                Line(
                    id=str(raw["id"]),
                    from_bus=str(raw["from_bus"]),
                    to_bus=str(raw["to_bus"]),
                    reactance_pu=float(raw["reactance_pu"]),
                    capacity_kw=float(raw["capacity_kw"]),
                    switch_state=SwitchState(raw.get("switch_state", "closed")),
                )
            )
        except (KeyError, ValueError) as exc:
            raise InvalidOverrideError(f"bad line addition {raw.get('id')!r}: {exc}") from exc
    try:
        return replace(net, lines=tuple(lines))
    except NetworkError as exc:
        raise InvalidOverrideError(str(exc)) from exc


def test_network_mod(
    net: NetworkTopology,
    mods: NetworkMods,
    outage_probes: Sequence[str] = (),
) -> WhatIfReport:
    """Rehearse modifications on a copy: validation, limits, fault levels and
    restoration readiness for the probed outages. The input topology is a
    frozen value and is never touched; committing is a separate explicit step.
    """
    candidate = apply_mods(net, mods)
    validation = validate_topology(candidate)
    energized = energized_buses(candidate)
    dead = tuple(sorted(b.id for b in candidate.buses if b.id not in energized))

    solution = dc_power_flow(candidate, default_injections(candidate))
    limit_violations = tuple(check_line_limits(solution, candidate))

    faults: dict[str, float] = {}
    for bus in sorted(energized):
        if bus == candidate.grid_source.id:
            continue
        try:
            faults[bus] = fault_current_3ph(candidate, bus).fault_current_ka
        except NonRadialPathError:
            continue

    readiness = []
    for probe in outage_probes:
        plan = restore_after_outage(candidate, probe)
        readiness.append(
            RestorationReadiness(
                failed=probe,
                restored_buses=len(plan.restored_buses),
                unserved_kw=plan.unserved_kw,
                actions=len(plan.actions),
                limit_safe=plan.limit_safe,
            )
        )
    return WhatIfReport(
        validation=validation,
        de_energized_buses=dead,
        limit_violations=limit_violations,
        fault_currents_ka=faults,
        restoration=tuple(readiness),
    )


# --------------------------------------------------------------------------
# Result serialization
# --------------------------------------------------------------------------

def result_to_dict(r: ScenarioResult) -> dict:
    from .metrics import kpi_report_to_dict

    return {
        "scenario_name": r.scenario_name,
        "window_start": r.window_start.isoformat(),
        "window_end": r.window_end.isoformat(),
        "kpis": [kpi_report_to_dict(k) for k in r.kpis],
        "powerflow": {
            "worst_line_id": r.powerflow.worst_line_id,
            "worst_loading_pct": r.powerflow.worst_loading_pct,
            "worst_interval": r.powerflow.worst_interval,
            "violations": [list(v) for v in r.powerflow.violations],
        },
        "dispatch": {
            "strategy": r.dispatch.strategy,
            "total_co2_kg": r.dispatch.total_co2_kg,
            "baseline_co2_kg": r.dispatch.baseline_co2_kg,
            "clamp_count": r.dispatch.clamp_count,
        },
        "provenance": r.provenance,
    }


def diff_to_dict(d: ScenarioDiff) -> dict:
    return {
        "kpi_deltas": {k: dict(v) for k, v in d.kpi_deltas.items()},
        "co2_delta_kg": d.co2_delta_kg,
        "baseline_co2_delta_kg": d.baseline_co2_delta_kg,
        "worst_loading_delta_pct": d.worst_loading_delta_pct,
        "violations_added": [list(v) for v in d.violations_added],
        "violations_removed": [list(v) for v in d.violations_removed],
    }


def whatif_to_dict(r: WhatIfReport) -> dict:
    return {
        "validation": {
            "ok": r.validation.ok,
            "radial_violations": [list(c) for c in r.validation.radial_violations],
            "unreachable_buses": list(r.validation.unreachable_buses),
            "capacity_warnings": [list(w) for w in r.validation.capacity_warnings],
        },
        "de_energized_buses": list(r.de_energized_buses),
        "limit_violations": [list(v) for v in r.limit_violations],
        "fault_currents_ka": dict(r.fault_currents_ka),
        "restoration": [
            {
                "failed": x.failed,
                "restored_buses": x.restored_buses,
                "unserved_kw": x.unserved_kw,
                "actions": x.actions,
                "limit_safe": x.limit_safe,
            }
            for x in r.restoration
        ],
    }
