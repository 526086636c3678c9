"""Carbon-minimizing dispatch of battery storage and flexible building load.

Two bundled strategies sit behind one registry so third-party optimizers can
be plugged in by name:

* ``greedy``  - intensity-sorted battery arbitrage plus surplus-matching load
  shifting. Fast, near-optimal on realistic signals.
* ``lp``      - the exact linear program over the full constraint set
  (battery power/SoC, flexible-load energy neutrality, adjustment bounds),
  solved with the HiGHS simplex backend.

Accounting convention: imports are charged at the per-interval grid carbon
intensity, exports earn no credit, and each asset contributes its emission
factor times the energy it handled. The battery must end the horizon at its
starting state of charge, so stored energy cannot be "spent" for free.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

SOC_TOLERANCE_KWH = 1e-9
ADJUST_EPS_KW = 1e-9


class DispatchError(Exception):
    """Base class for dispatch errors."""


class InvalidProblemError(DispatchError):
    """Problem fields are inconsistent (lengths, signs, bounds)."""


class UnknownStrategyError(DispatchError):
    """Strategy name not registered."""


class NotFlexibleError(DispatchError):
    """DSM requested for a building without flexible load."""


class InfeasibleEventError(DispatchError):
    """A DSM event cannot be honored within its bounds or window."""


class HorizonMismatchError(DispatchError):
    """Schedule and actuals cover different horizons."""


class DsmMode(str, Enum):
    DAY_AHEAD = "day_ahead"
    AD_HOC = "ad_hoc"


class DsmDirection(str, Enum):
    INCREASE = "increase"
    REDUCE = "reduce"
    BALANCE = "balance"


@dataclass(frozen=True)
class BatteryState:
    """Battery descriptor; soc_kwh is the state of charge entering the horizon."""

    soc_kwh: float
    capacity_kwh: float
    power_limit_kw: float
    eta_charge: float = 0.95
    eta_discharge: float = 0.95
    asset_id: str = "battery"

    def __post_init__(self) -> None:
        if not 0.0 <= self.soc_kwh <= self.capacity_kwh:
            raise InvalidProblemError("battery soc_kwh outside [0, capacity_kwh]")
        for eta in (self.eta_charge, self.eta_discharge):
            if not 0.0 < eta <= 1.0:
                raise InvalidProblemError("battery efficiencies must be in (0, 1]")
        if self.power_limit_kw < 0:
            raise InvalidProblemError("battery power_limit_kw must be >= 0")


@dataclass(frozen=True)
class FlexLoad:
    """Flexible-load offer: shifting allowed within ``window`` (default whole
    horizon), bounded per interval by shiftable_fraction of the forecast load,
    energy-neutral over the window."""

    asset_id: str
    shiftable_fraction: float
    window: Optional[tuple[int, int]] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.shiftable_fraction <= 1.0:
            raise InvalidProblemError("shiftable_fraction must be in [0, 1]")


@dataclass(frozen=True)
class DsmEvent:
    mode: DsmMode
    direction: DsmDirection
    building: str
    window: tuple[int, int]
    magnitude_kw: float

    def __post_init__(self) -> None:
        if self.magnitude_kw < 0:
            raise InfeasibleEventError("magnitude_kw must be >= 0")
        if self.window[0] >= self.window[1]:
            raise InfeasibleEventError("event window must be non-empty")

    @property
    def signed_kw(self) -> float:
        return -self.magnitude_kw if self.direction is DsmDirection.REDUCE else self.magnitude_kw


@dataclass(frozen=True)
class DispatchProblem:
    interval_minutes: int
    horizon: int
    demand_kw: Mapping[str, tuple[float, ...]]
    renewable_kw: Mapping[str, tuple[float, ...]]
    grid_intensity: tuple[float, ...]
    battery: Optional[BatteryState] = None
    flexible: tuple[FlexLoad, ...] = ()
    emission_factors: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.horizon <= 0:
            raise InvalidProblemError("horizon must be positive")
        if self.interval_minutes <= 0:
            raise InvalidProblemError("interval_minutes must be positive")
        object.__setattr__(self, "demand_kw", {k: tuple(v) for k, v in self.demand_kw.items()})
        object.__setattr__(self, "renewable_kw", {k: tuple(v) for k, v in self.renewable_kw.items()})
        object.__setattr__(self, "grid_intensity", tuple(self.grid_intensity))
        object.__setattr__(self, "emission_factors", dict(self.emission_factors))
        for name, series in list(self.demand_kw.items()) + list(self.renewable_kw.items()):
            if len(series) != self.horizon:
                raise InvalidProblemError(f"series for {name!r} has length {len(series)}, expected {self.horizon}")
        if len(self.grid_intensity) != self.horizon:
            raise InvalidProblemError("grid_intensity length does not match horizon")
        if any(k < 0 for k in self.grid_intensity):
            raise InvalidProblemError("grid intensities must be >= 0")
        flex_ids = [f.asset_id for f in self.flexible]
        if len(set(flex_ids)) != len(flex_ids):
            raise InvalidProblemError("duplicate flexible-load entries")
        for f in self.flexible:
            if f.asset_id not in self.demand_kw:
                raise InvalidProblemError(f"flexible load {f.asset_id!r} has no demand series")
            if f.window is not None and not (0 <= f.window[0] < f.window[1] <= self.horizon):
                raise InvalidProblemError(f"flex window for {f.asset_id!r} outside horizon")

    @property
    def dt_hours(self) -> float:
        return self.interval_minutes / 60.0

    @cached_property
    def total_demand_kw(self) -> np.ndarray:
        total = np.zeros(self.horizon)
        for series in self.demand_kw.values():
            total += np.asarray(series)
        return total

    @cached_property
    def total_renewable_kw(self) -> np.ndarray:
        total = np.zeros(self.horizon)
        for series in self.renewable_kw.values():
            total += np.asarray(series)
        return total

    def flex_for(self, building: str) -> FlexLoad:
        for f in self.flexible:
            if f.asset_id == building:
                return f
        raise NotFlexibleError(f"{building!r} is not a flexible load in this problem")


@dataclass(frozen=True)
class DispatchSchedule:
    """Setpoints per interval. battery_kw is signed, charge positive."""

    battery_kw: tuple[float, ...]
    flex_adjust_kw: Mapping[str, tuple[float, ...]]
    grid_import_kw: tuple[float, ...]
    grid_export_kw: tuple[float, ...]
    soc_kwh: tuple[float, ...]
    total_co2_kg: float
    strategy: str = "baseline"

    def adjust_total(self, horizon: int) -> np.ndarray:
        total = np.zeros(horizon)
        for series in self.flex_adjust_kw.values():
            total += np.asarray(series)
        return total


def _charge_discharge(battery_kw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.maximum(battery_kw, 0.0), np.maximum(-battery_kw, 0.0)


def _soc_trajectory(p: DispatchProblem, charge: np.ndarray, discharge: np.ndarray) -> np.ndarray:
    batt = p.battery
    soc0 = batt.soc_kwh if batt else 0.0
    eta_c = batt.eta_charge if batt else 1.0
    eta_d = batt.eta_discharge if batt else 1.0
    deltas = (eta_c * charge - discharge / eta_d) * p.dt_hours
    return np.concatenate(([soc0], soc0 + np.cumsum(deltas)))


def total_co2_kg(
    p: DispatchProblem,
    import_kw: np.ndarray,
    discharge_kw: np.ndarray,
    flex_adjust: Mapping[str, Sequence[float]],
    grid_intensity: Optional[np.ndarray] = None,
) -> float:
    """Accounting: grid imports at intensity plus per-asset emission terms.

    Exports earn no credit. Asset terms: renewables and loads at their
    handled energy, the battery at its discharged (cycled) energy.
    """
    dt = p.dt_hours
    kappa = np.asarray(grid_intensity if grid_intensity is not None else p.grid_intensity)
    total = float(np.dot(kappa, np.asarray(import_kw)) * dt)
    ef = p.emission_factors
    for asset, series in p.renewable_kw.items():
        factor = ef.get(asset, 0.0)
        if factor:
            total += factor * float(np.sum(series)) * dt
    for asset, series in p.demand_kw.items():
        factor = ef.get(asset, 0.0)
        if factor:
            energy = float(np.sum(series)) * dt
            adjust = flex_adjust.get(asset)
            if adjust is not None:
                energy += float(np.sum(adjust)) * dt
            total += factor * energy
    if p.battery is not None:
        factor = ef.get(p.battery.asset_id, 0.0)
        if factor:
            total += factor * float(np.sum(discharge_kw)) * dt
    return total


def _build_schedule(
    p: DispatchProblem,
    battery_kw: np.ndarray,
    flex_adjust: Mapping[str, np.ndarray],
    strategy: str,
) -> DispatchSchedule:
    """Derive imports/exports from the balance so the identity holds exactly."""
    charge, discharge = _charge_discharge(battery_kw)
    adjust_total = np.zeros(p.horizon)
    for series in flex_adjust.values():
        adjust_total += series
    net = p.total_demand_kw + adjust_total + charge - discharge - p.total_renewable_kw
    imports = np.maximum(net, 0.0)
    exports = np.maximum(-net, 0.0)
    soc = _soc_trajectory(p, charge, discharge)
    co2 = total_co2_kg(p, imports, discharge, flex_adjust)
    return DispatchSchedule(
        battery_kw=tuple(float(v) for v in battery_kw),
        flex_adjust_kw={b: tuple(float(v) for v in series) for b, series in flex_adjust.items()},
        grid_import_kw=tuple(float(v) for v in imports),
        grid_export_kw=tuple(float(v) for v in exports),
        soc_kwh=tuple(float(v) for v in soc),
        total_co2_kg=co2,
        strategy=strategy,
    )


def baseline_schedule(p: DispatchProblem) -> DispatchSchedule:
    """Reference point: battery idle, no load shifting, raw import/export."""
    zeros = np.zeros(p.horizon)
    flex = {f.asset_id: np.zeros(p.horizon) for f in p.flexible}
    return _build_schedule(p, zeros, flex, strategy="baseline")


# --------------------------------------------------------------------------
# Hard-event plumbing shared by both strategies
# --------------------------------------------------------------------------

def _validate_hard_events(p: DispatchProblem, events: Sequence[DsmEvent]) -> None:
    for ev in events:
        p.flex_for(ev.building)
        lo, hi = ev.window
        if not (0 <= lo < hi <= p.horizon):
            raise InfeasibleEventError(f"event window {ev.window} outside horizon {p.horizon}")
        if ev.direction is DsmDirection.REDUCE:
            demand = p.demand_kw[ev.building]
            floor = min(demand[t] for t in range(lo, hi))
            if ev.magnitude_kw > floor + 1e-9:
                raise InfeasibleEventError(
                    f"cannot reduce {ev.building!r} by {ev.magnitude_kw} kW; "
                    f"minimum load in window is {floor} kW"
                )


def _event_profiles(p: DispatchProblem, events: Sequence[DsmEvent]) -> dict[str, np.ndarray]:
    profiles: dict[str, np.ndarray] = {}
    for ev in events:
        profile = profiles.setdefault(ev.building, np.zeros(p.horizon))
        profile[ev.window[0] : ev.window[1]] += ev.signed_kw
    return profiles


# --------------------------------------------------------------------------
# LP strategy
# --------------------------------------------------------------------------

def _lp_strategy(p: DispatchProblem, hard_events: Sequence[DsmEvent] = ()) -> DispatchSchedule:
    """Exact LP over charge/discharge/import/export/SoC/flex variables.

    A tiny throughput penalty, scaled with the intensity signal, breaks the
    degenerate ties (simultaneous charge+discharge, gratuitous shifting)
    without disturbing the argmin under objective rescaling.
    """
    T = p.horizon
    dt = p.dt_hours
    batt = p.battery
    cap = batt.capacity_kwh if batt else 0.0
    power = batt.power_limit_kw if batt else 0.0
    eta_c = batt.eta_charge if batt else 1.0
    eta_d = batt.eta_discharge if batt else 1.0
    soc0 = batt.soc_kwh if batt else 0.0

    event_buildings = {ev.building for ev in hard_events}
    event_profiles = _event_profiles(p, hard_events)
    flex = list(p.flexible)
    B = len(flex)

    # Variable layout: c | d | m | x | s (s_1..s_T) | per building: a+ | a-
    n_core = 5 * T
    n_vars = n_core + 2 * B * T
    idx_c, idx_d, idx_m, idx_x, idx_s = 0, T, 2 * T, 3 * T, 4 * T

    def idx_ap(b: int) -> int:
        return n_core + 2 * b * T

    def idx_am(b: int) -> int:
        return n_core + (2 * b + 1) * T

    kappa = np.asarray(p.grid_intensity)
    scale = float(kappa.mean()) if kappa.mean() > 0 else 1.0
    eps = 1e-9 * scale

    cost = np.zeros(n_vars)
    cost[idx_m : idx_m + T] = kappa * dt
    cost[idx_c : idx_c + T] += eps
    cost[idx_d : idx_d + T] += eps
    if batt is not None:
        cost[idx_d : idx_d + T] += p.emission_factors.get(batt.asset_id, 0.0) * dt
    for b, f in enumerate(flex):
        factor = p.emission_factors.get(f.asset_id, 0.0)
        cost[idx_ap(b) : idx_ap(b) + T] += factor * dt + eps
        cost[idx_am(b) : idx_am(b) + T] += -factor * dt + eps

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    rhs: list[float] = []

    def add(row: int, col: int, val: float) -> None:
        rows.append(row)
        cols.append(col)
        vals.append(val)

    net = p.total_demand_kw - p.total_renewable_kw
    row = 0
    for t in range(T):
        add(row, idx_m + t, 1.0)
        add(row, idx_x + t, -1.0)
        add(row, idx_c + t, -1.0)
        add(row, idx_d + t, 1.0)
        for b in range(B):
            add(row, idx_ap(b) + t, -1.0)
            add(row, idx_am(b) + t, 1.0)
        rhs.append(float(net[t]))
        row += 1

    for t in range(T):
        add(row, idx_s + t, 1.0)
        if t > 0:
            add(row, idx_s + t - 1, -1.0)
        add(row, idx_c + t, -eta_c * dt)
        add(row, idx_d + t, dt / eta_d)
        rhs.append(soc0 if t == 0 else 0.0)
        row += 1

    add(row, idx_s + T - 1, 1.0)
    rhs.append(soc0)
    row += 1

    for b, f in enumerate(flex):
        if f.asset_id in event_buildings:
            continue
        lo, hi = f.window if f.window is not None else (0, T)
        for t in range(lo, hi):
            add(row, idx_ap(b) + t, 1.0)
            add(row, idx_am(b) + t, -1.0)
        rhs.append(0.0)
        row += 1

    a_eq = sparse.coo_matrix((vals, (rows, cols)), shape=(row, n_vars)).tocsr()
    b_eq = np.asarray(rhs)

    bounds: list[tuple[float, Optional[float]]] = []
    bounds += [(0.0, power)] * T  # charge
    bounds += [(0.0, power)] * T  # discharge
    bounds += [(0.0, None)] * T  # import
    bounds += [(0.0, None)] * T  # export
    bounds += [(0.0, cap)] * T  # soc
    for f in flex:
        demand = np.asarray(p.demand_kw[f.asset_id])
        lo, hi = f.window if f.window is not None else (0, T)
        up = np.zeros(T)
        down = np.zeros(T)
        up[lo:hi] = f.shiftable_fraction * demand[lo:hi]
        down[lo:hi] = f.shiftable_fraction * demand[lo:hi]
        if f.asset_id in event_buildings:
            profile = event_profiles[f.asset_id]
            up = np.maximum(profile, 0.0)
            down = np.maximum(-profile, 0.0)
            bounds += [(float(v), float(v)) for v in up]
            bounds += [(float(v), float(v)) for v in down]
        else:
            bounds += [(0.0, float(v)) for v in up]
            bounds += [(0.0, float(v)) for v in down]

    result = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if not result.success:
        raise InfeasibleEventError(f"dispatch LP infeasible: {result.message}")

    solution = result.x
    # Degenerate vertices may carry simultaneous charge and discharge, which
    # a plain net would mis-account (the efficiencies are asymmetric).
    # Re-deriving pure setpoints from the solved SoC path nets them out in
    # stored-energy space, keeps the trajectory exact and never imports more.
    soc_path = np.concatenate(([soc0], solution[idx_s : idx_s + T]))
    deltas = np.diff(soc_path)
    charge = np.clip(np.where(deltas > 0, deltas / (eta_c * dt), 0.0), 0.0, power)
    discharge = np.clip(np.where(deltas < 0, -deltas * eta_d / dt, 0.0), 0.0, power)
    charge, discharge = _clamp_soc(p, charge, discharge)
    flex_adjust = {}
    for b, f in enumerate(flex):
        flex_adjust[f.asset_id] = solution[idx_ap(b) : idx_ap(b) + T] - solution[idx_am(b) : idx_am(b) + T]
    return _build_schedule(p, charge - discharge, flex_adjust, strategy="lp")


def _clamp_soc(p: DispatchProblem, charge: np.ndarray, discharge: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Walk the SoC recursion and trim solver-tolerance overshoots."""
    batt = p.battery
    if batt is None:
        return np.zeros_like(charge), np.zeros_like(discharge)
    dt = p.dt_hours
    soc = batt.soc_kwh
    out_c = charge.copy()
    out_d = discharge.copy()
    for t in range(len(charge)):
        max_c = (batt.capacity_kwh - soc) / (batt.eta_charge * dt)
        max_d = soc * batt.eta_discharge / dt
        out_c[t] = min(out_c[t], max_c)
        out_d[t] = min(out_d[t], max_d)
        soc += (batt.eta_charge * out_c[t] - out_d[t] / batt.eta_discharge) * dt
        soc = min(max(soc, 0.0), batt.capacity_kwh)
    return out_c, out_d


# --------------------------------------------------------------------------
# Greedy strategy
# --------------------------------------------------------------------------

def _greedy_flex_shift(
    p: DispatchProblem,
    flex: Sequence[FlexLoad],
    adjust: dict[str, np.ndarray],
) -> None:
    """Move flexible load into renewable-surplus intervals, pulling it from the
    highest-intensity deficit intervals inside each building's window."""
    total_net = p.total_demand_kw - p.total_renewable_kw
    surplus = np.maximum(-total_net, 0.0)
    deficit = np.maximum(total_net, 0.0)
    kappa = np.asarray(p.grid_intensity)
    for f in sorted(flex, key=lambda f: f.asset_id):
        demand = np.asarray(p.demand_kw[f.asset_id])
        lo, hi = f.window if f.window is not None else (0, p.horizon)
        head = f.shiftable_fraction * demand
        up_left = head.copy()
        down_left = head.copy()
        targets = sorted(
            (t for t in range(lo, hi) if surplus[t] > ADJUST_EPS_KW),
            key=lambda t: -surplus[t],
        )
        sources = sorted(
            (t for t in range(lo, hi) if deficit[t] > ADJUST_EPS_KW and kappa[t] > 0),
            key=lambda t: -kappa[t],
        )
        for t_to in targets:
            if up_left[t_to] <= ADJUST_EPS_KW:
                continue
            for t_from in sources:
                if t_from == t_to:
                    continue
                amount = min(surplus[t_to], up_left[t_to], down_left[t_from], deficit[t_from])
                if amount <= ADJUST_EPS_KW:
                    continue
                adjust[f.asset_id][t_to] += amount
                adjust[f.asset_id][t_from] -= amount
                surplus[t_to] -= amount
                deficit[t_from] -= amount
                up_left[t_to] -= amount
                down_left[t_from] -= amount
                if up_left[t_to] <= ADJUST_EPS_KW or surplus[t_to] <= ADJUST_EPS_KW:
                    break


def _greedy_battery(
    p: DispatchProblem,
    net_kw: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise charge/discharge transfers in descending carbon saving.

    A transfer charges at a cheap (or surplus) interval and discharges the same
    stored energy at an expensive one, respecting power limits and the SoC
    corridor between the two instants. Every accepted transfer has a strictly
    positive saving, so the result never does worse than idling.
    """
    batt = p.battery
    T = p.horizon
    charge = np.zeros(T)
    discharge = np.zeros(T)
    if batt is None or batt.capacity_kwh <= 0 or batt.power_limit_kw <= 0:
        return charge, discharge
    dt = p.dt_hours
    eta_rt = batt.eta_charge * batt.eta_discharge
    kappa = np.asarray(p.grid_intensity)
    deficit_kwh = np.maximum(net_kw, 0.0) * dt
    surplus_kwh = np.maximum(-net_kw, 0.0) * dt
    # soc[t] = state entering interval t; one extra slot for the horizon end.
    soc = np.full(T + 1, batt.soc_kwh)

    pairs: list[tuple[float, int, int, bool]] = []
    for t_d in range(T):
        if deficit_kwh[t_d] <= 1e-12 or kappa[t_d] <= 0:
            continue
        for t_c in range(T):
            if t_c == t_d:
                continue
            if surplus_kwh[t_c] > 1e-12:
                profit = kappa[t_d]
                pairs.append((profit, t_d, t_c, True))
            cost = kappa[t_c] / eta_rt
            if kappa[t_d] > cost + 1e-12:
                pairs.append((kappa[t_d] - cost, t_d, t_c, False))
    pairs.sort(key=lambda item: (-item[0], item[1], item[2]))

    power_kwh = batt.power_limit_kw * dt
    for profit, t_d, t_c, from_surplus in pairs:
        room_d = min(deficit_kwh[t_d], power_kwh - discharge[t_d] * dt)
        if room_d <= 1e-12:
            continue
        charge_head_kwh = power_kwh - charge[t_c] * dt
        if from_surplus:
            charge_head_kwh = min(charge_head_kwh, surplus_kwh[t_c])
        if charge_head_kwh <= 1e-12:
            continue
        deliverable = charge_head_kwh * eta_rt
        if t_c < t_d:
            corridor = np.min(batt.capacity_kwh - soc[t_c + 1 : t_d + 1])
        else:
            corridor = np.min(soc[t_d + 1 : t_c + 1])
        corridor_kwh = max(corridor, 0.0) * batt.eta_discharge
        energy = min(room_d, deliverable, corridor_kwh)
        if energy <= 1e-12:
            continue
        stored = energy / batt.eta_discharge
        ac_charge = stored / batt.eta_charge
        charge[t_c] += ac_charge / dt
        discharge[t_d] += energy / dt
        if t_c < t_d:
            soc[t_c + 1 : t_d + 1] += stored
        else:
            soc[t_d + 1 : t_c + 1] -= stored
        deficit_kwh[t_d] -= energy
        if from_surplus:
            surplus_kwh[t_c] -= ac_charge
    return charge, discharge


def _greedy_strategy(p: DispatchProblem, hard_events: Sequence[DsmEvent] = ()) -> DispatchSchedule:
    event_profiles = _event_profiles(p, hard_events)
    event_buildings = set(event_profiles)

    adjust = {f.asset_id: np.zeros(p.horizon) for f in p.flexible}
    for building, profile in event_profiles.items():
        adjust[building] = profile.copy()

    free_flex = [f for f in p.flexible if f.asset_id not in event_buildings]
    shifted = replace(
        p,
        demand_kw={
            b: tuple(np.asarray(series) + event_profiles.get(b, np.zeros(p.horizon)))
            for b, series in p.demand_kw.items()
        },
    )
    _greedy_flex_shift(shifted, free_flex, adjust)

    adjust_total = np.zeros(p.horizon)
    for series in adjust.values():
        adjust_total += series
    net = p.total_demand_kw + adjust_total - p.total_renewable_kw
    charge, discharge = _greedy_battery(p, net)
    return _build_schedule(p, charge - discharge, adjust, strategy="greedy")


# --------------------------------------------------------------------------
# Strategy registry and entry points
# --------------------------------------------------------------------------

Strategy = Callable[[DispatchProblem, Sequence[DsmEvent]], DispatchSchedule]

STRATEGIES: dict[str, Strategy] = {
    "greedy": _greedy_strategy,
    "lp": _lp_strategy,
}

DEFAULT_STRATEGY = "lp"


def register_strategy(name: str, strategy: Strategy) -> None:
    """Register a third-party optimizer under a selectable name."""
    STRATEGIES[name] = strategy


def optimize_co2(
    p: DispatchProblem,
    strategy: str = DEFAULT_STRATEGY,
    hard_events: Sequence[DsmEvent] = (),
) -> DispatchSchedule:
    """Minimize carbon over the horizon with the named strategy.

    The result never exceeds the baseline's total; a strategy that fails to
    beat the baseline falls back to it (with any hard events still applied).
    """
    if strategy not in STRATEGIES:
        raise UnknownStrategyError(
            f"unknown strategy {strategy!r}; registered: {sorted(STRATEGIES)}"
        )
    _validate_hard_events(p, hard_events)
    schedule = STRATEGIES[strategy](p, hard_events)
    if not hard_events:
        base = baseline_schedule(p)
        if schedule.total_co2_kg > base.total_co2_kg:
            return replace(base, strategy=schedule.strategy)
    return schedule


def day_ahead_dsm(
    p: DispatchProblem,
    buildings: Sequence[str],
    strategy: str = DEFAULT_STRATEGY,
) -> list[DsmEvent]:
    """Turn the optimizer's flexible-load plan into day-ahead DSM events.

    One event per contiguous same-sign adjustment run; windows that sit
    entirely inside forecast renewable surplus become 'balance' events.
    """
    for b in buildings:
        p.flex_for(b)
    schedule = optimize_co2(p, strategy=strategy)
    surplus = p.total_renewable_kw > p.total_demand_kw
    events: list[DsmEvent] = []
    for b in buildings:
        series = np.asarray(schedule.flex_adjust_kw.get(b, ()))
        if series.size == 0:
            continue
        t = 0
        while t < len(series):
            if abs(series[t]) <= ADJUST_EPS_KW:
                t += 1
                continue
            sign = 1.0 if series[t] > 0 else -1.0
            start = t
            while t < len(series) and abs(series[t]) > ADJUST_EPS_KW and (series[t] > 0) == (sign > 0):
                t += 1
            window = (start, t)
            magnitude = float(np.max(np.abs(series[start:t])))
            if sign > 0 and bool(np.all(surplus[start:t])):
                direction = DsmDirection.BALANCE
            elif sign > 0:
                direction = DsmDirection.INCREASE
            else:
                direction = DsmDirection.REDUCE
            events.append(
                DsmEvent(
                    mode=DsmMode.DAY_AHEAD,
                    direction=direction,
                    building=b,
                    window=window,
                    magnitude_kw=magnitude,
                )
            )
    return events


@dataclass(frozen=True)
class DispatchState:
    """Snapshot of the live dispatch loop used for ad hoc re-optimization."""

    problem: DispatchProblem
    interval_index: int
    soc_kwh: float


def slice_problem(p: DispatchProblem, start: int, soc_kwh: Optional[float] = None) -> DispatchProblem:
    """Residual problem from interval ``start`` onward."""
    if not 0 <= start < p.horizon:
        raise InvalidProblemError(f"slice start {start} outside horizon {p.horizon}")
    battery = p.battery
    if battery is not None and soc_kwh is not None:
        battery = replace(battery, soc_kwh=min(max(soc_kwh, 0.0), battery.capacity_kwh))
    def cut(window: Optional[tuple[int, int]]) -> Optional[tuple[int, int]]:
        if window is None:
            return None
        lo, hi = max(window[0] - start, 0), window[1] - start
        if hi <= 0:
            return (0, 0)
        return (lo, hi)

    flexible = []
    for f in p.flexible:
        window = cut(f.window)
        if window == (0, 0):
            continue
        flexible.append(replace(f, window=window))
    return DispatchProblem(
        interval_minutes=p.interval_minutes,
        horizon=p.horizon - start,
        demand_kw={b: s[start:] for b, s in p.demand_kw.items()},
        renewable_kw={b: s[start:] for b, s in p.renewable_kw.items()},
        grid_intensity=p.grid_intensity[start:],
        battery=battery,
        flexible=tuple(flexible),
        emission_factors=p.emission_factors,
    )


def ad_hoc_dsm(
    current: DispatchState,
    event: DsmEvent,
    strategy: str = DEFAULT_STRATEGY,
) -> DispatchSchedule:
    """Apply an ad hoc DSM event and re-optimize the remaining horizon.

    Returns the revised schedule tail covering intervals from the current
    one to the end of the horizon.
    """
    if event.mode is not DsmMode.AD_HOC:
        raise InfeasibleEventError("ad_hoc_dsm requires an ad_hoc event")
    now = current.interval_index
    if event.window[1] <= now:
        raise InfeasibleEventError(f"event window {event.window} is entirely in the past (now={now})")
    if event.window[0] < now:
        raise InfeasibleEventError(f"event window {event.window} starts before current interval {now}")
    residual = slice_problem(current.problem, now, soc_kwh=current.soc_kwh)
    shifted = replace(event, window=(event.window[0] - now, event.window[1] - now))
    if shifted.window[1] > residual.horizon:
        raise InfeasibleEventError("event window extends past the horizon")
    hard = (shifted,) if shifted.magnitude_kw > 0 else ()
    return optimize_co2(residual, strategy=strategy, hard_events=hard)


# --------------------------------------------------------------------------
# Schedule simulation against actuals
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ClampEvent:
    interval: int
    kind: str  # "battery_charge", "battery_discharge", "flex"
    requested: float
    applied: float


@dataclass(frozen=True)
class SimulationInputs:
    """Actual (realized) series on the schedule's grid."""

    demand_kw: Mapping[str, tuple[float, ...]]
    renewable_kw: Mapping[str, tuple[float, ...]]
    grid_intensity: tuple[float, ...]

    @staticmethod
    def from_problem(p: DispatchProblem) -> "SimulationInputs":
        return SimulationInputs(
            demand_kw=dict(p.demand_kw),
            renewable_kw=dict(p.renewable_kw),
            grid_intensity=tuple(p.grid_intensity),
        )


@dataclass(frozen=True)
class SimulatedTimeline:
    """Realized interval-by-interval execution of a schedule."""

    horizon: int
    interval_minutes: int
    realized_demand_kw: Mapping[str, tuple[float, ...]]
    realized_renewable_kw: Mapping[str, tuple[float, ...]]
    battery_kw: tuple[float, ...]
    soc_kwh: tuple[float, ...]
    grid_import_kw: tuple[float, ...]
    grid_export_kw: tuple[float, ...]
    clamp_events: tuple[ClampEvent, ...]
    total_co2_kg: float
    energy_saved_kwh: Mapping[str, float]

    @property
    def total_demand_kw(self) -> np.ndarray:
        total = np.zeros(self.horizon)
        for series in self.realized_demand_kw.values():
            total += np.asarray(series)
        return total

    @property
    def total_renewable_kw(self) -> np.ndarray:
        total = np.zeros(self.horizon)
        for series in self.realized_renewable_kw.values():
            total += np.asarray(series)
        return total


def simulate_schedule(
    p: DispatchProblem,
    schedule: DispatchSchedule,
    actuals: SimulationInputs,
) -> SimulatedTimeline:
    """Execute a schedule against actual telemetry, clamping to feasibility.

    Battery setpoints are clamped to power and SoC limits; flexible-load
    adjustments are clamped so realized demand never goes negative. Every
    clamp is flagged. The interval balance holds exactly by construction.
    """
    T = p.horizon
    for name, series in list(actuals.demand_kw.items()) + list(actuals.renewable_kw.items()):
        if len(series) != T:
            raise HorizonMismatchError(f"actuals for {name!r} have length {len(series)}, expected {T}")
    if len(actuals.grid_intensity) != T or len(schedule.battery_kw) != T:
        raise HorizonMismatchError("schedule/actuals horizon mismatch")

    batt = p.battery
    soc = batt.soc_kwh if batt else 0.0
    dt = p.dt_hours
    clamps: list[ClampEvent] = []
    battery_out = np.zeros(T)
    soc_out = np.zeros(T + 1)
    soc_out[0] = soc

    realized_demand: dict[str, np.ndarray] = {}
    for b, series in actuals.demand_kw.items():
        realized = np.asarray(series, dtype=float).copy()
        adjust = schedule.flex_adjust_kw.get(b)
        if adjust is not None:
            realized += np.asarray(adjust)
        realized_demand[b] = realized
    for b, realized in realized_demand.items():
        for t in range(T):
            if realized[t] < 0:
                clamps.append(ClampEvent(t, "flex", float(realized[t]), 0.0))
                realized[t] = 0.0

    for t in range(T):
        setpoint = schedule.battery_kw[t]
        if batt is None:
            applied = 0.0
            if abs(setpoint) > 1e-9:
                clamps.append(ClampEvent(t, "battery_charge", setpoint, 0.0))
        elif setpoint >= 0:
            limit = min(batt.power_limit_kw, (batt.capacity_kwh - soc) / (batt.eta_charge * dt))
            applied = min(setpoint, max(limit, 0.0))
            if applied < setpoint - 1e-9:
                clamps.append(ClampEvent(t, "battery_charge", setpoint, applied))
            soc += batt.eta_charge * applied * dt
        else:
            limit = min(batt.power_limit_kw, soc * batt.eta_discharge / dt)
            applied = -min(-setpoint, max(limit, 0.0))
            if applied > setpoint + 1e-9:
                clamps.append(ClampEvent(t, "battery_discharge", setpoint, applied))
            soc += applied * dt / batt.eta_discharge
        battery_out[t] = applied
        soc = min(max(soc, 0.0), batt.capacity_kwh if batt else 0.0)
        soc_out[t + 1] = soc

    demand_total = np.zeros(T)
    for series in realized_demand.values():
        demand_total += series
    renew_total = np.zeros(T)
    for series in actuals.renewable_kw.values():
        renew_total += np.asarray(series)
    charge, discharge = _charge_discharge(battery_out)
    net = demand_total + charge - discharge - renew_total
    imports = np.maximum(net, 0.0)
    exports = np.maximum(-net, 0.0)

    energy_saved: dict[str, float] = {}
    for b, series in actuals.demand_kw.items():
        saved = (float(np.sum(series)) - float(np.sum(realized_demand[b]))) * dt
        energy_saved[b] = saved

    flex_realized = {
        b: tuple(realized_demand[b] - np.asarray(actuals.demand_kw[b])) for b in realized_demand
    }
    co2 = total_co2_kg(
        replace(p, demand_kw=dict(actuals.demand_kw), renewable_kw=dict(actuals.renewable_kw)),
        imports,
        discharge,
        flex_realized,
        grid_intensity=np.asarray(actuals.grid_intensity),
    )
    return SimulatedTimeline(
        horizon=T,
        interval_minutes=p.interval_minutes,
        realized_demand_kw={b: tuple(v) for b, v in realized_demand.items()},
        realized_renewable_kw={b: tuple(map(float, v)) for b, v in actuals.renewable_kw.items()},
        battery_kw=tuple(battery_out),
        soc_kwh=tuple(soc_out),
        grid_import_kw=tuple(imports),
        grid_export_kw=tuple(exports),
        clamp_events=tuple(clamps),
        total_co2_kg=co2,
        energy_saved_kwh=energy_saved,
    )


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

def problem_to_dict(p: DispatchProblem) -> dict:
    return {
        "interval_minutes": p.interval_minutes,
        "horizon": p.horizon,
        "demand_kw": {k: list(v) for k, v in p.demand_kw.items()},
        "renewable_kw": {k: list(v) for k, v in p.renewable_kw.items()},
        "grid_intensity": list(p.grid_intensity),
        "battery": None
        if p.battery is None
        else {
            "soc_kwh": p.battery.soc_kwh,
            "capacity_kwh": p.battery.capacity_kwh,
            "power_limit_kw": p.battery.power_limit_kw,
            "eta_charge": p.battery.eta_charge,
            "eta_discharge": p.battery.eta_discharge,
            "asset_id": p.battery.asset_id,
        },
        "flexible": [
            {"asset_id": f.asset_id, "shiftable_fraction": f.shiftable_fraction, "window": f.window}
            for f in p.flexible
        ],
        "emission_factors": dict(p.emission_factors),
    }


def problem_from_dict(raw: dict) -> DispatchProblem:
    battery = None
    if raw.get("battery"):
        b = raw["battery"]
        battery = BatteryState(
            soc_kwh=float(b["soc_kwh"]),
            capacity_kwh=float(b["capacity_kwh"]),
            power_limit_kw=float(b["power_limit_kw"]),
            eta_charge=float(b.get("eta_charge", 0.95)),
            eta_discharge=float(b.get("eta_discharge", 0.95)),
            asset_id=str(b.get("asset_id", "battery")),
        )
    flexible = tuple(
        FlexLoad(
            asset_id=str(f["asset_id"]),
            shiftable_fraction=float(f["shiftable_fraction"]),
            window=tuple(f["window"]) if f.get("window") else None,
        )
        for f in raw.get("flexible", [])
    )
    return DispatchProblem(
        interval_minutes=int(raw["interval_minutes"]),
        horizon=int(raw["horizon"]),
        demand_kw={k: tuple(v) for k, v in raw.get("demand_kw", {}).items()},
        renewable_kw={k: tuple(v) for k, v in raw.get("renewable_kw", {}).items()},
        grid_intensity=tuple(raw["grid_intensity"]),
        battery=battery,
        flexible=flexible,
        emission_factors={k: float(v) for k, v in raw.get("emission_factors", {}).items()},
    )


def schedule_to_dict(s: DispatchSchedule) -> dict:
    return {
        "strategy": s.strategy,
        "battery_kw": list(s.battery_kw),
        "flex_adjust_kw": {k: list(v) for k, v in s.flex_adjust_kw.items()},
        "grid_import_kw": list(s.grid_import_kw),
        "grid_export_kw": list(s.grid_export_kw),
        "soc_kwh": list(s.soc_kwh),
        "total_co2_kg": s.total_co2_kg,
    }


def write_schedule_csv(
    s: DispatchSchedule,
    path: Union[str, Path],
    start,
    interval_minutes: int,
    grid_intensity: Sequence[float],
) -> None:
    """Schedule CSV: interval_start,battery_kw,import_kw,export_kw,co2_kg."""
    from datetime import timedelta

    dt_h = interval_minutes / 60.0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["interval_start", "battery_kw", "import_kw", "export_kw", "co2_kg"])
        for t in range(len(s.battery_kw)):
            stamp = start + timedelta(minutes=interval_minutes * t)
            co2 = grid_intensity[t] * s.grid_import_kw[t] * dt_h
            writer.writerow(
                [
                    stamp.isoformat(),
                    f"{s.battery_kw[t]:.6f}",
                    f"{s.grid_import_kw[t]:.6f}",
                    f"{s.grid_export_kw[t]:.6f}",
                    f"{co2:.6f}",
                ]
            )
