"""Dispatch optimizer tests.

The toy problems are sized so the continuous optimum lands exactly on the
brute-force grid: bang-bang solutions at round power bounds. That makes the
grid enumeration a true lower bound up to float rounding, not just "within
discretization error". Toys carry no emission factors, so carbon is the
grid-import term alone.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import replace
from datetime import datetime

import numpy as np
import pytest

from slesim.dispatch import (
    BatteryState,
    DispatchProblem,
    DispatchSchedule,
    DispatchState,
    DsmDirection,
    DsmEvent,
    DsmMode,
    FlexLoad,
    HorizonMismatchError,
    InfeasibleEventError,
    InvalidProblemError,
    NotFlexibleError,
    SimulationInputs,
    STRATEGIES,
    UnknownStrategyError,
    ad_hoc_dsm,
    baseline_schedule,
    day_ahead_dsm,
    optimize_co2,
    problem_from_dict,
    problem_to_dict,
    register_strategy,
    schedule_to_dict,
    simulate_schedule,
    total_co2_kg,
    write_schedule_csv,
)


def toy(horizon: int, kappa, demand, renewable=None, battery=None, flexible=(), interval=60):
    return DispatchProblem(
        interval_minutes=interval,
        horizon=horizon,
        demand_kw=demand,
        renewable_kw=renewable or {},
        grid_intensity=kappa,
        battery=battery,
        flexible=tuple(flexible),
    )


# -- brute-force oracle ---------------------------------------------------------

def _battery_ac(p: DispatchProblem, deltas) -> tuple[np.ndarray, np.ndarray] | None:
    """AC charge/discharge profiles for a stored-energy delta path, or None
    when the path violates power, SoC or end-of-horizon neutrality."""
    batt = p.battery
    dt = p.dt_hours
    charge = np.zeros(p.horizon)
    discharge = np.zeros(p.horizon)
    soc = batt.soc_kwh
    for t, d in enumerate(deltas):
        if d > 0:
            ac = d / (batt.eta_charge * dt)
            if ac > batt.power_limit_kw + 1e-9:
                return None
            charge[t] = ac
        elif d < 0:
            ac = -d * batt.eta_discharge / dt
            if ac > batt.power_limit_kw + 1e-9:
                return None
            discharge[t] = ac
        soc += d
        if soc < -1e-9 or soc > batt.capacity_kwh + 1e-9:
            return None
    if abs(soc - batt.soc_kwh) > 1e-9:
        return None
    return charge, discharge


def brute_force_co2(p: DispatchProblem, battery_grid=(), flex_grids=None) -> float:
    """Exhaustive minimum over discrete setpoint grids (no emission factors)."""
    assert not p.emission_factors
    dt = p.dt_hours
    kappa = np.asarray(p.grid_intensity)
    base = p.total_demand_kw - p.total_renewable_kw

    battery_options: list[tuple[np.ndarray, np.ndarray]] = []
    if p.battery is None:
        battery_options.append((np.zeros(p.horizon), np.zeros(p.horizon)))
    else:
        for deltas in itertools.product(battery_grid, repeat=p.horizon):
            profiles = _battery_ac(p, deltas)
            if profiles is not None:
                battery_options.append(profiles)

    flex_options: list[np.ndarray] = []
    if flex_grids:
        for combo in itertools.product(
            *(itertools.product(grid, repeat=p.horizon) for grid in flex_grids.values())
        ):
            if all(abs(sum(series)) <= 1e-9 for series in combo):
                flex_options.append(np.sum([np.asarray(s) for s in combo], axis=0))
    else:
        flex_options.append(np.zeros(p.horizon))

    best = math.inf
    for charge, discharge in battery_options:
        for adjust in flex_options:
            net = base + adjust + charge - discharge
            co2 = float(np.dot(kappa, np.maximum(net, 0.0)) * dt)
            best = min(best, co2)
    return best


def check_schedule_invariants(p: DispatchProblem, s: DispatchSchedule) -> None:
    cap = p.battery.capacity_kwh if p.battery else 0.0
    soc0 = p.battery.soc_kwh if p.battery else 0.0
    soc = np.asarray(s.soc_kwh)
    assert len(soc) == p.horizon + 1
    assert soc[0] == soc0
    assert soc.min() >= -1e-9
    assert soc.max() <= cap + 1e-9
    assert abs(soc[-1] - soc0) <= 1e-6
    adjust = s.adjust_total(p.horizon)
    for t in range(p.horizon):
        assert s.grid_import_kw[t] >= 0.0
        assert s.grid_export_kw[t] >= 0.0
        assert s.grid_import_kw[t] * s.grid_export_kw[t] == 0.0
        lhs = s.grid_import_kw[t] - s.grid_export_kw[t]
        rhs = (
            p.total_demand_kw[t]
            + adjust[t]
            + max(s.battery_kw[t], 0.0)
            - max(-s.battery_kw[t], 0.0)
            - p.total_renewable_kw[t]
        )
        assert lhs == pytest.approx(rhs, abs=1e-9)
    for f in p.flexible:
        series = np.asarray(s.flex_adjust_kw[f.asset_id])
        lo, hi = f.window if f.window is not None else (0, p.horizon)
        assert np.all(series[:lo] == 0.0) and np.all(series[hi:] == 0.0)


# -- baseline ----------------------------------------------------------------

def test_baseline_single_interval():
    p = toy(1, (0.2,), {"A": (100.0,)})
    s = baseline_schedule(p)
    assert s.total_co2_kg == pytest.approx(20.0, abs=1e-12)
    assert s.grid_import_kw == (100.0,)
    assert s.grid_export_kw == (0.0,)


def test_baseline_surplus_exports_earn_nothing():
    p = toy(2, (0.3, 0.3), {"A": (100.0, 100.0)}, {"PV": (300.0, 0.0)})
    s = baseline_schedule(p)
    assert s.grid_export_kw[0] == 200.0
    assert s.grid_import_kw[0] == 0.0
    assert s.total_co2_kg == pytest.approx(0.3 * 100.0, abs=1e-12)


def test_baseline_halfhour_intervals_scale_energy():
    p = toy(2, (0.2, 0.2), {"A": (100.0, 100.0)}, interval=30)
    assert baseline_schedule(p).total_co2_kg == pytest.approx(20.0, abs=1e-12)


def test_emission_factor_terms():
    p = DispatchProblem(
        interval_minutes=60,
        horizon=2,
        demand_kw={"HALL": (100.0, 100.0)},
        renewable_kw={"PV": (50.0, 0.0)},
        grid_intensity=(0.2, 0.2),
        emission_factors={"PV": 0.05, "HALL": 0.02},
    )
    s = baseline_schedule(p)
    # imports (50 + 100) at 0.2, PV at 0.05, load energy at 0.02
    expected = 0.2 * 150.0 + 0.05 * 50.0 + 0.02 * 200.0
    assert s.total_co2_kg == pytest.approx(expected, abs=1e-9)
    direct = total_co2_kg(p, np.asarray(s.grid_import_kw), np.zeros(2), {})
    assert direct == pytest.approx(expected, abs=1e-9)


# -- problem validation --------------------------------------------------------

def test_problem_validation_errors():
    with pytest.raises(InvalidProblemError, match="horizon"):
        toy(0, (), {})
    with pytest.raises(InvalidProblemError, match="length"):
        toy(2, (0.2, 0.2), {"A": (1.0,)})
    with pytest.raises(InvalidProblemError, match="length"):
        toy(2, (0.2,), {"A": (1.0, 1.0)})
    with pytest.raises(InvalidProblemError, match=">= 0"):
        toy(1, (-0.1,), {"A": (1.0,)})
    with pytest.raises(InvalidProblemError, match="no demand series"):
        toy(1, (0.2,), {"A": (1.0,)}, flexible=(FlexLoad("B", 0.5),))
    with pytest.raises(InvalidProblemError, match="duplicate"):
        toy(1, (0.2,), {"A": (1.0,)}, flexible=(FlexLoad("A", 0.5), FlexLoad("A", 0.2)))
    with pytest.raises(InvalidProblemError, match="window"):
        toy(2, (0.2, 0.2), {"A": (1.0, 1.0)}, flexible=(FlexLoad("A", 0.5, window=(1, 3)),))
    with pytest.raises(InvalidProblemError, match="soc_kwh"):
        BatteryState(soc_kwh=600.0, capacity_kwh=500.0, power_limit_kw=100.0)
    with pytest.raises(InvalidProblemError, match="efficienc"):
        BatteryState(soc_kwh=0.0, capacity_kwh=500.0, power_limit_kw=100.0, eta_charge=0.0)
    with pytest.raises(InvalidProblemError, match="power_limit"):
        BatteryState(soc_kwh=0.0, capacity_kwh=500.0, power_limit_kw=-1.0)


# -- the two-interval battery toy ---------------------------------------------

def _two_interval_toy() -> DispatchProblem:
    return toy(
        2,
        (0.4, 0.1),
        {"CAMPUS": (1000.0, 1000.0)},
        battery=BatteryState(
            soc_kwh=1000.0, capacity_kwh=1000.0, power_limit_kw=1000.0,
            eta_charge=1.0, eta_discharge=1.0,
        ),
    )


@pytest.mark.parametrize("strategy", ["lp", "greedy"])
def test_two_interval_toy_saves_300kg(strategy):
    p = _two_interval_toy()
    base = baseline_schedule(p)
    assert base.total_co2_kg == pytest.approx(500.0, abs=1e-9)
    s = optimize_co2(p, strategy=strategy)
    assert s.total_co2_kg == pytest.approx(200.0, abs=1e-9)
    assert base.total_co2_kg - s.total_co2_kg == pytest.approx(300.0, abs=1e-9)
    check_schedule_invariants(p, s)
    # discharge everything in the dirty hour, refill in the clean one
    assert s.battery_kw[0] == pytest.approx(-1000.0, abs=1e-6)
    assert s.battery_kw[1] == pytest.approx(1000.0, abs=1e-6)


def test_two_interval_toy_matches_brute_force():
    p = _two_interval_toy()
    brute = brute_force_co2(p, battery_grid=(-1000.0, -500.0, 0.0, 500.0, 1000.0))
    assert brute == pytest.approx(200.0, abs=1e-9)
    assert optimize_co2(p, "lp").total_co2_kg == pytest.approx(brute, abs=1e-6)


# -- LP vs brute force on small toys --------------------------------------------

def test_three_interval_battery_toy():
    p = toy(
        3,
        (0.5, 0.2, 0.1),
        {"CAMPUS": (500.0, 500.0, 500.0)},
        battery=BatteryState(
            soc_kwh=500.0, capacity_kwh=1000.0, power_limit_kw=500.0,
            eta_charge=1.0, eta_discharge=1.0,
        ),
    )
    brute = brute_force_co2(p, battery_grid=(-500.0, -250.0, 0.0, 250.0, 500.0))
    # discharge the 0.5 hour, refill in the 0.1 hour
    assert brute == pytest.approx(0.2 * 500.0 + 0.1 * 1000.0, abs=1e-9)
    lp = optimize_co2(p, "lp")
    assert lp.total_co2_kg == pytest.approx(brute, abs=1e-6)
    greedy = optimize_co2(p, "greedy")
    assert greedy.total_co2_kg <= 1.05 * brute + 1e-9
    check_schedule_invariants(p, lp)
    check_schedule_invariants(p, greedy)


def test_four_interval_lossy_battery_toy():
    # eta_charge 0.8: storing 400 kWh costs 500 kWh of AC at the clean hours
    p = toy(
        4,
        (0.9, 0.1, 0.1, 0.9),
        {"CAMPUS": (400.0, 400.0, 400.0, 400.0)},
        battery=BatteryState(
            soc_kwh=0.0, capacity_kwh=800.0, power_limit_kw=1000.0,
            eta_charge=0.8, eta_discharge=1.0,
        ),
    )
    brute = brute_force_co2(p, battery_grid=(-400.0, 0.0, 400.0))
    assert brute == pytest.approx(0.9 * 400.0 + 0.1 * 900.0 + 0.1 * 400.0, abs=1e-9)
    lp = optimize_co2(p, "lp")
    assert lp.total_co2_kg == pytest.approx(brute, abs=1e-6)
    assert optimize_co2(p, "greedy").total_co2_kg <= 1.05 * brute + 1e-9


def test_flex_shift_toy():
    p = toy(
        4,
        (0.25, 0.25, 0.25, 0.25),
        {"HALL": (300.0, 300.0, 300.0, 300.0)},
        {"PV": (0.0, 0.0, 500.0, 0.0)},
        flexible=(FlexLoad("HALL", 1.0 / 3.0),),
    )
    brute = brute_force_co2(p, flex_grids={"HALL": (-100.0, -50.0, 0.0, 50.0, 100.0)})
    assert brute == pytest.approx(0.25 * 800.0, abs=1e-9)
    lp = optimize_co2(p, "lp")
    assert lp.total_co2_kg == pytest.approx(brute, abs=1e-6)
    greedy = optimize_co2(p, "greedy")
    assert greedy.total_co2_kg <= 1.05 * brute + 1e-9
    check_schedule_invariants(p, lp)
    check_schedule_invariants(p, greedy)


def test_combined_battery_flex_toy():
    p = toy(
        3,
        (0.1, 0.3, 0.5),
        {"BASE": (200.0, 200.0, 200.0), "LAB": (100.0, 100.0, 100.0)},
        {"PV": (400.0, 0.0, 0.0)},
        battery=BatteryState(
            soc_kwh=0.0, capacity_kwh=200.0, power_limit_kw=200.0,
            eta_charge=1.0, eta_discharge=1.0,
        ),
        flexible=(FlexLoad("LAB", 0.5),),
    )
    brute = brute_force_co2(
        p,
        battery_grid=(-200.0, -100.0, 0.0, 100.0, 200.0),
        flex_grids={"LAB": (-50.0, -25.0, 0.0, 25.0, 50.0)},
    )
    assert brute == pytest.approx(130.0, abs=1e-9)
    lp = optimize_co2(p, "lp")
    assert lp.total_co2_kg == pytest.approx(brute, abs=1e-6)
    assert optimize_co2(p, "greedy").total_co2_kg <= 1.05 * brute + 1e-9


def test_constant_intensity_changes_nothing():
    p = toy(
        4,
        (0.25, 0.25, 0.25, 0.25),
        {"HALL": (300.0, 250.0, 350.0, 300.0)},
        battery=BatteryState(
            soc_kwh=200.0, capacity_kwh=400.0, power_limit_kw=200.0,
            eta_charge=0.9, eta_discharge=0.9,
        ),
        flexible=(FlexLoad("HALL", 0.5),),
    )
    base = baseline_schedule(p)
    for strategy in ("lp", "greedy"):
        s = optimize_co2(p, strategy=strategy)
        assert s.total_co2_kg == pytest.approx(base.total_co2_kg, abs=1e-9)


# -- seeded dominance and invariants -----------------------------------------

def random_problem(seed: int) -> DispatchProblem:
    rng = np.random.default_rng(seed)
    horizon = int(rng.integers(4, 13))
    demand = {
        f"B{i}": tuple(float(v) for v in rng.uniform(0.0, 800.0, horizon))
        for i in range(int(rng.integers(1, 4)))
    }
    renewable = {
        f"R{i}": tuple(float(v) for v in rng.uniform(0.0, 600.0, horizon))
        for i in range(int(rng.integers(0, 3)))
    }
    battery = None
    if rng.random() < 0.8:
        cap = float(rng.uniform(100.0, 2000.0))
        battery = BatteryState(
            soc_kwh=float(rng.uniform(0.0, cap)),
            capacity_kwh=cap,
            power_limit_kw=float(rng.uniform(50.0, 800.0)),
            eta_charge=float(rng.uniform(0.85, 1.0)),
            eta_discharge=float(rng.uniform(0.85, 1.0)),
        )
    flexible = tuple(
        FlexLoad(asset_id=b, shiftable_fraction=float(rng.uniform(0.0, 0.5)))
        for b in demand
        if rng.random() < 0.5
    )
    return DispatchProblem(
        interval_minutes=int(rng.choice((30, 60))),
        horizon=horizon,
        demand_kw=demand,
        renewable_kw=renewable,
        grid_intensity=tuple(float(v) for v in rng.uniform(0.05, 0.4, horizon)),
        battery=battery,
        flexible=flexible,
    )


@pytest.mark.parametrize("strategy", ["lp", "greedy"])
def test_never_worse_than_baseline_seeded(strategy):
    for seed in range(25):
        p = random_problem(seed)
        base = baseline_schedule(p)
        s = optimize_co2(p, strategy=strategy)
        assert s.total_co2_kg <= base.total_co2_kg + 1e-9, f"seed {seed}"
        check_schedule_invariants(p, s)


def test_objective_scaling_keeps_the_argmin():
    for seed in (3, 7, 11):
        p = random_problem(seed)
        doubled = replace(p, grid_intensity=tuple(2.0 * k for k in p.grid_intensity))
        a = optimize_co2(p, "lp")
        b = optimize_co2(doubled, "lp")
        assert b.total_co2_kg == pytest.approx(2.0 * a.total_co2_kg, rel=1e-6)
        assert np.asarray(b.battery_kw) == pytest.approx(np.asarray(a.battery_kw), abs=1e-4)


# -- strategies registry ---------------------------------------------------------

def test_unknown_strategy():
    p = toy(1, (0.2,), {"A": (100.0,)})
    with pytest.raises(UnknownStrategyError, match="annealer"):
        optimize_co2(p, strategy="annealer")


def test_register_strategy():
    p = toy(1, (0.2,), {"A": (100.0,)})

    def lazy(problem, hard_events=()):
        return baseline_schedule(problem)

    register_strategy("lazy", lazy)
    try:
        s = optimize_co2(p, strategy="lazy")
        assert s.total_co2_kg == pytest.approx(20.0)
    finally:
        STRATEGIES.pop("lazy")


# -- DSM events -------------------------------------------------------------------

def test_day_ahead_dsm_emits_balance_event():
    p = toy(
        4,
        (0.25, 0.25, 0.25, 0.25),
        {"HALL": (300.0, 300.0, 300.0, 300.0)},
        {"PV": (0.0, 0.0, 500.0, 0.0)},
        flexible=(FlexLoad("HALL", 1.0 / 3.0),),
    )
    events = day_ahead_dsm(p, ["HALL"])
    assert events and all(ev.mode is DsmMode.DAY_AHEAD for ev in events)
    assert all(ev.building == "HALL" for ev in events)
    balance = [ev for ev in events if ev.direction is DsmDirection.BALANCE]
    assert len(balance) == 1
    assert balance[0].window == (2, 3)
    assert balance[0].magnitude_kw == pytest.approx(100.0, abs=1e-6)


def test_day_ahead_dsm_quiet_when_nothing_to_shift():
    p = toy(
        3,
        (0.25, 0.25, 0.25),
        {"HALL": (300.0, 300.0, 300.0)},
        flexible=(FlexLoad("HALL", 0.5),),
    )
    assert day_ahead_dsm(p, ["HALL"]) == []


def test_day_ahead_dsm_rejects_inflexible_building():
    p = toy(2, (0.2, 0.2), {"A": (1.0, 1.0)})
    with pytest.raises(NotFlexibleError):
        day_ahead_dsm(p, ["A"])


def test_hard_event_is_honored_even_when_it_costs_carbon():
    p = toy(
        2,
        (0.2, 0.2),
        {"SHOP": (300.0, 300.0)},
        flexible=(FlexLoad("SHOP", 1.0),),
    )
    event = DsmEvent(DsmMode.DAY_AHEAD, DsmDirection.INCREASE, "SHOP", (0, 2), 50.0)
    s = optimize_co2(p, "lp", hard_events=(event,))
    assert s.flex_adjust_kw["SHOP"] == pytest.approx((50.0, 50.0))
    assert s.total_co2_kg > baseline_schedule(p).total_co2_kg


def test_event_validation():
    with pytest.raises(InfeasibleEventError, match=">= 0"):
        DsmEvent(DsmMode.AD_HOC, DsmDirection.REDUCE, "A", (0, 1), -5.0)
    with pytest.raises(InfeasibleEventError, match="window"):
        DsmEvent(DsmMode.AD_HOC, DsmDirection.REDUCE, "A", (2, 2), 5.0)


def _adhoc_state() -> DispatchState:
    p = toy(
        4,
        (0.25, 0.25, 0.25, 0.25),
        {"SHOP": (300.0, 300.0, 300.0, 300.0)},
        flexible=(FlexLoad("SHOP", 1.0),),
    )
    return DispatchState(problem=p, interval_index=1, soc_kwh=0.0)


def test_ad_hoc_reduce_rewrites_the_tail():
    state = _adhoc_state()
    event = DsmEvent(DsmMode.AD_HOC, DsmDirection.REDUCE, "SHOP", (2, 4), 100.0)
    tail = ad_hoc_dsm(state, event)
    assert len(tail.battery_kw) == 3  # intervals 1..3
    assert tail.flex_adjust_kw["SHOP"] == pytest.approx((0.0, -100.0, -100.0))


def test_ad_hoc_event_window_rules():
    state = _adhoc_state()
    with pytest.raises(InfeasibleEventError, match="past"):
        ad_hoc_dsm(state, DsmEvent(DsmMode.AD_HOC, DsmDirection.REDUCE, "SHOP", (0, 1), 10.0))
    with pytest.raises(InfeasibleEventError, match="before current"):
        ad_hoc_dsm(state, DsmEvent(DsmMode.AD_HOC, DsmDirection.REDUCE, "SHOP", (0, 3), 10.0))
    with pytest.raises(InfeasibleEventError, match="horizon"):
        ad_hoc_dsm(state, DsmEvent(DsmMode.AD_HOC, DsmDirection.REDUCE, "SHOP", (2, 9), 10.0))
    with pytest.raises(InfeasibleEventError, match="ad_hoc"):
        ad_hoc_dsm(state, DsmEvent(DsmMode.DAY_AHEAD, DsmDirection.REDUCE, "SHOP", (2, 4), 10.0))


def test_ad_hoc_infeasible_magnitude():
    state = _adhoc_state()
    event = DsmEvent(DsmMode.AD_HOC, DsmDirection.REDUCE, "SHOP", (2, 4), 400.0)
    with pytest.raises(InfeasibleEventError, match="cannot reduce"):
        ad_hoc_dsm(state, event)


def test_ad_hoc_zero_magnitude_is_plain_reoptimization():
    state = _adhoc_state()
    event = DsmEvent(DsmMode.AD_HOC, DsmDirection.REDUCE, "SHOP", (2, 4), 0.0)
    tail = ad_hoc_dsm(state, event)
    from slesim.dispatch import slice_problem

    residual = slice_problem(state.problem, 1, soc_kwh=0.0)
    assert tail == optimize_co2(residual)


# -- simulation against actuals ---------------------------------------------------

def test_simulate_perfect_forecast_matches_schedule():
    p = _two_interval_toy()
    s = optimize_co2(p, "lp")
    timeline = simulate_schedule(p, s, SimulationInputs.from_problem(p))
    assert timeline.clamp_events == ()
    assert timeline.total_co2_kg == pytest.approx(s.total_co2_kg, abs=1e-9)
    assert timeline.soc_kwh == pytest.approx(s.soc_kwh, abs=1e-9)
    assert timeline.grid_import_kw == pytest.approx(s.grid_import_kw, abs=1e-9)


def test_simulate_demand_overshoot_raises_imports():
    p = toy(2, (0.2, 0.2), {"A": (100.0, 100.0)})
    s = baseline_schedule(p)
    actuals = SimulationInputs(
        demand_kw={"A": (110.0, 110.0)},
        renewable_kw={},
        grid_intensity=(0.2, 0.2),
    )
    timeline = simulate_schedule(p, s, actuals)
    assert timeline.grid_import_kw == pytest.approx((110.0, 110.0))
    assert timeline.total_co2_kg == pytest.approx(0.2 * 220.0, abs=1e-9)


def test_simulate_clamps_discharge_from_empty_battery():
    p = toy(
        2,
        (0.4, 0.1),
        {"A": (500.0, 500.0)},
        battery=BatteryState(
            soc_kwh=0.0, capacity_kwh=1000.0, power_limit_kw=500.0,
            eta_charge=1.0, eta_discharge=1.0,
        ),
    )
    schedule = replace(baseline_schedule(p), battery_kw=(-500.0, 0.0))
    timeline = simulate_schedule(p, schedule, SimulationInputs.from_problem(p))
    assert timeline.battery_kw[0] == 0.0
    kinds = [(c.interval, c.kind) for c in timeline.clamp_events]
    assert (0, "battery_discharge") in kinds
    clamp = next(c for c in timeline.clamp_events if c.kind == "battery_discharge")
    assert clamp.requested == -500.0 and clamp.applied == 0.0


def test_simulate_clamps_charge_into_full_battery():
    p = toy(
        1,
        (0.2,),
        {"A": (100.0,)},
        battery=BatteryState(
            soc_kwh=1000.0, capacity_kwh=1000.0, power_limit_kw=500.0,
            eta_charge=1.0, eta_discharge=1.0,
        ),
    )
    schedule = replace(baseline_schedule(p), battery_kw=(300.0,))
    timeline = simulate_schedule(p, schedule, SimulationInputs.from_problem(p))
    assert timeline.battery_kw == (0.0,)
    assert timeline.clamp_events[0].kind == "battery_charge"


def test_simulate_clamps_flex_below_zero_demand():
    p = toy(1, (0.2,), {"A": (200.0,)}, flexible=(FlexLoad("A", 1.0),))
    schedule = DispatchSchedule(
        battery_kw=(0.0,),
        flex_adjust_kw={"A": (-200.0,)},
        grid_import_kw=(0.0,),
        grid_export_kw=(0.0,),
        soc_kwh=(0.0, 0.0),
        total_co2_kg=0.0,
    )
    actuals = SimulationInputs(demand_kw={"A": (150.0,)}, renewable_kw={}, grid_intensity=(0.2,))
    timeline = simulate_schedule(p, schedule, actuals)
    assert timeline.realized_demand_kw["A"] == (0.0,)
    assert [c.kind for c in timeline.clamp_events] == ["flex"]
    assert timeline.clamp_events[0].requested == pytest.approx(-50.0)
    assert timeline.energy_saved_kwh["A"] == pytest.approx(150.0)


def test_simulate_horizon_mismatch():
    p = toy(2, (0.2, 0.2), {"A": (100.0, 100.0)})
    s = baseline_schedule(p)
    bad = SimulationInputs(demand_kw={"A": (100.0,)}, renewable_kw={}, grid_intensity=(0.2, 0.2))
    with pytest.raises(HorizonMismatchError):
        simulate_schedule(p, s, bad)


# -- serialization -----------------------------------------------------------------

def test_problem_round_trip():
    p = random_problem(5)
    assert problem_from_dict(problem_to_dict(p)) == p


def test_schedule_dict_fields():
    p = _two_interval_toy()
    s = optimize_co2(p, "lp")
    raw = schedule_to_dict(s)
    assert raw["strategy"] == "lp"
    assert len(raw["battery_kw"]) == 2
    assert raw["total_co2_kg"] == s.total_co2_kg


def test_schedule_csv_layout(tmp_path):
    p = _two_interval_toy()
    s = optimize_co2(p, "lp")
    path = tmp_path / "schedule.csv"
    write_schedule_csv(s, path, datetime(2021, 6, 1), 60, p.grid_intensity)
    rows = list(csv.reader(path.read_text(encoding="utf-8").splitlines()))
    assert rows[0] == ["interval_start", "battery_kw", "import_kw", "export_kw", "co2_kg"]
    assert len(rows) == 3
    assert rows[1][0] == "2021-06-01T00:00:00"
    assert float(rows[1][3]) == pytest.approx(s.grid_export_kw[0], abs=1e-6)
    assert float(rows[2][4]) == pytest.approx(0.1 * s.grid_import_kw[1], abs=1e-4)
