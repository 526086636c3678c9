"""Single authoritative live state with serialized mutations.

One lock guards all mutations; every mutation appends events with gapless
sequence numbers. Snapshots are cheap dict copies of immutable values taken
under the same lock, so a reader sees either the pre- or post-state of any
action, never a mixture. Replaying the command events of a log against a
fresh store rebuilt from the same config reproduces the final state hash.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from datetime import timedelta
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from ..dispatch import (
    DispatchError,
    DispatchState,
    DsmDirection,
    DsmEvent,
    DsmMode,
    _build_schedule,
    ad_hoc_dsm,
    simulate_schedule,
)
from ..network import (
    NetworkError,
    SwitchState,
    apply_switch_action,
    energized_buses,
    network_to_document,
)
from ..powerflow import (
    DcSolver,
    RestorationPlan,
    check_line_limits,
    restore_after_outage,
)
from ..twin import (
    InvalidOverrideError,
    NetworkMods,
    PipelineConfig,
    Scenario,
    WhatIfReport,
    apply_mods,
    run_pipeline,
    run_scenario,
    test_network_mod,
)
from ..metrics import breakdown_from_arrays, kpi_report, kpi_report_to_dict


class ActionRejectedError(Exception):
    """Invalid operator action; the live state is unchanged."""


class ActionKind(str, Enum):
    SWITCH_ACTION = "switch_action"
    COMMIT_NETWORK_MOD = "commit_network_mod"
    AD_HOC_DSM = "ad_hoc_dsm"
    INJECT_OUTAGE = "inject_outage"
    APPLY_RESTORATION_PLAN = "apply_restoration_plan"


class EventKind(str, Enum):
    READING = "reading"
    ACTION_APPLIED = "action_applied"
    VIOLATION = "violation"
    CLAMP = "clamp"
    RESTORATION_PROPOSED = "restoration_proposed"


@dataclass(frozen=True)
class OperatorAction:
    kind: ActionKind
    payload: Mapping[str, object]
    actor: str = "operator"

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ActionKind(self.kind))
        object.__setattr__(self, "payload", dict(self.payload))


@dataclass(frozen=True)
class Event:
    seq: int
    timestamp: str
    kind: EventKind
    body: Mapping[str, object]

    def to_dict(self) -> dict:
        return {"seq": self.seq, "timestamp": self.timestamp, "kind": self.kind.value, "body": dict(self.body)}


def _canonical(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


class StateStore:
    """The live simulation behind the service; all methods are thread-safe."""

    def __init__(self, config: PipelineConfig, log_path: Optional[Path] = None):
        self._lock = threading.RLock()
        self._new_event = threading.Condition(self._lock)
        self.config = config
        art = run_pipeline(config)
        self.artifacts = art
        self._net = art.net
        self._problem = art.problem
        self._schedule = art.schedule
        self._timeline = art.timeline
        self._actuals = art.actuals
        self._timestamps = art.timestamps
        self._cursor = 0
        self._events: list[Event] = []
        self._pending_plans: dict[int, RestorationPlan] = {}
        self._out_of_service: set[str] = set()
        self._log_path = log_path
        self._log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
        self._solver_cache: Optional[DcSolver] = None
        self.closed = False

    # -- event plumbing ----------------------------------------------------

    def _sim_time(self) -> str:
        idx = min(self._cursor, len(self._timestamps) - 1)
        return self._timestamps[idx].isoformat()

    def _append(self, kind: EventKind, body: dict) -> Event:
        event = Event(seq=len(self._events), timestamp=self._sim_time(), kind=kind, body=body)
        self._events.append(event)
        if self._log_fh:
            self._log_fh.write(_canonical(event.to_dict()) + "\n")
            self._log_fh.flush()
        self._new_event.notify_all()
        return event

    def events_from(self, from_seq: int) -> list[Event]:
        with self._lock:
            return self._events[from_seq:]

    def wait_for_event(self, next_seq: int, timeout: float = 0.5) -> list[Event]:
        """Events with seq >= next_seq, blocking up to timeout if none yet."""
        with self._new_event:
            if len(self._events) <= next_seq:
                self._new_event.wait(timeout)
            return self._events[next_seq:]

    @property
    def head_seq(self) -> int:
        with self._lock:
            return len(self._events)

    # -- snapshots ----------------------------------------------------------

    def snapshot(self) -> dict:
        """Consistent point-in-time copy of the observable state."""
        with self._lock:
            cursor = self._cursor
            horizon = self._problem.horizon
            idx = min(cursor, horizon - 1)
            energized = energized_buses(self._net)
            substations = sum(1 for b in self._net.buses if b.kind.value == "substation")
            realized_to_cursor = float(
                np.dot(
                    np.asarray(self._actuals.grid_intensity[:cursor]),
                    np.asarray(self._timeline.grid_import_kw[:cursor]),
                )
                * self._problem.dt_hours
            )
            return {
                "seq": len(self._events) - 1,
                "cursor": cursor,
                "horizon": horizon,
                "timestamp": self._sim_time(),
                "interval_minutes": self._problem.interval_minutes,
                "substation_count": substations,
                "topology": network_to_document(self._net),
                "energized": {b.id: (b.id in energized) for b in self._net.buses},
                "out_of_service": sorted(self._out_of_service),
                "soc_kwh": float(self._timeline.soc_kwh[cursor]),
                "battery_kw": float(self._timeline.battery_kw[idx]),
                "grid_import_kw": float(self._timeline.grid_import_kw[idx]),
                "grid_export_kw": float(self._timeline.grid_export_kw[idx]),
                "demand_kw": float(self._timeline.total_demand_kw[idx]),
                "generation_kw": float(self._timeline.total_renewable_kw[idx]),
                "scheduled_co2_kg": self._schedule.total_co2_kg,
                "realized_co2_kg": realized_to_cursor,
                "strategy": self._schedule.strategy,
                "pending_proposals": sorted(self._pending_plans),
                "clamp_count": len(self._timeline.clamp_events),
                "buildings": {
                    b: {
                        "demand_kw": float(self._timeline.realized_demand_kw[b][idx]),
                        "adjust_kw": float(self._schedule.flex_adjust_kw.get(b, (0.0,) * horizon)[idx]),
                    }
                    for b in sorted(self._timeline.realized_demand_kw)
                },
            }

    def state_hash(self) -> str:
        return hashlib.sha256(_canonical(self.snapshot()).encode("utf-8")).hexdigest()

    # -- KPI windows ---------------------------------------------------------

    def kpis(self, window: str = "all") -> list[dict]:
        """KPI reports over a trailing window of executed intervals.

        window: 'all' or '<N>h' / '<N>d' trailing simulated hours/days.
        """
        with self._lock:
            cursor = self._cursor
            if window in ("all", "run", ""):
                start_idx = 0
            else:
                try:
                    span = window.strip().lower()
                    if span.endswith("h"):
                        hours = float(span[:-1])
                    elif span.endswith("d"):
                        hours = float(span[:-1]) * 24.0
                    else:
                        hours = float(span)
                except ValueError:
                    raise ActionRejectedError(f"bad window {window!r}; use 'all', '<N>h' or '<N>d'") from None
                intervals = int(round(hours * 60.0 / self._problem.interval_minutes))
                start_idx = max(0, cursor - intervals)
            lo, hi = start_idx, cursor
            ts_lo = self._timestamps[lo] if lo < len(self._timestamps) else self._timestamps[-1]
            if hi > 0:
                ts_hi = self._timestamps[hi - 1] + timedelta(minutes=self._problem.interval_minutes)
            else:
                ts_hi = ts_lo
            win = (ts_lo, ts_hi)
            gen_total = self._timeline.total_renewable_kw[lo:hi]
            demand_total = self._timeline.total_demand_kw[lo:hi]
            interval_minutes = self._problem.interval_minutes
            reports = [
                kpi_report(
                    "campus",
                    win,
                    breakdown_from_arrays(gen_total, demand_total, interval_minutes),
                    energy_saved_kwh=float(sum(self._timeline.energy_saved_kwh.values())),
                    displaced_intensity=self.config.displaced_intensity,
                )
            ]
            safe_total = np.where(demand_total > 0, demand_total, 1.0)
            for building in sorted(self._timeline.realized_demand_kw):
                series = np.asarray(self._timeline.realized_demand_kw[building][lo:hi])
                share = gen_total * (series / safe_total)
                reports.append(
                    kpi_report(
                        building,
                        win,
                        breakdown_from_arrays(share, series, interval_minutes),
                        energy_saved_kwh=self._timeline.energy_saved_kwh.get(building, 0.0),
                        displaced_intensity=self.config.displaced_intensity,
                    )
                )
            return [kpi_report_to_dict(r) for r in reports]

    # -- replay -------------------------------------------------------------

    def advance(self, intervals: int = 1) -> list[Event]:
        """Execute the next `intervals` intervals, appending reading events."""
        emitted: list[Event] = []
        with self._lock:
            for _ in range(intervals):
                if self._cursor >= self._problem.horizon:
                    break
                t = self._cursor
                body = {
                    "interval": t,
                    "demand_kw": float(self._timeline.total_demand_kw[t]),
                    "generation_kw": float(self._timeline.total_renewable_kw[t]),
                    "grid_import_kw": float(self._timeline.grid_import_kw[t]),
                    "grid_export_kw": float(self._timeline.grid_export_kw[t]),
                    "battery_kw": float(self._timeline.battery_kw[t]),
                    "soc_kwh": float(self._timeline.soc_kwh[t + 1]),
                }
                emitted.append(self._append(EventKind.READING, body))
                for clamp in self._timeline.clamp_events:
                    if clamp.interval == t:
                        emitted.append(
                            self._append(
                                EventKind.CLAMP,
                                {
                                    "interval": t,
                                    "clamp_kind": clamp.kind,
                                    "requested": clamp.requested,
                                    "applied": clamp.applied,
                                },
                            )
                        )
                violations = self._interval_violations(t)
                if violations:
                    emitted.append(
                        self._append(EventKind.VIOLATION, {"interval": t, "lines": violations})
                    )
                self._cursor = t + 1
        return emitted

    def _interval_violations(self, t: int) -> list[list]:
        solver = self._solver_cache
        if solver is None or solver.net is not self._net:
            solver = DcSolver(self._net)
            self._solver_cache = solver
        injections: dict[str, float] = {}
        asset_bus = {a.id: a.bus for a in self._net.assets}

        def add(asset_id: str, kw: float) -> None:
            bus = asset_bus.get(asset_id)
            if bus is None or bus not in solver.index:
                return  # de-energized or slack: shed / absorbed
            injections[bus] = injections.get(bus, 0.0) + kw

        for building, series in self._timeline.realized_demand_kw.items():
            add(building, -float(series[t]))
        for asset_id, series in self._timeline.realized_renewable_kw.items():
            add(asset_id, float(series[t]))
        battery = self._problem.battery
        if battery is not None:
            add(battery.asset_id, -float(self._timeline.battery_kw[t]))
        solution = solver.solve(injections)
        return [
            [line_id, round(flow, 3), cap]
            for line_id, flow, cap in check_line_limits(solution, self._net)
        ]

    # -- actions -------------------------------------------------------------

    def submit_action(self, action: OperatorAction) -> Event:
        """Validate and apply one action; exactly one action_applied event.

        Follow-up events (violation, restoration_proposed) are appended after
        it in the same critical section, so the log order is the apply order.
        """
        with self._lock:
            handler = {
                ActionKind.SWITCH_ACTION: self._do_switch,
                ActionKind.COMMIT_NETWORK_MOD: self._do_commit_mod,
                ActionKind.AD_HOC_DSM: self._do_ad_hoc_dsm,
                ActionKind.INJECT_OUTAGE: self._do_outage,
                ActionKind.APPLY_RESTORATION_PLAN: self._do_apply_plan,
            }[action.kind]
            result_body, followups = handler(dict(action.payload))
            event = self._append(
                EventKind.ACTION_APPLIED,
                {
                    "action": action.kind.value,
                    "actor": action.actor,
                    "payload": dict(action.payload),
                    **result_body,
                },
            )
            for kind, body in followups:
                self._append(kind, body)
            return event

    def _require(self, ok: bool, message: str) -> None:
        if not ok:
            raise ActionRejectedError(message)

    def _do_switch(self, p: dict):
        line_id = str(p.get("line_id", ""))
        state = str(p.get("state", ""))
        self._require(line_id in self._net.line_map, f"unknown line {line_id!r}")
        self._require(state in ("open", "closed"), f"bad switch state {state!r}")
        self._require(line_id not in self._out_of_service, f"line {line_id!r} is out of service")
        before = energized_buses(self._net)
        self._net = apply_switch_action(self._net, line_id, SwitchState(state))
        self._solver_cache = None
        after = energized_buses(self._net)
        followups = []
        lost = sorted(before - after)
        if lost:
            followups.append((EventKind.VIOLATION, {"de_energized": lost}))
        return {"line_id": line_id, "state": state}, followups

    def _do_commit_mod(self, p: dict):
        try:
            mods = NetworkMods(
                switch_states=p.get("switch_states", {}),
                add_lines=tuple(p.get("add_lines", ())),
                remove_lines=tuple(p.get("remove_lines", ())),
            )
            self._net = apply_mods(self._net, mods)
        except (InvalidOverrideError, NetworkError) as exc:
            raise ActionRejectedError(str(exc)) from exc
        self._solver_cache = None
        return {"mods": p}, []

    def _do_ad_hoc_dsm(self, p: dict):
        building = str(p.get("building", ""))
        direction = str(p.get("direction", ""))
        magnitude = p.get("magnitude_kw")
        duration = p.get("duration_intervals")
        self._require(direction in ("increase", "reduce", "balance"), f"bad direction {direction!r}")
        self._require(isinstance(magnitude, (int, float)) and magnitude >= 0, "magnitude_kw must be >= 0")
        self._require(isinstance(duration, int) and duration > 0, "duration_intervals must be a positive integer")
        start = p.get("start_interval", self._cursor)
        self._require(isinstance(start, int) and start >= 0, "start_interval must be a non-negative integer")
        window = (int(start), int(start) + int(duration))
        try:
            event = DsmEvent(
                mode=DsmMode.AD_HOC,
                direction=DsmDirection(direction),
                building=building,
                window=window,
                magnitude_kw=float(magnitude),
            )
            current = DispatchState(
                problem=self._problem,
                interval_index=self._cursor,
                soc_kwh=float(self._timeline.soc_kwh[self._cursor]),
            )
            tail = ad_hoc_dsm(current, event, strategy=self._schedule.strategy if self._schedule.strategy in ("lp", "greedy") else "lp")
        except DispatchError as exc:
            raise ActionRejectedError(str(exc)) from exc

        cursor = self._cursor
        horizon = self._problem.horizon
        battery = np.asarray(self._schedule.battery_kw[:cursor] + tail.battery_kw)
        flex: dict[str, np.ndarray] = {}
        for b in self._problem.demand_kw:
            head = np.asarray(self._schedule.flex_adjust_kw.get(b, (0.0,) * horizon)[:cursor])
            tail_adj = np.asarray(tail.flex_adjust_kw.get(b, (0.0,) * (horizon - cursor)))
            flex[b] = np.concatenate([head, tail_adj])
        self._schedule = _build_schedule(self._problem, battery, flex, strategy=self._schedule.strategy)
        self._timeline = simulate_schedule(self._problem, self._schedule, self._actuals)
        return {
            "building": building,
            "direction": direction,
            "magnitude_kw": float(magnitude),
            "window": list(window),
            "tail_co2_kg": tail.total_co2_kg,
            "schedule_co2_kg": self._schedule.total_co2_kg,
        }, []

    def _do_outage(self, p: dict):
        element = str(p.get("element", ""))
        known = element in self._net.line_map or element in self._net.bus_map
        self._require(known, f"unknown element {element!r}")
        self._require(element != self._net.grid_source.id, "cannot fail the grid source")
        pre_net = self._net
        failed_lines = (
            {element}
            if element in self._net.line_map
            else {ln.id for ln in self._net.lines if element in (ln.from_bus, ln.to_bus)}
        )
        plan = restore_after_outage(pre_net, element, out_of_service=frozenset(self._out_of_service))
        net = self._net
        for lid in failed_lines:
            net = apply_switch_action(net, lid, SwitchState.OPEN)
        before = energized_buses(self._net)
        self._net = net
        self._solver_cache = None
        self._out_of_service |= failed_lines
        after = energized_buses(self._net)
        lost = sorted(before - after)
        followups = []
        if lost:
            followups.append((EventKind.VIOLATION, {"de_energized": lost, "cause": element}))
        proposal_body = {
            "failed": element,
            "actions": [[a.line_id, a.state.value] for a in plan.actions],
            "restored_buses": sorted(plan.restored_buses),
            "unserved_kw": plan.unserved_kw,
            "limit_safe": plan.limit_safe,
        }
        followups.append((EventKind.RESTORATION_PROPOSED, proposal_body))
        # action_applied takes the next seq, followups come right after it;
        # the proposal is the last followup.
        proposal_seq = len(self._events) + len(followups)
        self._pending_plans[proposal_seq] = plan
        proposal_body["proposal_seq"] = proposal_seq
        return {"element": element, "lost_buses": lost, "proposal_seq": proposal_seq}, followups

    def _do_apply_plan(self, p: dict):
        seq = p.get("proposal_seq")
        self._require(isinstance(seq, int), "proposal_seq must be an integer")
        plan = self._pending_plans.get(int(seq))
        self._require(plan is not None, f"no pending restoration proposal {seq}")
        for action in plan.actions:
            self._net = apply_switch_action(self._net, action.line_id, action.state)
        self._solver_cache = None
        del self._pending_plans[int(seq)]
        return {
            "proposal_seq": int(seq),
            "actions": [[a.line_id, a.state.value] for a in plan.actions],
            "restored_buses": sorted(plan.restored_buses),
        }, []

    # -- scenarios / what-if (pure reads) -------------------------------------

    def run_scenario(self, scenario: Scenario) -> dict:
        from ..twin import result_to_dict

        return result_to_dict(run_scenario(self.config, scenario))

    def what_if(self, mods: NetworkMods, probes: Sequence[str] = ()) -> WhatIfReport:
        with self._lock:
            net = self._net
        return test_network_mod(net, mods, outage_probes=probes)

    def close(self) -> None:
        with self._lock:
            self.closed = True
            if self._log_fh:
                self._log_fh.close()
                self._log_fh = None
            self._new_event.notify_all()


def replay_log(config: PipelineConfig, events: Sequence[Event]) -> StateStore:
    """Rebuild a store by re-driving the command events of a log.

    reading events advance the replay cursor; action_applied events re-submit
    the original action. Derived events (violation, clamp, restoration
    proposals) are regenerated, so an identical log is a correctness check.
    """
    store = StateStore(config)
    for event in events:
        if event.kind is EventKind.READING:
            store.advance(1)
        elif event.kind is EventKind.ACTION_APPLIED:
            action = OperatorAction(
                kind=ActionKind(event.body["action"]),
                payload=dict(event.body["payload"]),
                actor=str(event.body.get("actor", "operator")),
            )
            store.submit_action(action)
    return store


def events_to_jsonl(events: Sequence[Event]) -> str:
    return "\n".join(_canonical(e.to_dict()) for e in events) + ("\n" if events else "")


def events_from_jsonl(text: str) -> list[Event]:
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        out.append(
            Event(
                seq=int(raw["seq"]),
                timestamp=str(raw["timestamp"]),
                kind=EventKind(raw["kind"]),
                body=dict(raw["body"]),
            )
        )
    return out
