"""DC power flow, limit checks, fault currents and self-healing restoration.

The solver is the linear, lossless angle formulation: B theta = P over the
energized non-slack buses, with B assembled from closed-line reactances and P
in per-unit on the system base. Restoration searches switch reconfigurations
in increasing action count and accepts only radial, limit-safe plans.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence, Union

import networkx as nx
import numpy as np

from .network import (
    LOAD_KINDS,
    Line,
    NetworkTopology,
    SwitchState,
    energized_buses,
    validate_topology,
)

DEFAULT_SOURCE_X_PU = 0.05
DEFAULT_MAX_ACTIONS = 3

Injections = Mapping[str, float]


class PowerFlowError(Exception):
    """Base class for power flow errors."""


class SingularSystemError(PowerFlowError):
    """The reduced susceptance matrix cannot be solved."""


class DeEnergizedInjectionError(PowerFlowError):
    """An injection is keyed on a de-energized or slack bus."""


class DeEnergizedBusError(PowerFlowError):
    """Fault study requested at a de-energized bus."""


class NonRadialPathError(PowerFlowError):
    """The faulted bus has more than one closed path to the source."""


class UnknownElementError(PowerFlowError):
    """Restoration references a line or bus that does not exist."""


@dataclass(frozen=True)
class PowerFlowSolution:
    """Angles per energized bus, signed flow per line, and the slack balance."""

    angles_rad: dict[str, float]
    line_flows_kw: dict[str, float]
    slack_injection_kw: float


@dataclass(frozen=True)
class FaultResult:
    bus: str
    fault_current_ka: float
    thevenin_x_pu: float


@dataclass(frozen=True)
class SwitchAction:
    line_id: str
    state: SwitchState

    def key(self) -> tuple[str, str]:
        return (self.line_id, self.state.value)


@dataclass(frozen=True)
class RestorationPlan:
    """Switch actions restoring lost load after an outage.

    limit_safe is False when some topologically feasible candidate would have
    restored more load but was rejected for violating line limits; the returned
    actions themselves are always safe to apply.
    """

    actions: tuple[SwitchAction, ...]
    restored_buses: frozenset[str]
    unserved_kw: float
    limit_safe: bool


class DcSolver:
    """Reusable factorized DC solve for a fixed topology.

    Buses are indexed in sorted order over the energized non-slack set; the
    same B matrix serves any number of injection vectors.
    """

    def __init__(self, net: NetworkTopology):
        self.net = net
        self.slack = net.grid_source.id
        self.energized = energized_buses(net)
        self.index = {b: i for i, b in enumerate(sorted(self.energized - {self.slack}))}
        n = len(self.index)
        b_matrix = np.zeros((n, n))
        self.active_lines: list[Line] = []
        for ln in net.lines:
            if ln.switch_state is not SwitchState.CLOSED:
                continue
            if ln.from_bus not in self.energized or ln.to_bus not in self.energized:
                continue
            self.active_lines.append(ln)
            b = 1.0 / ln.reactance_pu
            i = self.index.get(ln.from_bus)
            j = self.index.get(ln.to_bus)
            if i is not None:
                b_matrix[i, i] += b
            if j is not None:
                b_matrix[j, j] += b
            if i is not None and j is not None:
                b_matrix[i, j] -= b
                b_matrix[j, i] -= b
        self._b = b_matrix

    def _check_keys(self, injections: Injections) -> None:
        for bus in injections:
            if bus not in self.net.bus_map:
                raise DeEnergizedInjectionError(f"injection keyed on unknown bus {bus!r}")
            if bus == self.slack:
                raise DeEnergizedInjectionError(f"injection keyed on slack bus {bus!r}")
            if bus not in self.energized:
                raise DeEnergizedInjectionError(f"injection keyed on de-energized bus {bus!r}")

    def injection_vector(self, injections: Injections) -> np.ndarray:
        """Per-unit injection vector in solver bus order."""
        self._check_keys(injections)
        p = np.zeros(len(self.index))
        for bus, kw in injections.items():
            p[self.index[bus]] = kw / 1000.0 / self.net.base_mva
        return p

    def solve_angles(self, p_pu: np.ndarray) -> np.ndarray:
        """Solve B theta = P; p_pu may be a vector or an (n x T) matrix."""
        if len(self.index) == 0:
            return np.zeros_like(p_pu)
        try:
            return np.linalg.solve(self._b, p_pu)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(str(exc)) from exc

    def flows_kw(self, theta: np.ndarray) -> dict[str, float]:
        scale = self.net.base_mva * 1000.0
        flows = {ln.id: 0.0 for ln in self.net.lines}

        def angle(bus: str) -> float:
            idx = self.index.get(bus)
            return 0.0 if idx is None else float(theta[idx])

        for ln in self.active_lines:
            flows[ln.id] = (angle(ln.from_bus) - angle(ln.to_bus)) / ln.reactance_pu * scale
        return flows

    def solve(self, injections: Injections) -> PowerFlowSolution:
        theta = self.solve_angles(self.injection_vector(injections))
        angles = {self.slack: 0.0}
        for bus, idx in self.index.items():
            angles[bus] = float(theta[idx])
        return PowerFlowSolution(
            angles_rad=angles,
            line_flows_kw=self.flows_kw(theta),
            slack_injection_kw=-float(sum(injections.values())),
        )


def dc_power_flow(net: NetworkTopology, injections: Injections) -> PowerFlowSolution:
    """Solve the DC power flow for one injection set (kW, generation positive)."""
    return DcSolver(net).solve(injections)


def conservation_residuals_kw(
    net: NetworkTopology, sol: PowerFlowSolution, injections: Injections
) -> dict[str, float]:
    """Net power imbalance at each energized bus; ~0 for a valid solution."""
    residual: dict[str, float] = {bus: 0.0 for bus in sol.angles_rad}
    slack = net.grid_source.id
    residual[slack] += sol.slack_injection_kw
    for bus, kw in injections.items():
        residual[bus] += kw
    for ln in net.lines:
        flow = sol.line_flows_kw.get(ln.id, 0.0)
        if ln.from_bus in residual:
            residual[ln.from_bus] -= flow
        if ln.to_bus in residual:
            residual[ln.to_bus] += flow
    return residual


def check_line_limits(
    sol: PowerFlowSolution, net: NetworkTopology
) -> list[tuple[str, float, float]]:
    """Lines whose |flow| exceeds capacity, as (line_id, |flow|, capacity)."""
    violations = []
    for ln in net.lines:
        flow = abs(sol.line_flows_kw.get(ln.id, 0.0))
        if flow > ln.capacity_kw:
            violations.append((ln.id, flow, ln.capacity_kw))
    return sorted(violations)


def fault_current_3ph(
    net: NetworkTopology, bus: str, source_x_pu: float = DEFAULT_SOURCE_X_PU
) -> FaultResult:
    """Bolted three-phase fault level from a reactance-only Thevenin equivalent.

    The Thevenin reactance is the source reactance plus the line reactances on
    the unique closed path from the grid source; a meshed path is an error.
    """
    if bus not in net.bus_map:
        raise UnknownElementError(f"unknown bus {bus!r}")
    energized = energized_buses(net)
    if bus not in energized:
        raise DeEnergizedBusError(f"bus {bus!r} is de-energized")
    g = net.closed_graph()
    source = net.grid_source.id
    path = nx.shortest_path(g, source, bus)
    if len(path) > 1:
        bridges = set(nx.bridges(g))
        for u, v in zip(path[:-1], path[1:]):
            if (u, v) not in bridges and (v, u) not in bridges:
                raise NonRadialPathError(f"multiple closed paths from {source!r} to {bus!r}")
    x_total = source_x_pu
    for u, v in zip(path[:-1], path[1:]):
        x_total += g.edges[u, v]["line"].reactance_pu
    kv = net.bus_map[bus].nominal_kv
    base_current_a = net.base_mva * 1e6 / (math.sqrt(3.0) * kv * 1000.0)
    fault_ka = (1.0 / x_total) * base_current_a / 1000.0
    return FaultResult(bus=bus, fault_current_ka=fault_ka, thevenin_x_pu=x_total)


def default_injections(net: NetworkTopology, served: Optional[frozenset[str]] = None) -> dict[str, float]:
    """Nameplate load withdrawals per energized bus (planning-style snapshot)."""
    if served is None:
        served = energized_buses(net)
    slack = net.grid_source.id
    result: dict[str, float] = {}
    for asset in net.assets:
        if asset.kind in LOAD_KINDS and asset.bus in served and asset.bus != slack:
            result[asset.bus] = result.get(asset.bus, 0.0) - asset.rating_kw
    return result


class _FastTopology:
    """Array view of a topology for the restoration search inner loop."""

    def __init__(self, net: NetworkTopology, out_of_service: frozenset[str]):
        self.net = net
        self.bus_ids = [b.id for b in net.buses]
        self.bus_index = {b: i for i, b in enumerate(self.bus_ids)}
        self.source = self.bus_index[net.grid_source.id]
        self.lines = list(net.lines)
        self.line_index = {ln.id: i for i, ln in enumerate(self.lines)}
        self.ends = [(self.bus_index[ln.from_bus], self.bus_index[ln.to_bus]) for ln in self.lines]
        self.base_closed = [
            ln.switch_state is SwitchState.CLOSED and ln.id not in out_of_service for ln in self.lines
        ]
        self.in_service = [ln.id not in out_of_service for ln in self.lines]
        self.load_kw = [net.load_kw_at(b) for b in self.bus_ids]

    def components(self, toggles: Mapping[int, bool]) -> tuple[list[int], int]:
        """Union-find labels per bus and the closed edge count."""
        parent = list(range(len(self.bus_ids)))

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        closed_edges = 0
        for idx, (u, v) in enumerate(self.ends):
            closed = toggles.get(idx, self.base_closed[idx])
            if not closed:
                continue
            closed_edges += 1
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[ru] = rv
        labels = [find(i) for i in range(len(self.bus_ids))]
        return labels, closed_edges

    def is_radial(self, labels: list[int], closed_edges: int) -> bool:
        """The closed subgraph is a forest iff edges == nodes - components."""
        return closed_edges == len(labels) - len(set(labels))

    def energized_set(self, labels: list[int]) -> frozenset[int]:
        root = labels[self.source]
        return frozenset(i for i, lab in enumerate(labels) if lab == root)

    def apply(self, toggles: Mapping[int, bool]) -> NetworkTopology:
        lines = tuple(
            replace(
                ln,
                switch_state=SwitchState.CLOSED if toggles.get(i, self.base_closed[i]) else SwitchState.OPEN,
            )
            for i, ln in enumerate(self.lines)
        )
        return replace(self.net, lines=lines)


def _plan_actions(fast: _FastTopology, toggles: Mapping[int, bool]) -> tuple[SwitchAction, ...]:
    opens = []
    closes = []
    for idx, closed in sorted(toggles.items(), key=lambda kv: fast.lines[kv[0]].id):
        action = SwitchAction(fast.lines[idx].id, SwitchState.CLOSED if closed else SwitchState.OPEN)
        (closes if closed else opens).append(action)
    return tuple(opens + closes)


def restore_after_outage(
    net: NetworkTopology,
    failed: str,
    injections: Optional[Injections] = None,
    max_actions: int = DEFAULT_MAX_ACTIONS,
    out_of_service: frozenset[str] = frozenset(),
) -> RestorationPlan:
    """Search switch reconfigurations that re-energize buses lost to a failure.

    The failed line (or every line at a failed bus) is forced out of service.
    Candidates are action subsets over the remaining lines, at least one of
    them a closing, scanned in increasing action count and lexicographic line
    order. A candidate is feasible when it keeps every currently served bus
    energized, keeps the closed subgraph radial and passes line limits under a
    DC power flow. Plans are ranked by restored load, then action count, then
    lexicographic order.
    """
    failed_lines: set[str]
    if failed in net.line_map:
        failed_lines = {failed}
    elif failed in net.bus_map:
        failed_lines = {ln.id for ln in net.lines if failed in (ln.from_bus, ln.to_bus)}
    else:
        raise UnknownElementError(f"unknown element {failed!r}")

    pre_fault = energized_buses(net)
    post_net = net
    for lid in failed_lines:
        post_net = replace(
            post_net,
            lines=tuple(
                replace(ln, switch_state=SwitchState.OPEN) if ln.id == lid else ln for ln in post_net.lines
            ),
        )
    dead = out_of_service | failed_lines
    fast = _FastTopology(post_net, dead)

    served = energized_buses(post_net)
    lost = pre_fault - served
    lost_idx = {fast.bus_index[b] for b in lost}
    served_idx = {fast.bus_index[b] for b in served}
    lost_load = sum(fast.load_kw[i] for i in lost_idx)

    if not lost:
        return RestorationPlan(actions=(), restored_buses=frozenset(), unserved_kw=0.0, limit_safe=True)

    # Upper bound on what any reconfiguration can reach: close every
    # in-service line. Lost buses outside that set are unrestorable.
    all_closed = {i: True for i in range(len(fast.lines)) if fast.in_service[i]}
    labels, _ = fast.components(all_closed)
    reachable = fast.energized_set(labels)
    target_idx = lost_idx & reachable
    if not target_idx:
        return RestorationPlan(
            actions=(), restored_buses=frozenset(), unserved_kw=lost_load, limit_safe=True
        )

    closable = sorted(
        (i for i, ln in enumerate(fast.lines) if fast.in_service[i] and not fast.base_closed[i]),
        key=lambda i: fast.lines[i].id,
    )
    openable = sorted(
        (i for i, ln in enumerate(fast.lines) if fast.in_service[i] and fast.base_closed[i]),
        key=lambda i: fast.lines[i].id,
    )

    if injections is not None:
        base_injections = dict(injections)
    else:
        base_injections = None

    def candidate_injections(energized_ids: frozenset[str]) -> dict[str, float]:
        if base_injections is not None:
            return {b: kw for b, kw in base_injections.items() if b in energized_ids and b != net.grid_source.id}
        return default_injections(post_net, served=energized_ids)

    best: Optional[tuple[float, int, tuple, Mapping[int, bool], frozenset[int]]] = None
    blocked_restored = 0.0

    def candidates(size: int):
        """Action subsets of exactly ``size`` with >= 1 closing, lex ordered."""
        for n_close in range(min(size, len(closable)), 0, -1):
            n_open = size - n_close
            if n_open > len(openable):
                continue
            for closes in itertools.combinations(closable, n_close):
                for opens in itertools.combinations(openable, n_open):
                    toggles = {i: True for i in closes}
                    toggles.update({i: False for i in opens})
                    yield toggles

    for size in range(1, max_actions + 1):
        level_full: Optional[tuple[tuple, Mapping[int, bool], frozenset[int], float]] = None
        for toggles in candidates(size):
            labels, closed_edges = fast.components(toggles)
            energized_idx = fast.energized_set(labels)
            if not served_idx <= energized_idx:
                continue
            if not fast.is_radial(labels, closed_edges):
                continue
            restored_idx = energized_idx & lost_idx
            restored_load = sum(fast.load_kw[i] for i in restored_idx)
            full = restored_idx == target_idx
            if restored_load <= 0.0 and not full:
                continue
            current_best_load = best[0] if best else 0.0
            if restored_load < current_best_load and not full:
                continue
            candidate_net = fast.apply(toggles)
            energized_ids = frozenset(fast.bus_ids[i] for i in energized_idx)
            inj = candidate_injections(energized_ids)
            sol = DcSolver(candidate_net).solve(inj)
            if check_line_limits(sol, candidate_net):
                blocked_restored = max(blocked_restored, restored_load)
                continue
            key = tuple(sorted(fast.lines[i].id for i in toggles))
            entry = (restored_load, size, key, dict(toggles), restored_idx)
            if best is None or (-entry[0], entry[1], entry[2]) < (-best[0], best[1], best[2]):
                best = entry
            if full:
                if level_full is None or key < level_full[0]:
                    level_full = (key, dict(toggles), restored_idx, restored_load)
        if level_full is not None:
            toggles = level_full[1]
            restored_names = frozenset(fast.bus_ids[i] for i in level_full[2])
            return RestorationPlan(
                actions=_plan_actions(fast, toggles),
                restored_buses=restored_names,
                unserved_kw=lost_load - level_full[3],
                limit_safe=True,
            )

    if best is None:
        return RestorationPlan(
            actions=(),
            restored_buses=frozenset(),
            unserved_kw=lost_load,
            limit_safe=blocked_restored <= 0.0,
        )
    restored_load, _, _, toggles, restored_idx = best
    return RestorationPlan(
        actions=_plan_actions(fast, toggles),
        restored_buses=frozenset(fast.bus_ids[i] for i in restored_idx),
        unserved_kw=lost_load - restored_load,
        limit_safe=blocked_restored <= restored_load,
    )


def apply_plan(net: NetworkTopology, plan: RestorationPlan) -> NetworkTopology:
    """Apply a restoration plan's switch actions to a topology copy."""
    lines = {action.line_id: action.state for action in plan.actions}
    new_lines = tuple(
        replace(ln, switch_state=lines[ln.id]) if ln.id in lines else ln for ln in net.lines
    )
    return replace(net, lines=new_lines)
