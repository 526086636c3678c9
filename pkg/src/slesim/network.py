"""Typed graph model of the campus 11 kV network and its assets.

Buses, switched lines and generation/storage/load assets form an immutable
topology value. Switch actions return new topologies, which is what makes
what-if analysis safe: nothing is ever mutated in place.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Mapping, Union

import networkx as nx


class NetworkError(Exception):
    """Base class for network model errors."""


class ParseError(NetworkError):
    """Malformed network document."""


class UnknownReferenceError(NetworkError):
    """A line endpoint or asset bus names a bus that is not declared."""


class CardinalityError(NetworkError):
    """Zero or multiple grid_source buses."""


class UnknownLineError(NetworkError):
    """Switch action names a line id that does not exist."""


class BusKind(str, Enum):
    GRID_SOURCE = "grid_source"
    SUBSTATION = "substation"
    LOAD_BUS = "load_bus"


class SwitchState(str, Enum):
    CLOSED = "closed"
    OPEN = "open"


class AssetKind(str, Enum):
    PV = "pv"
    WIND = "wind"
    BATTERY = "battery"
    FIXED_LOAD = "fixed_load"
    FLEXIBLE_LOAD = "flexible_load"
    EV_CHARGER = "ev_charger"
    GRID_CONNECTION = "grid_connection"


LOAD_KINDS = frozenset({AssetKind.FIXED_LOAD, AssetKind.FLEXIBLE_LOAD, AssetKind.EV_CHARGER})
GENERATION_KINDS = frozenset({AssetKind.PV, AssetKind.WIND})


@dataclass(frozen=True)
class Bus:
    id: str
    name: str
    kind: BusKind
    nominal_kv: float = 11.0


@dataclass(frozen=True)
class Line:
    """A switched branch. ``switch_state`` open means the line carries no flow."""

    id: str
    from_bus: str
    to_bus: str
    reactance_pu: float
    capacity_kw: float
    switch_state: SwitchState = SwitchState.CLOSED

    def __post_init__(self) -> None:
        if self.from_bus == self.to_bus:
            raise ParseError(f"line {self.id}: from_bus equals to_bus ({self.from_bus})")
        if self.reactance_pu <= 0:
            raise ParseError(f"line {self.id}: reactance_pu must be > 0")
        if self.capacity_kw <= 0:
            raise ParseError(f"line {self.id}: capacity_kw must be > 0")


@dataclass(frozen=True)
class Asset:
    """A connected device: generator, storage, load or the grid tie.

    Kind-specific parameters live in ``extra``; every kind accepts
    ``emission_factor_kg_per_kwh`` (default 0).
    """

    id: str
    bus: str
    kind: AssetKind
    rating_kw: float
    extra: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.rating_kw < 0:
            raise ParseError(f"asset {self.id}: rating_kw must be >= 0")
        if self.emission_factor < 0:
            raise ParseError(f"asset {self.id}: emission_factor_kg_per_kwh must be >= 0")
        if self.kind is AssetKind.BATTERY:
            for key in ("eta_charge", "eta_discharge"):
                eta = float(self.extra.get(key, 0.95))
                if not 0.0 < eta <= 1.0:
                    raise ParseError(f"asset {self.id}: {key} must be in (0, 1]")
        object.__setattr__(self, "extra", dict(self.extra))

    @property
    def emission_factor(self) -> float:
        return float(self.extra.get("emission_factor_kg_per_kwh", 0.0))


@dataclass(frozen=True)
class NetworkTopology:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    assets: tuple[Asset, ...]
    base_mva: float = 10.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "assets", tuple(self.assets))
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise ParseError("duplicate bus ids")
        line_ids = [ln.id for ln in self.lines]
        if len(set(line_ids)) != len(line_ids):
            raise ParseError("duplicate line ids")
        pairs = [frozenset((ln.from_bus, ln.to_bus)) for ln in self.lines]
        if len(set(pairs)) != len(pairs):
            raise ParseError("parallel lines between the same bus pair are not supported")
        known = set(ids)
        for ln in self.lines:
            for end in (ln.from_bus, ln.to_bus):
                if end not in known:
                    raise UnknownReferenceError(f"line {ln.id} references unknown bus {end!r}")
        for a in self.assets:
            if a.bus not in known:
                raise UnknownReferenceError(f"asset {a.id} references unknown bus {a.bus!r}")
        sources = [b for b in self.buses if b.kind is BusKind.GRID_SOURCE]
        if len(sources) != 1:
            raise CardinalityError(f"expected exactly one grid_source bus, found {len(sources)}")

    @cached_property
    def bus_map(self) -> dict[str, Bus]:
        return {b.id: b for b in self.buses}

    @cached_property
    def line_map(self) -> dict[str, Line]:
        return {ln.id: ln for ln in self.lines}

    @cached_property
    def grid_source(self) -> Bus:
        return next(b for b in self.buses if b.kind is BusKind.GRID_SOURCE)

    def assets_at(self, bus_id: str) -> tuple[Asset, ...]:
        return tuple(a for a in self.assets if a.bus == bus_id)

    def load_kw_at(self, bus_id: str) -> float:
        """Sum of nameplate ratings of load-kind assets at a bus."""
        return sum(a.rating_kw for a in self.assets if a.bus == bus_id and a.kind in LOAD_KINDS)

    def closed_graph(self) -> nx.Graph:
        """Graph over all buses with only closed lines as edges."""
        g = nx.Graph()
        g.add_nodes_from(b.id for b in self.buses)
        for ln in self.lines:
            if ln.switch_state is SwitchState.CLOSED:
                g.add_edge(ln.from_bus, ln.to_bus, line=ln)
        return g


@dataclass(frozen=True)
class ValidationReport:
    radial_violations: tuple[tuple[str, ...], ...]
    unreachable_buses: tuple[str, ...]
    capacity_warnings: tuple[tuple[str, float, float], ...]

    @property
    def ok(self) -> bool:
        return not (self.radial_violations or self.unreachable_buses or self.capacity_warnings)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ParseError(message)


def _parse_bus(raw: dict) -> Bus:
    _require(isinstance(raw, dict), "bus entry must be an object")
    try:
        kind = BusKind(raw["kind"])
    except KeyError:
        raise ParseError(f"bus {raw.get('id')!r}: missing kind") from None
    except ValueError:
        raise ParseError(f"bus {raw.get('id')!r}: unknown kind {raw['kind']!r}") from None
    _require("id" in raw, "bus entry missing id")
    return Bus(
        id=str(raw["id"]),
        name=str(raw.get("name", raw["id"])),
        kind=kind,
        nominal_kv=float(raw.get("nominal_kv", 11.0)),
    )


def _parse_line(raw: dict) -> Line:
    for key in ("id", "from_bus", "to_bus", "reactance_pu", "capacity_kw"):
        _require(key in raw, f"line entry missing {key}")
    try:
        state = SwitchState(raw.get("switch_state", "closed"))
    except ValueError:
        raise ParseError(f"line {raw['id']!r}: unknown switch_state {raw['switch_state']!r}") from None
    return Line(
        id=str(raw["id"]),
        from_bus=str(raw["from_bus"]),
        to_bus=str(raw["to_bus"]),
        reactance_pu=float(raw["reactance_pu"]),
        capacity_kw=float(raw["capacity_kw"]),
        switch_state=state,
    )


def _parse_asset(raw: dict) -> Asset:
    for key in ("id", "bus", "kind", "rating_kw"):
        _require(key in raw, f"asset entry missing {key}")
    try:
        kind = AssetKind(raw["kind"])
    except ValueError:
        raise ParseError(f"asset {raw['id']!r}: unknown kind {raw['kind']!r}") from None
    extra = raw.get("extra", {})
    _require(isinstance(extra, dict), f"asset {raw['id']!r}: extra must be an object")
    return Asset(
        id=str(raw["id"]),
        bus=str(raw["bus"]),
        kind=kind,
        rating_kw=float(raw["rating_kw"]),
        extra={k: float(v) for k, v in extra.items()},
    )


def load_network(document: Union[str, Path, dict]) -> NetworkTopology:
    """Load a topology from a network document (dict, JSON text, or file path).

    Raises ParseError / UnknownReferenceError / CardinalityError on bad input.
    """
    if isinstance(document, Path):
        document = document.read_text(encoding="utf-8")
    if isinstance(document, str):
        candidate = Path(document)
        if document.lstrip()[:1] not in ("{", "["):
            try:
                document = candidate.read_text(encoding="utf-8")
            except OSError as exc:
                raise ParseError(f"cannot read network file {document!r}: {exc}") from exc
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ParseError("network document must be a JSON object")
    for key in ("buses", "lines", "assets"):
        _require(isinstance(document.get(key), list), f"document missing array {key!r}")
    buses = tuple(_parse_bus(b) for b in document["buses"])
    lines = tuple(_parse_line(ln) for ln in document["lines"])
    assets = tuple(_parse_asset(a) for a in document["assets"])
    return NetworkTopology(
        buses=buses, lines=lines, assets=assets, base_mva=float(document.get("base_mva", 10.0))
    )


def network_to_document(net: NetworkTopology) -> dict:
    """Inverse of load_network; load_network(network_to_document(net)) == net."""
    return {
        "base_mva": net.base_mva,
        "buses": [
            {"id": b.id, "name": b.name, "kind": b.kind.value, "nominal_kv": b.nominal_kv}
            for b in net.buses
        ],
        "lines": [
            {
                "id": ln.id,
                "from_bus": ln.from_bus,
                "to_bus": ln.to_bus,
                "reactance_pu": ln.reactance_pu,
                "capacity_kw": ln.capacity_kw,
                "switch_state": ln.switch_state.value,
            }
            for ln in net.lines
        ],
        "assets": [
            {"id": a.id, "bus": a.bus, "kind": a.kind.value, "rating_kw": a.rating_kw, "extra": dict(a.extra)}
            for a in net.assets
        ],
    }


def energized_buses(net: NetworkTopology) -> frozenset[str]:
    """Buses reachable from the grid source through closed lines (source included)."""
    g = net.closed_graph()
    return frozenset(nx.node_connected_component(g, net.grid_source.id))


def apply_switch_action(net: NetworkTopology, line_id: str, state: SwitchState) -> NetworkTopology:
    """Return a copy of the topology with one switch set to ``state``."""
    if line_id not in net.line_map:
        raise UnknownLineError(f"unknown line id {line_id!r}")
    state = SwitchState(state)
    lines = tuple(replace(ln, switch_state=state) if ln.id == line_id else ln for ln in net.lines)
    return replace(net, lines=lines)


def _downstream_loads(net: NetworkTopology, tree_edges: list[tuple[str, str, Line]]) -> dict[str, float]:
    """Load (kW) hanging below each tree line, keyed by line id.

    Only defined for lines in the BFS tree rooted at the grid source; lines on
    cycles are skipped by the caller. tree_edges must be in BFS order.
    """
    subtree_kw = {child: net.load_kw_at(child) for _, child, _ in tree_edges}
    for parent, child, _ in reversed(tree_edges):
        if parent in subtree_kw:
            subtree_kw[parent] += subtree_kw[child]
    return {ln.id: subtree_kw[child] for _, child, ln in tree_edges}


def validate_topology(net: NetworkTopology) -> ValidationReport:
    """Check radiality, reachability and line capacity against downstream load.

    The report carries findings; an empty report means the network passes all
    checks. Capacity is compared against the summed ratings of load assets
    below each radial line; lines on cycles are excluded from that check.
    """
    g = net.closed_graph()
    cycles = tuple(tuple(cycle) for cycle in nx.cycle_basis(g))

    reachable = set(nx.node_connected_component(g, net.grid_source.id))
    unreachable = tuple(sorted(b.id for b in net.buses if b.id not in reachable))

    cycle_buses = {b for cycle in cycles for b in cycle}
    tree_edges: list[tuple[str, str, Line]] = []
    for parent, child in nx.bfs_edges(g, net.grid_source.id):
        ln: Line = g.edges[parent, child]["line"]
        if parent in cycle_buses and child in cycle_buses:
            continue
        tree_edges.append((parent, child, ln))
    warnings: list[tuple[str, float, float]] = []
    if not cycles or tree_edges:
        downstream = _downstream_loads(net, tree_edges)
        for ln in net.lines:
            kw = downstream.get(ln.id)
            if kw is not None and ln.capacity_kw < kw:
                warnings.append((ln.id, ln.capacity_kw, kw))
    return ValidationReport(
        radial_violations=cycles,
        unreachable_buses=unreachable,
        capacity_warnings=tuple(sorted(warnings)),
    )
