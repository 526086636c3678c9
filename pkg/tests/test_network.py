"""Network model: parsing, round-trips, energization, switch actions, validation."""

from __future__ import annotations

import copy

import pytest

from slesim.network import (
    AssetKind,
    BusKind,
    CardinalityError,
    ParseError,
    SwitchState,
    UnknownLineError,
    UnknownReferenceError,
    apply_switch_action,
    energized_buses,
    load_network,
    network_to_document,
    validate_topology,
)


def bus(bid: str, kind: str = "substation") -> dict:
    return {"id": bid, "name": bid, "kind": kind, "nominal_kv": 11.0}


def line(lid: str, frm: str, to: str, x: float = 0.05, cap: float = 3000.0, state: str = "closed") -> dict:
    return {
        "id": lid,
        "from_bus": frm,
        "to_bus": to,
        "reactance_pu": x,
        "capacity_kw": cap,
        "switch_state": state,
    }


def fixed_load(aid: str, at: str, kw: float) -> dict:
    return {"id": aid, "bus": at, "kind": "fixed_load", "rating_kw": kw, "extra": {}}


def doc(buses, lines, assets=()) -> dict:
    return {"base_mva": 10.0, "buses": list(buses), "lines": list(lines), "assets": list(assets)}


CHAIN = doc(
    [bus("G", "grid_source"), bus("A"), bus("B", "load_bus")],
    [line("L1", "G", "A"), line("L2", "A", "B")],
    [fixed_load("LOAD-B", "B", 800.0)],
)


# -- parsing ---------------------------------------------------------------

def test_load_minimal_chain():
    net = load_network(CHAIN)
    assert len(net.buses) == 3
    assert len(net.lines) == 2
    assert net.grid_source.id == "G"
    assert net.base_mva == 10.0


def test_round_trip_preserves_topology(threebus):
    again = load_network(network_to_document(threebus))
    assert again == threebus


def test_round_trip_keele(keele):
    assert load_network(network_to_document(keele)) == keele


def test_unknown_line_endpoint_rejected():
    bad = copy.deepcopy(CHAIN)
    bad["lines"][1]["to_bus"] = "Z"
    with pytest.raises(UnknownReferenceError, match="Z"):
        load_network(bad)


def test_unknown_asset_bus_rejected():
    bad = copy.deepcopy(CHAIN)
    bad["assets"][0]["bus"] = "NOWHERE"
    with pytest.raises(UnknownReferenceError, match="NOWHERE"):
        load_network(bad)


def test_duplicate_bus_ids_rejected():
    bad = copy.deepcopy(CHAIN)
    bad["buses"].append(bus("A"))
    with pytest.raises(ParseError, match="duplicate"):
        load_network(bad)


def test_grid_source_cardinality():
    none = copy.deepcopy(CHAIN)
    none["buses"][0]["kind"] = "substation"
    with pytest.raises(CardinalityError):
        load_network(none)
    two = copy.deepcopy(CHAIN)
    two["buses"][1]["kind"] = "grid_source"
    with pytest.raises(CardinalityError):
        load_network(two)


def test_self_loop_rejected():
    bad = copy.deepcopy(CHAIN)
    bad["lines"][0]["to_bus"] = "G"
    with pytest.raises(ParseError):
        load_network(bad)


def test_nonpositive_line_parameters_rejected():
    for field, value in (("reactance_pu", 0.0), ("capacity_kw", -5.0)):
        bad = copy.deepcopy(CHAIN)
        bad["lines"][0][field] = value
        with pytest.raises(ParseError):
            load_network(bad)


def test_parallel_lines_rejected():
    bad = copy.deepcopy(CHAIN)
    bad["lines"].append(line("L1b", "A", "G"))
    with pytest.raises(ParseError, match="parallel"):
        load_network(bad)


def test_campus_fixture_shape(keele):
    substations = [b for b in keele.buses if b.kind is BusKind.SUBSTATION]
    assert len(substations) == 25
    assert sum(1 for b in keele.buses if b.kind is BusKind.GRID_SOURCE) == 1
    kinds = {}
    for a in keele.assets:
        kinds.setdefault(a.kind, []).append(a)
    assert len(kinds[AssetKind.EV_CHARGER]) == 20
    (pv,) = kinds[AssetKind.PV]
    assert pv.rating_kw == 4400.0
    assert pv.extra["dc_kw"] == 5500.0
    (wind,) = kinds[AssetKind.WIND]
    assert wind.rating_kw == 1900.0
    (batt,) = kinds[AssetKind.BATTERY]
    assert batt.rating_kw == 1000.0
    assert validate_topology(keele).ok


# -- energization ----------------------------------------------------------

def test_energized_all_closed():
    net = load_network(CHAIN)
    assert energized_buses(net) == {"G", "A", "B"}


def test_energized_after_opening_subtree_root():
    net = load_network(CHAIN)
    opened = apply_switch_action(net, "L2", SwitchState.OPEN)
    assert energized_buses(opened) == {"G", "A"}


def test_energized_ring_with_open_point():
    ring = doc(
        [bus("G", "grid_source"), bus("A"), bus("B")],
        [line("L1", "G", "A"), line("L2", "A", "B"), line("L3", "B", "G", state="open")],
    )
    net = load_network(ring)
    assert energized_buses(net) == {"G", "A", "B"}
    # alternate path: opening L1 leaves everything reachable through the ring
    rerouted = apply_switch_action(apply_switch_action(net, "L3", SwitchState.CLOSED), "L1", SwitchState.OPEN)
    assert energized_buses(rerouted) == {"G", "A", "B"}


def test_energization_monotone_under_switching(keele):
    base = energized_buses(keele)
    for ln in keele.lines:
        if ln.switch_state is SwitchState.CLOSED:
            shrunk = energized_buses(apply_switch_action(keele, ln.id, SwitchState.OPEN))
            assert shrunk <= base, ln.id
        else:
            grown = energized_buses(apply_switch_action(keele, ln.id, SwitchState.CLOSED))
            assert grown >= base, ln.id


# -- switch actions --------------------------------------------------------

def test_switch_action_value_semantics(threebus):
    before = network_to_document(threebus)
    modified = apply_switch_action(threebus, "LN-B", SwitchState.OPEN)
    assert network_to_document(threebus) == before
    assert modified.line_map["LN-B"].switch_state is SwitchState.OPEN
    assert threebus.line_map["LN-B"].switch_state is SwitchState.CLOSED


def test_switch_action_idempotent_close(threebus):
    again = apply_switch_action(threebus, "LN-A", SwitchState.CLOSED)
    assert again == threebus


def test_switch_action_inverse_round_trip(threebus):
    there = apply_switch_action(threebus, "LN-B", SwitchState.OPEN)
    back = apply_switch_action(there, "LN-B", SwitchState.CLOSED)
    assert back == threebus


def test_switch_action_unknown_line(threebus):
    with pytest.raises(UnknownLineError, match="L99"):
        apply_switch_action(threebus, "L99", SwitchState.OPEN)


# -- validation ------------------------------------------------------------

def test_validate_radial_chain_is_clean():
    report = validate_topology(load_network(CHAIN))
    assert report.ok
    assert report.radial_violations == ()
    assert report.unreachable_buses == ()
    assert report.capacity_warnings == ()


def test_validate_reports_cycle():
    ring = doc(
        [bus("G", "grid_source"), bus("A"), bus("B")],
        [line("L1", "G", "A"), line("L2", "A", "B"), line("L3", "B", "G")],
    )
    report = validate_topology(load_network(ring))
    assert len(report.radial_violations) == 1
    assert set(report.radial_violations[0]) == {"G", "A", "B"}
    assert not report.ok


def test_validate_reports_unreachable_bus():
    isolated = copy.deepcopy(CHAIN)
    isolated["lines"][1]["switch_state"] = "open"
    report = validate_topology(load_network(isolated))
    assert report.unreachable_buses == ("B",)


def test_validate_reports_capacity_shortfall():
    weak = copy.deepcopy(CHAIN)
    weak["lines"][1]["capacity_kw"] = 500.0  # below the 800 kW downstream load
    report = validate_topology(load_network(weak))
    assert len(report.capacity_warnings) == 1
    line_id, cap, downstream = report.capacity_warnings[0]
    assert line_id == "L2"
    assert cap == 500.0
    assert downstream == 800.0


def test_validate_spanning_tree_of_ring_is_radial():
    ring = doc(
        [bus("G", "grid_source"), bus("A"), bus("B")],
        [line("L1", "G", "A"), line("L2", "A", "B"), line("L3", "B", "G")],
    )
    net = load_network(ring)
    for drop in ("L1", "L2", "L3"):
        tree = apply_switch_action(net, drop, SwitchState.OPEN)
        report = validate_topology(tree)
        assert report.radial_violations == ()
        assert report.unreachable_buses == ()
