"""Shared fixtures: the two bundled network documents, parsed once."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from slesim.dispatch import BatteryState, DispatchProblem, FlexLoad
from slesim.network import load_network

FIXTURE_DIR = Path(__file__).parents[1] / "src" / "slesim" / "fixtures"


@pytest.fixture(scope="session")
def threebus_doc() -> dict:
    return json.loads((FIXTURE_DIR / "threebus.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def keele_doc() -> dict:
    return json.loads((FIXTURE_DIR / "keele.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def threebus(threebus_doc):
    return load_network(threebus_doc)


@pytest.fixture(scope="session")
def keele(keele_doc):
    return load_network(keele_doc)


@pytest.fixture()
def toy_problem() -> DispatchProblem:
    """Four 30-min intervals with a carbon peak worth shifting around."""
    return DispatchProblem(
        interval_minutes=30,
        horizon=4,
        demand_kw={"HALL": (800.0, 900.0, 700.0, 600.0)},
        renewable_kw={"PV": (0.0, 100.0, 300.0, 200.0)},
        grid_intensity=(0.30, 0.10, 0.25, 0.15),
        battery=BatteryState(
            soc_kwh=200.0, capacity_kwh=400.0, power_limit_kw=250.0,
            eta_charge=0.95, eta_discharge=0.95, asset_id="BESS",
        ),
        flexible=(FlexLoad(asset_id="HALL", shiftable_fraction=0.25, window=(0, 4)),),
    )
