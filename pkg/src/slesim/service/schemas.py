"""Request/response models for the HTTP API."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class ActionRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal[
        "switch_action",
        "commit_network_mod",
        "ad_hoc_dsm",
        "inject_outage",
        "apply_restoration_plan",
    ]
    payload: dict = Field(default_factory=dict)
    actor: str = "operator"


class ActionResponse(BaseModel):
    seq: int
    kind: str
    timestamp: str
    body: dict


class ScenarioRequest(BaseModel):
    # a typo'd override must not silently fall back to the baseline
    model_config = ConfigDict(extra="forbid")

    name: str = "scenario"
    demand_scale: dict[str, float] = Field(default_factory=dict)
    switch_overrides: dict[str, str] = Field(default_factory=dict)
    add_assets: list[dict] = Field(default_factory=list)
    remove_assets: list[str] = Field(default_factory=list)
    rerate_assets: dict[str, float] = Field(default_factory=dict)
    weather_csv: Optional[str] = None
    carbon_csv: Optional[str] = None
    strategy: Optional[str] = None


class WhatIfRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    switch_states: dict[str, str] = Field(default_factory=dict)
    add_lines: list[dict] = Field(default_factory=list)
    remove_lines: list[str] = Field(default_factory=list)
    outage_probes: list[str] = Field(default_factory=list)
