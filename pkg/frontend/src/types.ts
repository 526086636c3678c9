/** Wire types for the gateway HTTP API.
 *
 * These mirror the JSON the service emits; the console never invents fields.
 */

export interface BusDoc {
  id: string;
  name: string;
  kind: "grid_source" | "substation" | "load_bus";
  nominal_kv: number;
}

export interface LineDoc {
  id: string;
  from_bus: string;
  to_bus: string;
  reactance_pu: number;
  capacity_kw: number;
  switch_state: "open" | "closed";
}

export interface AssetDoc {
  id: string;
  bus: string;
  kind: string;
  rating_kw: number;
  extra: Record<string, unknown>;
}

export interface NetworkDoc {
  base_mva: number;
  buses: BusDoc[];
  lines: LineDoc[];
  assets: AssetDoc[];
}

export interface BuildingLive {
  demand_kw: number;
  adjust_kw: number;
}

/** GET /state */
export interface Snapshot {
  seq: number;
  cursor: number;
  horizon: number;
  timestamp: string;
  interval_minutes: number;
  substation_count: number;
  topology: NetworkDoc;
  energized: Record<string, boolean>;
  out_of_service: string[];
  soc_kwh: number;
  battery_kw: number;
  grid_import_kw: number;
  grid_export_kw: number;
  demand_kw: number;
  generation_kw: number;
  scheduled_co2_kg: number;
  realized_co2_kg: number;
  strategy: string;
  pending_proposals: number[];
  clamp_count: number;
  buildings: Record<string, BuildingLive>;
}

/** One element of the GET /kpis payload. */
export interface KpiReport {
  entity: string;
  window_start: string;
  window_end: string;
  ss_pct: number;
  sc_pct: number;
  renewables_kwh: number;
  energy_saved_kwh: number;
  carbon_kg: number;
}

export type EventKind =
  | "reading"
  | "action_applied"
  | "violation"
  | "clamp"
  | "restoration_proposed";

/** One event from GET /events (the `data:` payload). */
export interface GatewayEvent {
  seq: number;
  timestamp: string;
  kind: EventKind;
  body: Record<string, unknown>;
}

/** POST /actions request. */
export interface ActionRequest {
  kind:
    | "switch_action"
    | "commit_network_mod"
    | "ad_hoc_dsm"
    | "inject_outage"
    | "apply_restoration_plan";
  payload: Record<string, unknown>;
  actor?: string;
}

/** POST /actions response (the applied event). */
export interface ActionResponse {
  seq: number;
  kind: string;
  timestamp: string;
  body: Record<string, unknown>;
}

/** POST /scenarios request. */
export interface ScenarioRequest {
  name?: string;
  demand_scale?: Record<string, number>;
  switch_overrides?: Record<string, string>;
  add_assets?: Record<string, unknown>[];
  remove_assets?: string[];
  rerate_assets?: Record<string, number>;
  weather_csv?: string | null;
  carbon_csv?: string | null;
  strategy?: string | null;
}

export interface PowerflowSummary {
  worst_line_id: string | null;
  worst_loading_pct: number;
  worst_interval: number;
  violations: [number, string, number, number][];
}

export interface DispatchSummary {
  strategy: string;
  total_co2_kg: number;
  baseline_co2_kg: number;
  clamp_count: number;
}

/** POST /scenarios response. */
export interface ScenarioResult {
  scenario_name: string;
  window_start: string;
  window_end: string;
  kpis: KpiReport[];
  powerflow: PowerflowSummary;
  dispatch: DispatchSummary;
  provenance: string;
}

/** POST /network/what-if request. */
export interface WhatIfRequest {
  switch_states?: Record<string, string>;
  add_lines?: Record<string, unknown>[];
  remove_lines?: string[];
  outage_probes?: string[];
}

export interface RestorationOutcome {
  failed: string;
  restored_buses: string[];
  unserved_kw: number;
  actions: [string, string][];
  limit_safe: boolean;
}

/** POST /network/what-if response. */
export interface WhatIfReport {
  validation: {
    ok: boolean;
    radial_violations: string[];
    unreachable_buses: string[];
    capacity_warnings: string[];
  };
  de_energized_buses: string[];
  limit_violations: [string, number, number][];
  fault_currents_ka: Record<string, number>;
  restoration: RestorationOutcome[];
}

/** POST /advance response. */
export interface AdvanceResponse {
  advanced: number;
  cursor: number;
}
