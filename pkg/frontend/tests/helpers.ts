/** Shared fixtures for the console unit tests: a small campus feeder. */

import type {
  GatewayEvent,
  EventKind,
  NetworkDoc,
  Snapshot,
} from "../src/types.js";

export function makeNetwork(): NetworkDoc {
  return {
    base_mva: 10.0,
    buses: [
      { id: "GRID", name: "grid intake", kind: "grid_source", nominal_kv: 33.0 },
      { id: "SUB-A", name: "substation A", kind: "substation", nominal_kv: 11.0 },
      { id: "BLDG-B", name: "building B", kind: "load_bus", nominal_kv: 0.4 },
      { id: "BLDG-C", name: "building C", kind: "load_bus", nominal_kv: 0.4 },
    ],
    lines: [
      {
        id: "L1",
        from_bus: "GRID",
        to_bus: "SUB-A",
        reactance_pu: 0.01,
        capacity_kw: 5000,
        switch_state: "closed",
      },
      {
        id: "L2",
        from_bus: "SUB-A",
        to_bus: "BLDG-B",
        reactance_pu: 0.02,
        capacity_kw: 3000,
        switch_state: "closed",
      },
      {
        id: "L3",
        from_bus: "SUB-A",
        to_bus: "BLDG-C",
        reactance_pu: 0.02,
        capacity_kw: 3000,
        switch_state: "closed",
      },
      {
        id: "T2",
        from_bus: "GRID",
        to_bus: "BLDG-B",
        reactance_pu: 0.03,
        capacity_kw: 3000,
        switch_state: "open",
      },
    ],
    assets: [
      { id: "GRID-TIE", bus: "GRID", kind: "grid_tie", rating_kw: 10000, extra: {} },
      { id: "PV-B", bus: "BLDG-B", kind: "pv", rating_kw: 150, extra: {} },
      { id: "FLEX-B", bus: "BLDG-B", kind: "flexible_load", rating_kw: 400, extra: {} },
      { id: "LOAD-C", bus: "BLDG-C", kind: "fixed_load", rating_kw: 300, extra: {} },
    ],
  };
}

export function makeSnapshot(overrides: Partial<Snapshot> = {}): Snapshot {
  return {
    seq: 0,
    cursor: 0,
    horizon: 48,
    timestamp: "2022-06-06T00:00:00+00:00",
    interval_minutes: 30,
    substation_count: 1,
    topology: makeNetwork(),
    energized: { GRID: true, "SUB-A": true, "BLDG-B": true, "BLDG-C": true },
    out_of_service: [],
    soc_kwh: 200.0,
    battery_kw: 0.0,
    grid_import_kw: 480.0,
    grid_export_kw: 0.0,
    demand_kw: 560.0,
    generation_kw: 80.0,
    scheduled_co2_kg: 1210.5,
    realized_co2_kg: 0.0,
    strategy: "lp",
    pending_proposals: [],
    clamp_count: 0,
    buildings: {
      "FLEX-B": { demand_kw: 320.0, adjust_kw: 0.0 },
      "LOAD-C": { demand_kw: 240.0, adjust_kw: 0.0 },
    },
    ...overrides,
  };
}

export function makeEvent(
  seq: number,
  kind: EventKind,
  body: Record<string, unknown>,
  timestamp = "2022-06-06T00:30:00+00:00",
): GatewayEvent {
  return { seq, timestamp, kind, body };
}

export function readingEvent(seq: number, interval: number): GatewayEvent {
  return makeEvent(seq, "reading", {
    interval,
    demand_kw: 500.0 + interval,
    generation_kw: 90.0 + interval,
    grid_import_kw: 410.0,
    grid_export_kw: 0.0,
    battery_kw: -20.0,
    soc_kwh: 210.0 + interval,
  });
}
