/** Console view model: one plain object fed by a serialized update queue.
 *
 * Invariants the reducer enforces:
 *  - the rendered seq never decreases within a service epoch; stale or
 *    duplicate events are dropped, so the ticker never repeats an entry,
 *  - ticker order equals event seq order,
 *  - KPI tiles carry the verbatim /kpis response bytes; the console never
 *    recomputes a KPI,
 *  - pending markers are optimistic about *intent* only: state changes render
 *    once the matching action_applied event (or a fresh snapshot) arrives.
 */

import type { KpiPayload } from "./api.js";
import type {
  EventKind,
  GatewayEvent,
  KpiReport,
  ScenarioRequest,
  ScenarioResult,
  Snapshot,
} from "./types.js";

export type ConnectionState = "connecting" | "live" | "reconnecting" | "closed";

export interface TickerEntry {
  seq: number;
  timestamp: string;
  kind: EventKind;
  text: string;
}

export interface PendingMarker {
  token: number;
  kind: string;
  summary: string;
  payload: Record<string, unknown>;
  /** Seq of the applied event, once the POST /actions reply arrives. */
  seq: number | null;
  /** Canonical payload text, for matching when the stream wins the race. */
  payloadKey: string;
}

export interface ProposalCard {
  proposalSeq: number;
  failed: string;
  actions: [string, string][];
  restoredBuses: string[];
  unservedKw: number;
  limitSafe: boolean;
  applied: boolean;
}

export interface ScenarioView {
  request: ScenarioRequest;
  baseline: ScenarioResult;
  result: ScenarioResult;
  committed: boolean;
}

export interface ConsoleView {
  connection: ConnectionState;
  /** Highest seq the rendered view reflects; -1 before hydration. */
  seq: number;
  /** Last seq received over the event stream: the resume point and the
   * ticker's high-water mark. A snapshot refresh may know about newer state
   * (seq > streamSeq) while those events are still in flight; they must still
   * land in the ticker, so the two cursors are tracked separately. */
  streamSeq: number;
  /** Bumps when the service identity changes (restart with a fresh log). */
  epoch: number;
  snapshot: Snapshot | null;
  /** Verbatim GET /kpis response body. */
  kpisRaw: string;
  kpis: KpiReport[];
  ticker: TickerEntry[];
  pending: PendingMarker[];
  proposals: ProposalCard[];
  /** Loading fraction per line, from the service's line-limit checks. */
  lineLoading: Record<string, number>;
  scenario: ScenarioView | null;
  lastError: string | null;
}

export function newView(): ConsoleView {
  return {
    connection: "connecting",
    seq: -1,
    streamSeq: -1,
    epoch: 0,
    snapshot: null,
    kpisRaw: "[]",
    kpis: [],
    ticker: [],
    pending: [],
    proposals: [],
    lineLoading: {},
    scenario: null,
    lastError: null,
  };
}

function canonical(value: unknown): string {
  if (value === null || typeof value !== "object") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return `[${value.map(canonical).join(",")}]`;
  }
  const entries = Object.entries(value as Record<string, unknown>)
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
    .map(([k, v]) => `${JSON.stringify(k)}:${canonical(v)}`);
  return `{${entries.join(",")}}`;
}

/** Adopt a fresher snapshot from the same service epoch.
 *
 * Never moves seq backwards and never touches the stream cursor: events the
 * snapshot already covers still belong in the ticker when they stream in.
 */
export function refreshSnapshot(view: ConsoleView, snap: Snapshot): void {
  view.snapshot = snap;
  view.seq = Math.max(view.seq, snap.seq);
  const pendingSeqs = new Set(snap.pending_proposals);
  for (const proposal of view.proposals) {
    if (proposal.proposalSeq <= snap.seq && !pendingSeqs.has(proposal.proposalSeq)) {
      proposal.applied = true;
    }
  }
  // markers whose applied event is already inside this snapshot are done
  view.pending = view.pending.filter((m) => m.seq === null || m.seq > snap.seq);
}

/** First hydration: adopt the snapshot and start the ticker after it. */
export function hydrateSnapshot(view: ConsoleView, snap: Snapshot): void {
  refreshSnapshot(view, snap);
  view.streamSeq = snap.seq;
}

/** Start over against a restarted service: new epoch, new sequence space. */
export function resetForRestart(view: ConsoleView, snap: Snapshot): void {
  view.epoch += 1;
  view.seq = snap.seq;
  view.streamSeq = snap.seq;
  view.snapshot = snap;
  view.ticker = [];
  view.pending = [];
  view.proposals = [];
  view.lineLoading = {};
  for (const pseq of snap.pending_proposals) {
    // placeholders until the restarted service's events describe them
    view.proposals.push({
      proposalSeq: pseq,
      failed: "",
      actions: [],
      restoredBuses: [],
      unservedKw: 0,
      limitSafe: true,
      applied: false,
    });
  }
}

export function applyKpis(view: ConsoleView, payload: KpiPayload): void {
  view.kpisRaw = payload.raw;
  view.kpis = payload.reports;
}

export function describeEvent(event: GatewayEvent): string {
  const body = event.body;
  switch (event.kind) {
    case "reading": {
      const demand = body["demand_kw"];
      const generation = body["generation_kw"];
      return `interval ${body["interval"]}: demand ${fmtKw(demand)}, generation ${fmtKw(generation)}`;
    }
    case "action_applied":
      return `${body["action"]} by ${body["actor"]}`;
    case "violation": {
      if (Array.isArray(body["de_energized"])) {
        const cause = body["cause"] ? ` (cause ${body["cause"]})` : "";
        return `de-energized: ${(body["de_energized"] as string[]).join(", ")}${cause}`;
      }
      const lines = (body["lines"] as [string, number, number][]) ?? [];
      return `line limits exceeded: ${lines.map((l) => l[0]).join(", ")}`;
    }
    case "clamp":
      return `${body["clamp_kind"]} clamped ${fmtKw(body["requested"])} to ${fmtKw(body["applied"])}`;
    case "restoration_proposed":
      return `restoration plan #${body["proposal_seq"]} for ${body["failed"]}`;
  }
}

function fmtKw(value: unknown): string {
  return typeof value === "number" ? `${value.toFixed(1)} kW` : String(value);
}

function clearMatchingMarker(view: ConsoleView, event: GatewayEvent): void {
  const payloadKey = canonical(event.body["payload"] ?? {});
  const kind = String(event.body["action"] ?? "");
  let index = view.pending.findIndex((m) => m.seq === event.seq);
  if (index < 0) {
    index = view.pending.findIndex(
      (m) => m.seq === null && m.kind === kind && m.payloadKey === payloadKey,
    );
  }
  if (index >= 0) {
    view.pending.splice(index, 1);
  }
}

/** Apply one stream event. Returns false (and changes nothing) when the
 * ticker has already seen it.
 *
 * An event the snapshot already covers (seq <= snapshot.seq, because a
 * refresh won the race) still gets its ticker entry, but must not overwrite
 * the fresher snapshot fields.
 */
export function applyEvent(view: ConsoleView, event: GatewayEvent): boolean {
  if (event.seq <= view.streamSeq) {
    return false;
  }
  view.streamSeq = event.seq;
  view.seq = Math.max(view.seq, event.seq);
  view.ticker.push({
    seq: event.seq,
    timestamp: event.timestamp,
    kind: event.kind,
    text: describeEvent(event),
  });
  const snap = view.snapshot;
  const fresh = snap !== null && event.seq > snap.seq;
  const body = event.body;
  switch (event.kind) {
    case "reading": {
      if (snap && fresh) {
        snap.seq = event.seq;
        snap.timestamp = event.timestamp;
        snap.cursor = Number(body["interval"]) + 1;
        snap.demand_kw = Number(body["demand_kw"]);
        snap.generation_kw = Number(body["generation_kw"]);
        snap.grid_import_kw = Number(body["grid_import_kw"]);
        snap.grid_export_kw = Number(body["grid_export_kw"]);
        snap.battery_kw = Number(body["battery_kw"]);
        snap.soc_kwh = Number(body["soc_kwh"]);
      }
      break;
    }
    case "clamp": {
      if (snap && fresh) {
        snap.seq = event.seq;
        snap.clamp_count += 1;
      }
      break;
    }
    case "violation": {
      if (snap && fresh) {
        snap.seq = event.seq;
        if (Array.isArray(body["de_energized"])) {
          for (const bus of body["de_energized"] as string[]) {
            snap.energized[bus] = false;
          }
        }
      }
      if (Array.isArray(body["lines"])) {
        for (const entry of body["lines"] as [string, number, number][]) {
          const [lineId, flow, cap] = entry;
          if (cap > 0) {
            view.lineLoading[lineId] = Math.abs(flow) / cap;
          }
        }
      }
      break;
    }
    case "restoration_proposed": {
      const proposalSeq = Number(body["proposal_seq"]);
      if (snap && fresh) {
        snap.seq = event.seq;
        if (!snap.pending_proposals.includes(proposalSeq)) {
          snap.pending_proposals.push(proposalSeq);
        }
      }
      if (!view.proposals.some((p) => p.proposalSeq === proposalSeq)) {
        view.proposals.push({
          proposalSeq,
          failed: String(body["failed"]),
          actions: (body["actions"] as [string, string][]) ?? [],
          restoredBuses: (body["restored_buses"] as string[]) ?? [],
          unservedKw: Number(body["unserved_kw"]),
          limitSafe: Boolean(body["limit_safe"]),
          // a stale proposal event may describe one the snapshot already
          // saw applied; only list it as open if the snapshot agrees
          applied: !fresh && snap !== null && !snap.pending_proposals.includes(proposalSeq),
        });
      }
      break;
    }
    case "action_applied": {
      clearMatchingMarker(view, event);
      const action = String(body["action"]);
      if (action === "switch_action" && snap && fresh) {
        const lineId = String(body["line_id"]);
        const state = String(body["state"]);
        for (const line of snap.topology.lines) {
          if (line.id === lineId) {
            line.switch_state = state as "open" | "closed";
          }
        }
      } else if (action === "apply_restoration_plan") {
        const proposalSeq = Number(body["proposal_seq"]);
        if (snap) {
          snap.pending_proposals = snap.pending_proposals.filter((s) => s !== proposalSeq);
        }
        for (const proposal of view.proposals) {
          if (proposal.proposalSeq === proposalSeq) {
            proposal.applied = true;
          }
        }
      }
      if (snap && fresh) {
        snap.seq = event.seq;
      }
      break;
    }
  }
  return true;
}

let markerToken = 0;

export function addPending(
  view: ConsoleView,
  kind: string,
  summary: string,
  payload: Record<string, unknown>,
): number {
  markerToken += 1;
  view.pending.push({
    token: markerToken,
    kind,
    summary,
    payload,
    seq: null,
    payloadKey: canonical(payload ?? {}),
  });
  return markerToken;
}

/** Record the applied seq from the POST reply; clear if the event already streamed past. */
export function acknowledgePending(view: ConsoleView, token: number, seq: number): void {
  const marker = view.pending.find((m) => m.token === token);
  if (!marker) {
    return;
  }
  const snapshotSeq = view.snapshot?.seq ?? -1;
  if (seq <= view.streamSeq || seq <= snapshotSeq) {
    view.pending = view.pending.filter((m) => m.token !== token);
  } else {
    marker.seq = seq;
  }
}

export function failPending(view: ConsoleView, token: number, detail: string): void {
  view.pending = view.pending.filter((m) => m.token !== token);
  view.lastError = detail;
}

// -- scenarios ---------------------------------------------------------------

/** Only switch overrides can be committed back through the action API. */
export function committableScenario(request: ScenarioRequest): boolean {
  const switches = Object.keys(request.switch_overrides ?? {}).length > 0;
  const simulationOnly =
    Object.keys(request.demand_scale ?? {}).length > 0 ||
    (request.add_assets ?? []).length > 0 ||
    (request.remove_assets ?? []).length > 0 ||
    Object.keys(request.rerate_assets ?? {}).length > 0 ||
    request.weather_csv != null ||
    request.carbon_csv != null ||
    request.strategy != null;
  return switches && !simulationOnly;
}

export interface KpiDeltaRow {
  entity: string;
  field: string;
  baseline: number;
  scenario: number;
  delta: number;
}

export interface ScenarioDiffView {
  rows: KpiDeltaRow[];
  co2DeltaKg: number;
  worstLoadingDeltaPct: number;
  violationsAdded: number;
  violationsRemoved: number;
  allZero: boolean;
}

const KPI_FIELDS = ["ss_pct", "sc_pct", "renewables_kwh", "energy_saved_kwh", "carbon_kg"] as const;

/** Presentation diff of two service results; nothing here recomputes a KPI. */
export function scenarioDiff(baseline: ScenarioResult, result: ScenarioResult): ScenarioDiffView {
  const baseByEntity = new Map<string, KpiReport>(baseline.kpis.map((r) => [r.entity, r]));
  const rows: KpiDeltaRow[] = [];
  for (const report of result.kpis) {
    const base = baseByEntity.get(report.entity);
    for (const field of KPI_FIELDS) {
      const baseValue = base ? base[field] : 0;
      rows.push({
        entity: report.entity,
        field,
        baseline: baseValue,
        scenario: report[field],
        delta: report[field] - baseValue,
      });
    }
  }
  const baseKeys = new Set(baseline.powerflow.violations.map((v) => JSON.stringify(v)));
  const scenKeys = new Set(result.powerflow.violations.map((v) => JSON.stringify(v)));
  let added = 0;
  let removed = 0;
  for (const key of scenKeys) {
    if (!baseKeys.has(key)) added += 1;
  }
  for (const key of baseKeys) {
    if (!scenKeys.has(key)) removed += 1;
  }
  const co2DeltaKg = result.dispatch.total_co2_kg - baseline.dispatch.total_co2_kg;
  const worstLoadingDeltaPct =
    result.powerflow.worst_loading_pct - baseline.powerflow.worst_loading_pct;
  const allZero =
    rows.every((row) => row.delta === 0) &&
    co2DeltaKg === 0 &&
    worstLoadingDeltaPct === 0 &&
    added === 0 &&
    removed === 0;
  return { rows, co2DeltaKg, worstLoadingDeltaPct, violationsAdded: added, violationsRemoved: removed, allZero };
}

// -- verbatim KPI bytes --------------------------------------------------------

/** Raw field text per entity, straight from the /kpis response body.
 *
 * The payload is a flat array of flat objects, so a string-aware scan can
 * recover each number exactly as the service serialized it.
 */
export function kpiRawFields(raw: string): Map<string, Map<string, string>> {
  const result = new Map<string, Map<string, string>>();
  for (const objectText of splitFlatObjects(raw)) {
    const fields = new Map<string, string>();
    const pair = /"((?:[^"\\]|\\.)*)"\s*:\s*("(?:[^"\\]|\\.)*"|[^,}\]\s]+)/g;
    let match: RegExpExecArray | null;
    while ((match = pair.exec(objectText)) !== null) {
      fields.set(JSON.parse(`"${match[1]!}"`) as string, match[2]!);
    }
    const entityRaw = fields.get("entity");
    if (entityRaw !== undefined) {
      result.set(JSON.parse(entityRaw) as string, fields);
    }
  }
  return result;
}

function splitFlatObjects(raw: string): string[] {
  const out: string[] = [];
  let depth = 0;
  let start = -1;
  let inString = false;
  let escaped = false;
  for (let i = 0; i < raw.length; i++) {
    const ch = raw[i]!;
    if (inString) {
      if (escaped) {
        escaped = false;
      } else if (ch === "\\") {
        escaped = true;
      } else if (ch === '"') {
        inString = false;
      }
      continue;
    }
    if (ch === '"') {
      inString = true;
    } else if (ch === "{") {
      depth += 1;
      if (depth === 1) {
        start = i;
      }
    } else if (ch === "}") {
      depth -= 1;
      if (depth === 0 && start >= 0) {
        out.push(raw.slice(start, i + 1));
        start = -1;
      }
    }
  }
  return out;
}
