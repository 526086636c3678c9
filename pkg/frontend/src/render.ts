/** Pure HTML/SVG string renderers over the view model.
 *
 * Everything here is a function of one ConsoleView, so the page always shows
 * a single consistent state; `mount` is the only DOM-touching call.
 */

import { committableScenario, kpiRawFields, scenarioDiff } from "./model.js";
import type { ConsoleView, PendingMarker, ProposalCard, TickerEntry } from "./model.js";
import type { LineDoc, NetworkDoc, Snapshot } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

// -- network diagram ----------------------------------------------------------

interface Point {
  x: number;
  y: number;
}

/** Deterministic 2-D layout: columns by hop distance from the grid source.
 *
 * Open lines count for placement, so a de-energized bus keeps its position.
 */
export function layoutBuses(net: NetworkDoc): Map<string, Point> {
  const adjacency = new Map<string, string[]>();
  for (const bus of net.buses) {
    adjacency.set(bus.id, []);
  }
  for (const line of net.lines) {
    adjacency.get(line.from_bus)?.push(line.to_bus);
    adjacency.get(line.to_bus)?.push(line.from_bus);
  }
  const source = net.buses.find((b) => b.kind === "grid_source") ?? net.buses[0];
  const depth = new Map<string, number>();
  if (source) {
    depth.set(source.id, 0);
    const queue = [source.id];
    while (queue.length > 0) {
      const bus = queue.shift()!;
      for (const next of adjacency.get(bus) ?? []) {
        if (!depth.has(next)) {
          depth.set(next, depth.get(bus)! + 1);
          queue.push(next);
        }
      }
    }
  }
  let maxDepth = 0;
  for (const bus of net.buses) {
    if (!depth.has(bus.id)) {
      depth.set(bus.id, maxDepth + 1); // disconnected: park in a far column
    }
    maxDepth = Math.max(maxDepth, depth.get(bus.id)!);
  }
  const columns = new Map<number, string[]>();
  for (const bus of net.buses) {
    const d = depth.get(bus.id)!;
    const column = columns.get(d) ?? [];
    column.push(bus.id);
    columns.set(d, column);
  }
  const points = new Map<string, Point>();
  for (const [d, ids] of columns) {
    ids.sort();
    ids.forEach((id, row) => {
      points.set(id, { x: 90 + d * 170, y: 60 + row * 90 });
    });
  }
  return points;
}

function lineColor(line: LineDoc, loading: number, outOfService: boolean): string {
  if (outOfService) {
    return "#999999";
  }
  if (line.switch_state === "open") {
    return "#667788";
  }
  if (loading >= 1.0) {
    return "#cc2222";
  }
  if (loading >= 0.8) {
    return "#d98b00";
  }
  return "#2a9d3a";
}

export function renderNetwork(view: ConsoleView): string {
  const snap = view.snapshot;
  if (!snap) {
    return '<svg class="network" data-empty="true"></svg>';
  }
  const net = snap.topology;
  const points = layoutBuses(net);
  const width = Math.max(...[...points.values()].map((p) => p.x)) + 90;
  const height = Math.max(...[...points.values()].map((p) => p.y)) + 60;
  const parts: string[] = [];
  for (const line of net.lines) {
    const a = points.get(line.from_bus);
    const b = points.get(line.to_bus);
    if (!a || !b) {
      continue;
    }
    const outOfService = snap.out_of_service.includes(line.id);
    const loading = view.lineLoading[line.id] ?? 0;
    const color = lineColor(line, loading, outOfService);
    const dash = line.switch_state === "open" || outOfService ? ' stroke-dasharray="6 5"' : "";
    parts.push(
      `<line data-line="${escapeHtml(line.id)}" data-state="${line.switch_state}"` +
        ` data-loading="${loading.toFixed(3)}"${outOfService ? ' data-out-of-service="true"' : ""}` +
        ` x1="${a.x}" y1="${a.y}" x2="${b.x}" y2="${b.y}" stroke="${color}" stroke-width="4"${dash}/>`,
    );
    const midX = (a.x + b.x) / 2;
    const midY = (a.y + b.y) / 2 - 6;
    parts.push(
      `<text x="${midX}" y="${midY}" class="line-label">${escapeHtml(line.id)}</text>`,
    );
  }
  for (const bus of net.buses) {
    const p = points.get(bus.id)!;
    const energized = snap.energized[bus.id] ?? false;
    const fill = energized ? "#2a9d3a" : "#bbbbbb";
    const shape =
      bus.kind === "grid_source"
        ? `<rect x="${p.x - 14}" y="${p.y - 14}" width="28" height="28" fill="${fill}"/>`
        : `<circle cx="${p.x}" cy="${p.y}" r="13" fill="${fill}"/>`;
    parts.push(
      `<g data-bus="${escapeHtml(bus.id)}" data-energized="${energized}">` +
        `${shape}<text x="${p.x}" y="${p.y + 30}" class="bus-label">${escapeHtml(bus.id)}</text></g>`,
    );
  }
  return (
    `<svg class="network" viewBox="0 0 ${width} ${height}" width="${width}" height="${height}">` +
    parts.join("") +
    "</svg>"
  );
}

// -- KPI tiles ------------------------------------------------------------------

function pendingBadge(pending: PendingMarker[], building: string): string {
  const hit = pending.some(
    (m) => m.kind === "ad_hoc_dsm" && m.payload["building"] === building,
  );
  return hit ? '<span class="badge pending" data-pending="true">pending</span>' : "";
}

/** Tiles print the service's own bytes for every KPI number. */
export function renderKpiTiles(view: ConsoleView): string {
  const raw = kpiRawFields(view.kpisRaw);
  const snap = view.snapshot;
  const tiles: string[] = [];
  for (const report of view.kpis) {
    const fields = raw.get(report.entity) ?? new Map<string, string>();
    const value = (key: string): string => escapeHtml(fields.get(key) ?? "");
    const live = snap?.buildings[report.entity];
    const liveRow = live
      ? `<div class="live">demand ${live.demand_kw.toFixed(1)} kW` +
        ` · adjust <span data-field="adjust_kw">${live.adjust_kw.toFixed(1)}</span> kW</div>`
      : "";
    tiles.push(
      `<article class="tile" data-entity="${escapeHtml(report.entity)}">` +
        `<h3>${escapeHtml(report.entity)}${pendingBadge(view.pending, report.entity)}</h3>` +
        `<dl>` +
        `<dt>renewables used</dt><dd data-kpi="renewables_kwh">${value("renewables_kwh")}</dd>` +
        `<dt>energy saved</dt><dd data-kpi="energy_saved_kwh">${value("energy_saved_kwh")}</dd>` +
        `<dt>carbon saved</dt><dd data-kpi="carbon_kg">${value("carbon_kg")}</dd>` +
        `<dt>self-sufficiency %</dt><dd data-kpi="ss_pct">${value("ss_pct")}</dd>` +
        `<dt>self-consumption %</dt><dd data-kpi="sc_pct">${value("sc_pct")}</dd>` +
        `</dl>${liveRow}</article>`,
    );
  }
  return `<section class="tiles">${tiles.join("")}</section>`;
}

// -- ticker, pending, proposals --------------------------------------------------

export function renderTicker(entries: TickerEntry[], limit = 200): string {
  const shown = entries.slice(-limit);
  const items = shown
    .map(
      (entry) =>
        `<li data-seq="${entry.seq}" data-kind="${entry.kind}">` +
        `<span class="seq">#${entry.seq}</span> ` +
        `<time>${escapeHtml(entry.timestamp)}</time> ` +
        `<span class="kind">${entry.kind}</span> ${escapeHtml(entry.text)}</li>`,
    )
    .join("");
  return `<ol class="ticker">${items}</ol>`;
}

export function renderPending(pending: PendingMarker[]): string {
  if (pending.length === 0) {
    return '<div class="pending-list" data-count="0"></div>';
  }
  const items = pending
    .map(
      (m) =>
        `<li data-token="${m.token}" data-kind="${escapeHtml(m.kind)}">${escapeHtml(m.summary)}</li>`,
    )
    .join("");
  return `<div class="pending-list" data-count="${pending.length}"><ul>${items}</ul></div>`;
}

export function renderProposals(proposals: ProposalCard[]): string {
  const cards = proposals
    .map((p) => {
      const actions = p.actions
        .map(([line, state]) => `<li>${escapeHtml(line)} &rarr; ${escapeHtml(state)}</li>`)
        .join("");
      const button = p.applied
        ? '<button disabled data-applied="true">applied</button>'
        : `<button data-action="approve-proposal" data-proposal-seq="${p.proposalSeq}">approve</button>`;
      return (
        `<article class="proposal" data-proposal-seq="${p.proposalSeq}" data-applied="${p.applied}">` +
        `<h3>restoration plan #${p.proposalSeq} (${escapeHtml(p.failed)} failed)</h3>` +
        `<ul>${actions}</ul>` +
        `<p>restores ${p.restoredBuses.map(escapeHtml).join(", ") || "nothing"};` +
        ` unserved ${p.unservedKw.toFixed(1)} kW; ${p.limitSafe ? "within" : "exceeds"} line limits</p>` +
        button +
        "</article>"
      );
    })
    .join("");
  return `<section class="proposals">${cards}</section>`;
}

// -- scenario diff ----------------------------------------------------------------

export function renderScenario(view: ConsoleView): string {
  const scenario = view.scenario;
  if (!scenario) {
    return '<section class="scenario" data-empty="true"></section>';
  }
  const diff = scenarioDiff(scenario.baseline, scenario.result);
  const rows = diff.rows
    .map(
      (row) =>
        `<tr data-entity="${escapeHtml(row.entity)}" data-field="${row.field}"` +
        ` data-zero="${row.delta === 0}">` +
        `<td>${escapeHtml(row.entity)}</td><td>${row.field}</td>` +
        `<td>${row.baseline}</td><td>${row.scenario}</td>` +
        `<td class="delta">${formatDelta(row.delta)}</td></tr>`,
    )
    .join("");
  const commit = scenario.committed
    ? '<button disabled data-committed="true">committed</button>'
    : committableScenario(scenario.request)
      ? '<button data-action="commit-scenario">commit to network</button>'
      : "";
  return (
    `<section class="scenario" data-name="${escapeHtml(scenario.result.scenario_name)}"` +
    ` data-all-zero="${diff.allZero}">` +
    `<h3>what-if: ${escapeHtml(scenario.result.scenario_name)}</h3>` +
    `<table class="diff"><thead><tr><th>entity</th><th>kpi</th><th>baseline</th>` +
    `<th>scenario</th><th>delta</th></tr></thead><tbody>${rows}</tbody></table>` +
    `<p class="diff-summary">CO2 delta <span data-field="co2_delta">${formatDelta(diff.co2DeltaKg)}</span> kg;` +
    ` worst loading delta <span data-field="loading_delta">${formatDelta(diff.worstLoadingDeltaPct)}</span> %;` +
    ` violations +${diff.violationsAdded}/-${diff.violationsRemoved}</p>` +
    commit +
    "</section>"
  );
}

function formatDelta(delta: number): string {
  if (delta === 0) {
    return "0";
  }
  return delta > 0 ? `+${delta}` : String(delta);
}

// -- page ---------------------------------------------------------------------------

function renderHeader(view: ConsoleView): string {
  const snap = view.snapshot;
  const clock = snap ? `${escapeHtml(snap.timestamp)} · interval ${snap.cursor}/${snap.horizon}` : "";
  return (
    `<header><h1>campus operator console</h1>` +
    `<span class="connection" data-connection="${view.connection}">${view.connection}</span>` +
    `<span class="seq" data-seq="${view.seq}">seq ${view.seq}</span>` +
    `<span class="clock">${clock}</span></header>`
  );
}

function renderLive(snap: Snapshot | null): string {
  if (!snap) {
    return '<section class="live-summary" data-empty="true"></section>';
  }
  const cells: [string, string][] = [
    ["demand_kw", snap.demand_kw.toFixed(1)],
    ["generation_kw", snap.generation_kw.toFixed(1)],
    ["grid_import_kw", snap.grid_import_kw.toFixed(1)],
    ["grid_export_kw", snap.grid_export_kw.toFixed(1)],
    ["battery_kw", snap.battery_kw.toFixed(1)],
    ["soc_kwh", snap.soc_kwh.toFixed(1)],
    ["scheduled_co2_kg", snap.scheduled_co2_kg.toFixed(2)],
    ["realized_co2_kg", snap.realized_co2_kg.toFixed(2)],
  ];
  const spans = cells
    .map(([field, value]) => `<span data-field="${field}">${value}</span>`)
    .join(" ");
  return `<section class="live-summary">${spans}</section>`;
}

export function renderError(view: ConsoleView): string {
  if (!view.lastError) {
    return '<div class="error" data-empty="true"></div>';
  }
  // the service's rejection text, verbatim (only HTML-escaped)
  return `<div class="error" role="alert">${escapeHtml(view.lastError)}</div>`;
}

export function renderApp(view: ConsoleView): string {
  return (
    '<div class="console">' +
    renderHeader(view) +
    renderError(view) +
    renderNetwork(view) +
    renderLive(view.snapshot) +
    renderKpiTiles(view) +
    renderProposals(view.proposals) +
    renderPending(view.pending) +
    renderScenario(view) +
    renderTicker(view.ticker) +
    "</div>"
  );
}

/** The single DOM write; everything above is pure. */
export function mount(root: { innerHTML: string }, view: ConsoleView): void {
  root.innerHTML = renderApp(view);
}
