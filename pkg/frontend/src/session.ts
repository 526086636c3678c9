/** Live console session: hydrate, follow the event stream, submit actions.
 *
 * Every view mutation runs through one serialized queue, so renders always
 * see a single consistent state. The stream is resumed with `?from=` after
 * drops; if the service identity changed (its head seq went backwards), the
 * session rehydrates from scratch instead, which keeps the ticker free of
 * duplicate or phantom entries.
 *
 * The only mutating requests this module ever issues are POST /actions and
 * the scenario commit path (itself a POST /actions); everything else is a GET
 * or the side-effect-free POST /scenarios.
 */

import { ApiError, GatewayClient } from "./api.js";
import type { FetchFn } from "./api.js";
import {
  addPending,
  acknowledgePending,
  applyEvent,
  applyKpis,
  committableScenario,
  failPending,
  hydrateSnapshot,
  newView,
  refreshSnapshot,
  resetForRestart,
} from "./model.js";
import type { ConsoleView } from "./model.js";
import { backoffDelays, pumpEvents } from "./sse.js";
import {
  validateAdHocDsm,
  validateApplyPlan,
  validateOutage,
  validateSwitch,
} from "./forms.js";
import type {
  ActionRequest,
  ActionResponse,
  GatewayEvent,
  ScenarioRequest,
  ScenarioResult,
} from "./types.js";

export interface SessionOptions {
  fetchFn?: FetchFn;
  onChange?: (view: ConsoleView) => void;
  initialBackoffMs?: number;
  maxBackoffMs?: number;
  sleepFn?: (ms: number) => Promise<void>;
}

function defaultSleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

function summarizeAction(request: ActionRequest): string {
  const payload = request.payload ?? {};
  const bits = Object.entries(payload)
    .map(([key, value]) => `${key}=${JSON.stringify(value)}`)
    .join(" ");
  return `${request.kind} ${bits}`.trim();
}

export class ConsoleSession {
  readonly view: ConsoleView = newView();
  readonly client: GatewayClient;

  private readonly fetchFn: FetchFn;
  private readonly onChange: (view: ConsoleView) => void;
  private readonly initialBackoffMs: number;
  private readonly maxBackoffMs: number;
  private readonly sleepFn: (ms: number) => Promise<void>;

  private queue: Promise<unknown> = Promise.resolve();
  private stopped = false;
  private controller: AbortController | null = null;
  private refreshQueued = false;
  private baseline: ScenarioResult | null = null;
  private streamDone: Promise<void> = Promise.resolve();

  constructor(baseUrl: string, options: SessionOptions = {}) {
    this.fetchFn = options.fetchFn ?? fetch;
    this.client = new GatewayClient(baseUrl, this.fetchFn);
    this.onChange = options.onChange ?? (() => undefined);
    this.initialBackoffMs = options.initialBackoffMs ?? 1000;
    this.maxBackoffMs = options.maxBackoffMs ?? 30000;
    this.sleepFn = options.sleepFn ?? defaultSleep;
  }

  // -- update queue --------------------------------------------------------

  private enqueue<T>(task: () => T | Promise<T>): Promise<T> {
    const next = this.queue.then(task);
    this.queue = next.then(
      () => undefined,
      () => undefined,
    );
    return next;
  }

  private notify(): void {
    this.onChange(this.view);
  }

  /** Wait until every queued update (including coalesced refreshes) ran. */
  async settle(): Promise<void> {
    for (;;) {
      const tail = this.queue;
      await tail.then(
        () => undefined,
        () => undefined,
      );
      if (tail === this.queue) {
        return;
      }
    }
  }

  // -- connection ----------------------------------------------------------

  /** Hydrate from /state and /kpis, then follow /events from the next seq. */
  async connect(): Promise<void> {
    await this.enqueue(async () => {
      const [snap, kpis] = await Promise.all([this.client.state(), this.client.kpis()]);
      hydrateSnapshot(this.view, snap);
      applyKpis(this.view, kpis);
      this.view.connection = "live";
      this.notify();
    });
    this.streamDone = this.streamLoop(true);
  }

  async disconnect(): Promise<void> {
    this.stopped = true;
    this.controller?.abort();
    await this.streamDone;
    await this.enqueue(() => {
      this.view.connection = "closed";
      this.notify();
    });
  }

  private async streamLoop(justHydrated: boolean): Promise<void> {
    let nextDelay = backoffDelays(this.initialBackoffMs, this.maxBackoffMs);
    let skipResync = justHydrated;
    while (!this.stopped) {
      if (!skipResync && !(await this.resync())) {
        await this.sleepFn(nextDelay());
        continue;
      }
      skipResync = false;
      await this.settle();
      if (this.stopped) {
        return;
      }
      this.controller = new AbortController();
      const url = this.client.eventsUrl(this.view.streamSeq + 1, true);
      try {
        await pumpEvents(url, (event) => this.handleEvent(event), {
          fetchFn: this.fetchFn,
          signal: this.controller.signal,
          onOpen: () => {
            nextDelay = backoffDelays(this.initialBackoffMs, this.maxBackoffMs);
            void this.enqueue(() => {
              this.view.connection = "live";
              this.notify();
            });
          },
        });
      } catch {
        // fall through to retry
      }
      if (this.stopped) {
        return;
      }
      void this.enqueue(() => {
        this.view.connection = "reconnecting";
        this.notify();
      });
      await this.sleepFn(nextDelay());
    }
  }

  /** Re-align with the service before resuming the stream.
   *
   * A head seq lower than ours means a different service instance: start a
   * new epoch. Returns false while the service is unreachable.
   */
  private async resync(): Promise<boolean> {
    try {
      const snap = await this.client.state();
      const kpis = await this.client.kpis();
      await this.enqueue(() => {
        if (snap.seq < this.view.streamSeq) {
          resetForRestart(this.view, snap);
        } else {
          refreshSnapshot(this.view, snap);
        }
        applyKpis(this.view, kpis);
        this.notify();
      });
      return true;
    } catch {
      return false;
    }
  }

  private handleEvent(event: GatewayEvent): void {
    void this.enqueue(() => {
      if (!applyEvent(this.view, event)) {
        return;
      }
      this.notify();
      this.scheduleRefresh();
    });
  }

  /** Coalesced authoritative refresh: one per burst of applied events. */
  private scheduleRefresh(): void {
    if (this.refreshQueued || this.stopped) {
      return;
    }
    this.refreshQueued = true;
    void this.enqueue(async () => {
      this.refreshQueued = false;
      try {
        const [snap, kpis] = await Promise.all([this.client.state(), this.client.kpis()]);
        refreshSnapshot(this.view, snap);
        applyKpis(this.view, kpis);
        this.notify();
      } catch {
        // transient; the stream loop handles sustained failures
      }
    });
  }

  // -- operator actions ------------------------------------------------------

  /** Mirror of the service-side checks; [] when nothing obviously wrong. */
  validate(request: ActionRequest): string[] {
    const snap = this.view.snapshot;
    if (!snap) {
      return [];
    }
    const payload: Record<string, unknown> = request.payload ?? {};
    switch (request.kind) {
      case "switch_action":
        return validateSwitch(
          { line_id: String(payload["line_id"] ?? ""), state: String(payload["state"] ?? "") },
          snap,
        );
      case "ad_hoc_dsm":
        return validateAdHocDsm(
          {
            building: String(payload["building"] ?? ""),
            direction: String(payload["direction"] ?? ""),
            magnitude_kw: Number(payload["magnitude_kw"]),
            duration_intervals: Number(payload["duration_intervals"]),
            ...(payload["start_interval"] !== undefined
              ? { start_interval: Number(payload["start_interval"]) }
              : {}),
          },
          snap,
        );
      case "inject_outage":
        return validateOutage({ element: String(payload["element"] ?? "") }, snap);
      case "apply_restoration_plan":
        return validateApplyPlan(
          { proposal_seq: Number(payload["proposal_seq"]) },
          this.view,
        );
      case "commit_network_mod":
        return [];
    }
  }

  /** Validate, mark pending, POST; the marker clears on the applied event.
   *
   * Returns null when rejected (client- or service-side); the rejection text
   * lands in view.lastError verbatim.
   */
  async submitAction(request: ActionRequest): Promise<ActionResponse | null> {
    const errors = this.validate(request);
    if (errors.length > 0) {
      await this.enqueue(() => {
        this.view.lastError = errors.join("; ");
        this.notify();
      });
      return null;
    }
    const token = await this.enqueue(() => {
      const t = addPending(this.view, request.kind, summarizeAction(request), request.payload);
      this.view.lastError = null;
      this.notify();
      return t;
    });
    try {
      const response = await this.client.submitAction(request);
      await this.enqueue(() => {
        acknowledgePending(this.view, token, response.seq);
        this.notify();
      });
      return response;
    } catch (error) {
      const detail = error instanceof ApiError ? error.detail : String(error);
      await this.enqueue(() => {
        failPending(this.view, token, detail);
        this.notify();
      });
      if (error instanceof ApiError) {
        return null;
      }
      throw error;
    }
  }

  approveProposal(proposalSeq: number): Promise<ActionResponse | null> {
    return this.submitAction({
      kind: "apply_restoration_plan",
      payload: { proposal_seq: proposalSeq },
    });
  }

  // -- what-if ---------------------------------------------------------------

  /** Run a scenario against the twin; renders a diff, mutates nothing. */
  async runWhatIf(request: ScenarioRequest): Promise<void> {
    if (this.baseline === null) {
      this.baseline = await this.client.runScenario({ name: "baseline" });
    }
    const baseline = this.baseline;
    try {
      const result = await this.client.runScenario(request);
      await this.enqueue(() => {
        this.view.scenario = { request, baseline, result, committed: false };
        this.view.lastError = null;
        this.notify();
      });
    } catch (error) {
      const detail = error instanceof ApiError ? error.detail : String(error);
      await this.enqueue(() => {
        this.view.lastError = detail;
        this.notify();
      });
      if (!(error instanceof ApiError)) {
        throw error;
      }
    }
  }

  /** Commit a switch-only scenario through the action API. */
  async commitScenario(): Promise<ActionResponse | null> {
    const scenario = this.view.scenario;
    if (!scenario || scenario.committed || !committableScenario(scenario.request)) {
      await this.enqueue(() => {
        this.view.lastError = "scenario is not committable";
        this.notify();
      });
      return null;
    }
    const response = await this.submitAction({
      kind: "commit_network_mod",
      payload: { switch_states: scenario.request.switch_overrides ?? {} },
    });
    if (response !== null) {
      await this.enqueue(() => {
        if (this.view.scenario === scenario) {
          scenario.committed = true;
        }
        this.notify();
      });
    }
    return response;
  }
}
