/** Thin fetch client for the gateway HTTP API. */

import type {
  ActionRequest,
  ActionResponse,
  AdvanceResponse,
  KpiReport,
  NetworkDoc,
  ScenarioRequest,
  ScenarioResult,
  Snapshot,
  WhatIfReport,
  WhatIfRequest,
} from "./types.js";

export type FetchFn = typeof fetch;

/** Non-2xx reply; `detail` is the service's error text, verbatim. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

function detailText(payload: unknown, fallback: string): string {
  if (payload && typeof payload === "object" && "detail" in payload) {
    const detail = (payload as { detail: unknown }).detail;
    return typeof detail === "string" ? detail : JSON.stringify(detail);
  }
  return fallback;
}

/** The /kpis payload, kept both parsed and as the exact bytes served. */
export interface KpiPayload {
  raw: string;
  reports: KpiReport[];
}

export class GatewayClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchFn = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    const text = await response.text();
    if (!response.ok) {
      let payload: unknown = null;
      try {
        payload = JSON.parse(text);
      } catch {
        // non-JSON error body: fall through to the raw text
      }
      throw new ApiError(response.status, detailText(payload, text));
    }
    return JSON.parse(text) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  network(): Promise<NetworkDoc> {
    return this.request<NetworkDoc>("/network");
  }

  state(): Promise<Snapshot> {
    return this.request<Snapshot>("/state");
  }

  /** KPI reports plus the verbatim response body (tiles render those bytes). */
  async kpis(window = "all"): Promise<KpiPayload> {
    const response = await this.fetchFn(
      `${this.baseUrl}/kpis?window=${encodeURIComponent(window)}`,
    );
    const raw = await response.text();
    if (!response.ok) {
      let payload: unknown = null;
      try {
        payload = JSON.parse(raw);
      } catch {
        // keep raw text
      }
      throw new ApiError(response.status, detailText(payload, raw));
    }
    return { raw, reports: JSON.parse(raw) as KpiReport[] };
  }

  submitAction(request: ActionRequest): Promise<ActionResponse> {
    return this.post<ActionResponse>("/actions", request);
  }

  advance(intervals = 1): Promise<AdvanceResponse> {
    return this.post<AdvanceResponse>(`/advance?intervals=${intervals}`, null);
  }

  runScenario(request: ScenarioRequest): Promise<ScenarioResult> {
    return this.post<ScenarioResult>("/scenarios", request);
  }

  whatIf(request: WhatIfRequest): Promise<WhatIfReport> {
    return this.post<WhatIfReport>("/network/what-if", request);
  }

  eventsUrl(fromSeq: number, follow = true): string {
    return `${this.baseUrl}/events?from=${fromSeq}&follow=${follow}`;
  }
}
