/** Incremental parser and reader for the gateway's event stream.
 *
 * The service frames events as `id: <seq>\ndata: <json>\n\n`. EventSource
 * cannot send the `?from=` resume parameter, so the console reads the stream
 * through fetch and parses frames itself.
 */

import type { FetchFn } from "./api.js";
import type { GatewayEvent } from "./types.js";

export interface SseFrame {
  id: number | null;
  data: string;
}

/** Feed arbitrary chunk boundaries in; complete frames come out. */
export class SseParser {
  private buffer = "";

  push(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const frames: SseFrame[] = [];
    for (;;) {
      const normalized = this.buffer.replace(/\r\n/g, "\n");
      const cut = normalized.indexOf("\n\n");
      if (cut < 0) {
        break;
      }
      const block = normalized.slice(0, cut);
      this.buffer = normalized.slice(cut + 2);
      const frame = parseBlock(block);
      if (frame !== null) {
        frames.push(frame);
      }
    }
    return frames;
  }
}

function parseBlock(block: string): SseFrame | null {
  let id: number | null = null;
  const data: string[] = [];
  for (const line of block.split("\n")) {
    if (line.startsWith(":")) {
      continue; // comment / keep-alive
    }
    const sep = line.indexOf(":");
    if (sep < 0) {
      continue;
    }
    const field = line.slice(0, sep);
    let value = line.slice(sep + 1);
    if (value.startsWith(" ")) {
      value = value.slice(1);
    }
    if (field === "id") {
      const parsed = Number.parseInt(value, 10);
      id = Number.isNaN(parsed) ? null : parsed;
    } else if (field === "data") {
      data.push(value);
    }
  }
  if (data.length === 0) {
    return null;
  }
  return { id, data: data.join("\n") };
}

/** Read one followed stream until it ends or `signal` aborts.
 *
 * Events are delivered in arrival order; returns normally when the server
 * closes the stream, throws on network failure or abort.
 */
export async function pumpEvents(
  url: string,
  onEvent: (event: GatewayEvent) => void,
  options: { fetchFn?: FetchFn; signal?: AbortSignal; onOpen?: () => void } = {},
): Promise<void> {
  const fetchFn = options.fetchFn ?? fetch;
  const response = await fetchFn(url, {
    signal: options.signal,
    headers: { accept: "text/event-stream" },
  });
  if (!response.ok || !response.body) {
    throw new Error(`event stream failed: HTTP ${response.status}`);
  }
  options.onOpen?.();
  const reader = response.body.getReader();
  const decoder = new TextDecoder();
  const parser = new SseParser();
  try {
    for (;;) {
      const { done, value } = await reader.read();
      if (done) {
        return;
      }
      for (const frame of parser.push(decoder.decode(value, { stream: true }))) {
        onEvent(JSON.parse(frame.data) as GatewayEvent);
      }
    }
  } finally {
    reader.releaseLock();
    try {
      await response.body.cancel();
    } catch {
      // already closed
    }
  }
}

/** Exponential backoff schedule: base, base*2, ... capped at max. */
export function backoffDelays(baseMs = 1000, maxMs = 30000): () => number {
  let current = baseMs;
  return () => {
    const delay = current;
    current = Math.min(current * 2, maxMs);
    return delay;
  };
}
