// Service client: plain fetch wrappers plus the NDJSON event stream reader
// with resume-from-last-sequence reconnection.

import type { MenuOption, RunHandle, TraceEvent } from "./types.js";

export type FetchLike = typeof fetch;

export interface ApiResult<T> {
  status: number;
  body: T;
}

export class Api {
  constructor(
    private base: string,
    private fetchImpl: FetchLike = fetch,
  ) {}

  private async json<T>(path: string, init?: RequestInit): Promise<ApiResult<T>> {
    const resp = await this.fetchImpl(this.base + path, init);
    const body = (await resp.json()) as T;
    return { status: resp.status, body };
  }

  listRuns(): Promise<ApiResult<RunHandle[]>> {
    return this.json("/runs");
  }

  getRun(runId: string): Promise<ApiResult<Record<string, any>>> {
    return this.json(`/runs/${runId}`);
  }

  getMenu(runId: string): Promise<ApiResult<{ run_id: string; menu: MenuOption[] }>> {
    return this.json(`/runs/${runId}/menu`);
  }

  startRun(body: Record<string, unknown>): Promise<ApiResult<{ run_id: string }>> {
    return this.json("/runs", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  postResolution(
    runId: string,
    body: { option_label: string; actor: string; justification: string },
  ): Promise<ApiResult<Record<string, any>>> {
    return this.json(`/runs/${runId}/resolution`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }
}

export interface Subscription {
  stop(): void;
}

export interface StreamCallbacks {
  onEvent(event: TraceEvent): void;
  onConnection(state: "live" | "lost"): void;
  isDone(): boolean;
}

// Long-poll the NDJSON stream; each reconnect resumes after the last
// sequence number seen, so the view never misses or re-applies an event.
export function streamEvents(
  base: string,
  runId: string,
  callbacks: StreamCallbacks,
  fetchImpl: FetchLike = fetch,
  retryMs = 400,
): Subscription {
  let stopped = false;
  let lastSeq = -1;

  const loop = async () => {
    while (!stopped && !callbacks.isDone()) {
      try {
        const resp = await fetchImpl(
          `${base}/runs/${runId}/events?after=${lastSeq}&wait_s=20`,
        );
        if (!resp.ok || !resp.body) throw new Error(`HTTP ${resp.status}`);
        callbacks.onConnection("live");
        const reader = resp.body.getReader();
        const decoder = new TextDecoder();
        let buffer = "";
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          buffer += decoder.decode(value, { stream: true });
          let idx;
          while ((idx = buffer.indexOf("\n")) >= 0) {
            const line = buffer.slice(0, idx).trim();
            buffer = buffer.slice(idx + 1);
            if (!line) continue;
            const event = JSON.parse(line) as TraceEvent;
            lastSeq = Math.max(lastSeq, event.t);
            callbacks.onEvent(event);
          }
          if (stopped || callbacks.isDone()) return;
        }
      } catch {
        if (!stopped) callbacks.onConnection("lost");
        await new Promise((resolve) => setTimeout(resolve, retryMs));
      }
    }
  };
  void loop();
  return {
    stop() {
      stopped = true;
    },
  };
}
