/** Thin fetch wrapper around the run service plus an SSE frame parser.
 *
 * The parser is standalone so tests can feed it arbitrary chunk
 * boundaries without a network.
 */

import type {
  ArtifactInfo,
  AuthorizationEntry,
  EventPage,
  ProvenanceEvent,
  RunSummary,
  TimingView,
} from "./types.js";

export interface SseFrame {
  id: string | null;
  event: string;
  data: string;
}

/** Incremental parser for text/event-stream bytes. Feed decoded text
 * in any chunking; complete frames come back in order. */
export class SseParser {
  private buffer = "";

  feed(text: string): SseFrame[] {
    this.buffer += text;
    const frames: SseFrame[] = [];
    for (;;) {
      const cut = this.buffer.indexOf("\n\n");
      if (cut < 0) break;
      const raw = this.buffer.slice(0, cut);
      this.buffer = this.buffer.slice(cut + 2);
      const frame: SseFrame = { id: null, event: "message", data: "" };
      const dataLines: string[] = [];
      for (const line of raw.split("\n")) {
        if (line.startsWith("id:")) frame.id = line.slice(3).trim();
        else if (line.startsWith("event:")) frame.event = line.slice(6).trim();
        else if (line.startsWith("data:")) dataLines.push(line.slice(5).trim());
      }
      frame.data = dataLines.join("\n");
      frames.push(frame);
    }
    return frames;
  }
}

export interface ClientOptions {
  role?: "operator" | "viewer";
  token?: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    public baseUrl: string,
    private options: ClientOptions = {},
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  headers(): Record<string, string> {
    const h: Record<string, string> = {};
    if (this.options.token) h["x-auth-token"] = this.options.token;
    else if (this.options.role) h["x-role"] = this.options.role;
    return h;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers = this.headers();
    if (body !== undefined) headers["content-type"] = "application/json";
    const resp = await fetch(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) {
      let detail = `${resp.status}`;
      try {
        const doc = await resp.json();
        detail = doc.detail ?? JSON.stringify(doc);
      } catch {
        // Non-JSON error body; keep the status text.
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  health(): Promise<{ status: string; runs: number }> {
    return this.request("GET", "/health");
  }

  listRuns(): Promise<{ runs: RunSummary[] }> {
    return this.request("GET", "/runs");
  }

  createRun(body: {
    mode?: string;
    script?: string | null;
    run_id?: string | null;
    stage_inputs?: boolean;
  }): Promise<RunSummary> {
    return this.request("POST", "/runs", body);
  }

  run(runId: string): Promise<RunSummary> {
    return this.request("GET", `/runs/${encodeURIComponent(runId)}`);
  }

  state(runId: string): Promise<Record<string, any>> {
    return this.request("GET", `/runs/${encodeURIComponent(runId)}/state`);
  }

  events(runId: string, cursor = 0, limit = 1000): Promise<EventPage> {
    const q = `?cursor=${cursor}&limit=${limit}`;
    return this.request("GET", `/runs/${encodeURIComponent(runId)}/events${q}`);
  }

  /** Page through /events until the server-reported total is reached. */
  async allEvents(runId: string): Promise<ProvenanceEvent[]> {
    const out: ProvenanceEvent[] = [];
    let cursor = 0;
    for (;;) {
      const page = await this.events(runId, cursor);
      out.push(...page.events);
      cursor = page.next_cursor;
      if (out.length >= page.total || page.events.length === 0) return out;
    }
  }

  postMessage(runId: string, text: string): Promise<RunSummary> {
    return this.request("POST", `/runs/${encodeURIComponent(runId)}/messages`, { text });
  }

  postValue(runId: string, name: string, value: unknown): Promise<RunSummary> {
    return this.request("POST", `/runs/${encodeURIComponent(runId)}/values`, {
      name,
      value,
    });
  }

  authorizations(
    runId: string,
  ): Promise<{ authorizations: AuthorizationEntry[]; pending: string | null }> {
    return this.request("GET", `/runs/${encodeURIComponent(runId)}/authorizations`);
  }

  decide(
    runId: string,
    requestId: string,
    decision: "approved" | "rejected",
    rationale = "",
  ): Promise<{ request_id: string; status: string; changed: boolean; run: RunSummary }> {
    const path =
      `/runs/${encodeURIComponent(runId)}` +
      `/authorizations/${encodeURIComponent(requestId)}`;
    return this.request("POST", path, { decision, rationale });
  }

  artifacts(runId: string): Promise<{ artifacts: ArtifactInfo[] }> {
    return this.request("GET", `/runs/${encodeURIComponent(runId)}/artifacts`);
  }

  artifactUrl(runId: string, name: string): string {
    return (
      this.baseUrl +
      `/runs/${encodeURIComponent(runId)}/artifacts/${encodeURIComponent(name)}`
    );
  }

  timing(runId: string): Promise<TimingView> {
    return this.request("GET", `/runs/${encodeURIComponent(runId)}/timing`);
  }

  audit(runId: string): Promise<Record<string, any>> {
    return this.request("GET", `/runs/${encodeURIComponent(runId)}/audit`);
  }

  replay(runId: string): Promise<Record<string, any>> {
    return this.request("GET", `/runs/${encodeURIComponent(runId)}/replay`);
  }

  manifest(runId: string): Promise<Record<string, any>> {
    return this.request("GET", `/runs/${encodeURIComponent(runId)}/manifest`);
  }

  /** Async stream of provenance events from /stream, ending when the
   * server sends its end frame or the response closes. */
  async *stream(
    runId: string,
    cursor = 0,
    follow = false,
    timeoutS = 30,
  ): AsyncGenerator<ProvenanceEvent> {
    const q = `?cursor=${cursor}&follow=${follow}&timeout_s=${timeoutS}`;
    const resp = await fetch(
      this.baseUrl + `/runs/${encodeURIComponent(runId)}/stream${q}`,
      { headers: this.headers() },
    );
    if (!resp.ok || resp.body === null) {
      throw new ApiError(resp.status, `stream failed (${resp.status})`);
    }
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    try {
      for (;;) {
        const { done, value } = await reader.read();
        if (done) return;
        for (const frame of parser.feed(decoder.decode(value, { stream: true }))) {
          if (frame.event === "end") return;
          if (frame.event === "provenance") {
            yield JSON.parse(frame.data) as ProvenanceEvent;
          }
        }
      }
    } finally {
      await reader.cancel().catch(() => undefined);
    }
  }
}
