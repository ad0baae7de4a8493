/**
 * Typed client for the replay measurement server.
 *
 * Works in the browser and under node 18+, both of which provide fetch
 * and web streams. The event stream is consumed with fetch instead of
 * EventSource so the parser is unit-testable and the reconnect policy
 * stays in our hands.
 */

// -- wire types ------------------------------------------------------------

export interface TestCell {
  protocol: string;
  framework: string;
  outcome: "pass" | "fail" | null;
  attempt: number;
  classified: boolean;
}

export interface UnclassifiedRef {
  protocol: string;
  framework: string;
  attempt: number;
}

export interface OpenActivity {
  version: number;
  category: string;
  protocol: string;
  framework: string | null;
  note: string;
  wall: string;
  elapsed_s?: number;
}

export interface ProtocolRef {
  id: string;
  title?: string;
  selected?: boolean;
}

export interface ProjectConfigPayload {
  name: string;
  repo: string;
  branch: string;
  build_command: string;
  protocols: ProtocolRef[];
  frameworks: { id: string; name?: string }[];
  tests: { protocol: string; framework: string }[];
  options: Record<string, unknown>;
}

export interface SessionSnapshot {
  configured: boolean;
  started: boolean;
  completed: boolean;
  num_versions: number | null;
  versions_completed: number;
  current_version: number | null;
  next_version: number | null;
  build_ok: boolean | null;
  open_activity: OpenActivity | null;
  last_seq: number;
  server_time: string;
  config?: ProjectConfigPayload;
  test_grid?: TestCell[];
  unclassified?: UnclassifiedRef[];
}

export interface LedgerMessage {
  type: "ledger";
  seq: number;
  at: string;
  kind: string;
  payload: Record<string, any>;
}

export interface TickActivity {
  category: string;
  protocol: string;
  framework: string | null;
  version: number;
  elapsed_s: number;
}

export interface TickMessage {
  type: "tick";
  now: string;
  seq: number;
  open_activity: TickActivity | null;
}

export type StreamMessage = LedgerMessage | TickMessage;

export interface CurvePayload {
  origin: string;
  steps: number[];
  minutes: number[];
  calendar?: string[];
}

export interface BandsPayload {
  steps: number[];
  lower: number[];
  median: number[];
  upper: number[];
  observed_steps: number;
  horizon: number;
  implementation_minutes: number;
  saturated: boolean;
}

export interface RoiResultPayload {
  break_even_step: number | null;
  beyond_horizon: boolean;
  break_even_minutes: number | null;
  horizon: number;
  model: string;
  interval?: [number | null, number | null];
  beyond_horizon_fraction?: number;
}

export interface EstimatePayload {
  framework: string;
  model: string;
  schedule: string;
  session_cost: number;
  accrual: string;
  seed: number;
  agt_curve: CurvePayload;
  mgt_curve: CurvePayload;
  fit?: { a: number; b: number; rmse: number; kind: string };
  posterior?: Record<string, any>;
  diagnostics_ok?: boolean;
  warnings?: string[];
  bands?: BandsPayload;
  roi: RoiResultPayload;
}

export interface RoiParams {
  framework: string;
  schedule?: "weekly" | "monthly" | "per-version";
  sessionCost?: number;
  accrual?: "per-step" | "calendar";
  model?: "linear" | "log" | "bayes";
  horizon?: number;
  seed?: number;
  includeBugTime?: boolean;
}

// -- errors ----------------------------------------------------------------

export class ApiError extends Error {
  constructor(readonly status: number, readonly payload: any) {
    super(
      payload && typeof payload.error === "string"
        ? payload.error
        : `HTTP ${status}`,
    );
    this.name = "ApiError";
  }

  /** The server refused because the session state forbids the command. */
  get blocked(): boolean {
    return this.status === 409 && this.payload?.blocked === true;
  }

  /** expect_seq no longer matches; refetch and let the user retry. */
  get stale(): boolean {
    return this.status === 409 && !this.payload?.blocked;
  }
}

export function newCommandId(): string {
  const c: any = (globalThis as any).crypto;
  if (c && typeof c.randomUUID === "function") return c.randomUUID();
  return (
    "cmd-" +
    Date.now().toString(36) +
    "-" +
    Math.random().toString(36).slice(2, 10)
  );
}

export function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

// -- client ----------------------------------------------------------------

export interface CommandResult {
  ok: boolean;
  seq: number;
  result: unknown;
}

export class ConsoleClient {
  constructor(
    readonly baseUrl: string,
    readonly token: string,
  ) {}

  private headers(extra?: Record<string, string>): Record<string, string> {
    const h: Record<string, string> = { ...extra };
    if (this.token) h["Authorization"] = `Bearer ${this.token}`;
    return h;
  }

  private async getJson(path: string): Promise<any> {
    const res = await fetch(this.baseUrl + path, { headers: this.headers() });
    const body = await res.json();
    if (!res.ok) throw new ApiError(res.status, body);
    return body;
  }

  getSession(): Promise<SessionSnapshot & { [k: string]: any }> {
    return this.getJson("/api/session");
  }

  getTables(): Promise<{ seq: number; provenance: any; tables: any }> {
    return this.getJson("/api/tables");
  }

  getSeries(): Promise<{ seq: number; series: Record<string, any> }> {
    return this.getJson("/api/series");
  }

  getRoi(params: RoiParams): Promise<{ seq: number; estimate: EstimatePayload }> {
    const q = new URLSearchParams({ framework: params.framework });
    if (params.schedule) q.set("schedule", params.schedule);
    if (params.sessionCost !== undefined)
      q.set("session_cost", String(params.sessionCost));
    if (params.accrual) q.set("accrual", params.accrual);
    if (params.model) q.set("model", params.model);
    if (params.horizon !== undefined) q.set("horizon", String(params.horizon));
    if (params.seed !== undefined) q.set("seed", String(params.seed));
    if (params.includeBugTime !== undefined)
      q.set("include_bug_time", params.includeBugTime ? "1" : "0");
    return this.getJson(`/api/roi?${q.toString()}`);
  }

  async command(
    op: string,
    args: Record<string, unknown> = {},
    opts: { commandId?: string; expectSeq?: number } = {},
  ): Promise<CommandResult> {
    const body: Record<string, unknown> = {
      args,
      command_id: opts.commandId ?? newCommandId(),
    };
    if (opts.expectSeq !== undefined) body.expect_seq = opts.expectSeq;
    const res = await fetch(`${this.baseUrl}/api/commands/${op}`, {
      method: "POST",
      headers: this.headers({ "Content-Type": "application/json" }),
      body: JSON.stringify(body),
    });
    const payload = await res.json();
    if (!res.ok) throw new ApiError(res.status, payload);
    return payload as CommandResult;
  }

  /**
   * Retry a command over transport failures with one fixed command id.
   * The server deduplicates by id, so a retry after a lost response
   * cannot apply the command twice. A response from the server, even an
   * error, ends the retrying: the command was delivered.
   */
  async commandWithRetry(
    op: string,
    args: Record<string, unknown> = {},
    attempts = 3,
  ): Promise<CommandResult> {
    const commandId = newCommandId();
    let lastErr: unknown;
    for (let i = 0; i < attempts; i++) {
      try {
        return await this.command(op, args, { commandId });
      } catch (err) {
        if (err instanceof ApiError) throw err;
        lastErr = err;
        await sleep(150 * (i + 1));
      }
    }
    throw lastErr;
  }

  /** SSE endpoint URL; token travels as a query parameter here because
   * EventSource cannot set headers, and the server accepts both. */
  streamUrl(since: number): string {
    const q = new URLSearchParams({ since: String(since) });
    if (this.token) q.set("token", this.token);
    return `${this.baseUrl}/api/events?${q.toString()}`;
  }
}

// -- server-sent events ----------------------------------------------------

export interface SseFrame {
  event: string;
  data: any;
}

/**
 * Incremental SSE parser. Feed it text in whatever slicing the network
 * produced; it emits complete frames. Multiple data lines per frame are
 * joined with newlines per the SSE format.
 */
export class SseDecoder {
  private buffer = "";
  private eventName = "message";
  private dataLines: string[] = [];

  push(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const frames: SseFrame[] = [];
    let nl: number;
    while ((nl = this.buffer.indexOf("\n")) >= 0) {
      let line = this.buffer.slice(0, nl);
      this.buffer = this.buffer.slice(nl + 1);
      if (line.endsWith("\r")) line = line.slice(0, -1);
      if (line === "") {
        const frame = this.endFrame();
        if (frame) frames.push(frame);
      } else if (line.startsWith("event:")) {
        this.eventName = line.slice(6).trim();
      } else if (line.startsWith("data:")) {
        let value = line.slice(5);
        if (value.startsWith(" ")) value = value.slice(1);
        this.dataLines.push(value);
      }
      // comment lines and unknown fields fall through
    }
    return frames;
  }

  private endFrame(): SseFrame | null {
    if (this.dataLines.length === 0) {
      this.eventName = "message";
      return null;
    }
    const raw = this.dataLines.join("\n");
    const event = this.eventName;
    this.dataLines = [];
    this.eventName = "message";
    try {
      return { event, data: JSON.parse(raw) };
    } catch {
      return { event, data: raw };
    }
  }
}

export type StreamStatus = "connecting" | "live" | "disconnected" | "stopped";

/**
 * Long-lived subscription to /api/events.
 *
 * Replays history from the last seen ledger seq, then stays live. On any
 * transport fault it reports "disconnected", waits, and resubscribes
 * with since=lastSeq so no ledger event is delivered twice or skipped.
 */
export class EventStream {
  lastSeq = 0;
  status: StreamStatus = "connecting";
  private controller: AbortController | null = null;
  private stopping = false;

  constructor(
    private readonly client: ConsoleClient,
    private readonly onMessage: (msg: StreamMessage) => void,
    private readonly onStatus: (status: StreamStatus) => void = () => {},
    private readonly retryMs = 1000,
  ) {}

  /** Runs until stop(); resolves afterwards. Callers do not await this
   * in the browser, they just let it run. */
  async run(): Promise<void> {
    while (!this.stopping) {
      try {
        await this.readOnce();
      } catch {
        // transport fault, handled below by the retry loop
      }
      if (this.stopping) break;
      this.setStatus("disconnected");
      await sleep(this.retryMs);
    }
    this.setStatus("stopped");
  }

  stop(): void {
    this.stopping = true;
    this.controller?.abort();
  }

  private setStatus(status: StreamStatus): void {
    if (status !== this.status) {
      this.status = status;
      this.onStatus(status);
    }
  }

  private async readOnce(): Promise<void> {
    this.setStatus("connecting");
    this.controller = new AbortController();
    const res = await fetch(this.client.streamUrl(this.lastSeq), {
      signal: this.controller.signal,
    });
    if (!res.ok || !res.body) throw new Error(`stream rejected: ${res.status}`);
    this.setStatus("live");
    const decoder = new SseDecoder();
    const text = new TextDecoder();
    const reader = res.body.getReader();
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      for (const frame of decoder.push(text.decode(value, { stream: true }))) {
        const msg = frame.data as StreamMessage;
        if (msg && msg.type === "ledger" && typeof msg.seq === "number") {
          this.lastSeq = Math.max(this.lastSeq, msg.seq);
        }
        this.onMessage(msg);
      }
    }
  }
}
