import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, ConsoleClient, newCommandId } from "../src/api.js";

const realFetch = globalThis.fetch;

afterEach(() => {
  globalThis.fetch = realFetch;
  vi.restoreAllMocks();
});

function jsonResponse(status: number, payload: unknown): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("newCommandId", () => {
  it("produces distinct ids", () => {
    const seen = new Set<string>();
    for (let i = 0; i < 1000; i++) seen.add(newCommandId());
    expect(seen.size).toBe(1000);
  });
});

describe("ConsoleClient.command", () => {
  it("wraps args in the command envelope with an id", async () => {
    const bodies: any[] = [];
    globalThis.fetch = vi.fn(async (_url: any, init: any) => {
      bodies.push(JSON.parse(init.body));
      return jsonResponse(200, { ok: true, seq: 5, result: 5 });
    }) as any;
    const client = new ConsoleClient("http://h", "tok");
    const out = await client.command("record-test-run", { protocol: "p" });
    expect(out.seq).toBe(5);
    expect(bodies[0].args).toEqual({ protocol: "p" });
    expect(typeof bodies[0].command_id).toBe("string");
    expect(bodies[0].command_id.length).toBeGreaterThan(8);
  });

  it("sends expect_seq when given and raises a stale ApiError on 409", async () => {
    globalThis.fetch = vi.fn(async () =>
      jsonResponse(409, { error: "stale state", expected_seq: 4, actual_seq: 6 }),
    ) as any;
    const client = new ConsoleClient("http://h", "tok");
    const err = await client
      .command("classify", {}, { expectSeq: 4 })
      .catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.stale).toBe(true);
    expect(err.blocked).toBe(false);
  });

  it("marks blocked refusals", async () => {
    globalThis.fetch = vi.fn(async () =>
      jsonResponse(409, { error: "baseline incomplete", blocked: true }),
    ) as any;
    const client = new ConsoleClient("http://h", "tok");
    const err = await client.command("start", {}).catch((e) => e);
    expect(err.blocked).toBe(true);
    expect(err.stale).toBe(false);
  });
});

describe("ConsoleClient.commandWithRetry", () => {
  it("reuses one command id across transport failures", async () => {
    const bodies: any[] = [];
    let calls = 0;
    globalThis.fetch = vi.fn(async (_url: any, init: any) => {
      bodies.push(JSON.parse(init.body));
      calls++;
      if (calls === 1) throw new TypeError("fetch failed");
      return jsonResponse(200, { ok: true, seq: 9, result: 9 });
    }) as any;
    const client = new ConsoleClient("http://h", "tok");
    const out = await client.commandWithRetry("stop-activity", {});
    expect(out.seq).toBe(9);
    expect(bodies).toHaveLength(2);
    expect(bodies[0].command_id).toBe(bodies[1].command_id);
  });

  it("does not retry once the server has answered", async () => {
    let calls = 0;
    globalThis.fetch = vi.fn(async () => {
      calls++;
      return jsonResponse(400, { error: "unknown framework" });
    }) as any;
    const client = new ConsoleClient("http://h", "tok");
    await expect(client.commandWithRetry("run-test", {})).rejects.toThrow(
      "unknown framework",
    );
    expect(calls).toBe(1);
  });
});

describe("urls and auth", () => {
  it("builds the stream url with since and token", () => {
    const client = new ConsoleClient("http://h:81", "se cret");
    const url = client.streamUrl(42);
    expect(url).toContain("/api/events?");
    expect(url).toContain("since=42");
    expect(url).toContain("token=se+cret");
  });

  it("sends the bearer header on reads", async () => {
    let headers: any = null;
    globalThis.fetch = vi.fn(async (_url: any, init: any) => {
      headers = init.headers;
      return jsonResponse(200, { configured: true });
    }) as any;
    const client = new ConsoleClient("http://h", "tok");
    await client.getSession();
    expect(headers["Authorization"]).toBe("Bearer tok");
  });

  it("maps roi params to the server's query names", async () => {
    let url = "";
    globalThis.fetch = vi.fn(async (u: any) => {
      url = String(u);
      return jsonResponse(200, { seq: 1, estimate: {} });
    }) as any;
    const client = new ConsoleClient("http://h", "tok");
    await client.getRoi({
      framework: "fw",
      schedule: "monthly",
      sessionCost: 60,
      accrual: "calendar",
      model: "log",
      horizon: 12,
      includeBugTime: false,
    });
    expect(url).toContain("framework=fw");
    expect(url).toContain("schedule=monthly");
    expect(url).toContain("session_cost=60");
    expect(url).toContain("accrual=calendar");
    expect(url).toContain("model=log");
    expect(url).toContain("horizon=12");
    expect(url).toContain("include_bug_time=0");
  });
});
