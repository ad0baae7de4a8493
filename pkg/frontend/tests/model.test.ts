import { describe, expect, it } from "vitest";

import type { SessionSnapshot, TestCell, TickMessage } from "../src/api.js";
import { ConsoleViewModel } from "../src/model.js";

function cell(
  protocol: string,
  outcome: "pass" | "fail" | null,
  opts: Partial<TestCell> = {},
): TestCell {
  return {
    protocol,
    framework: "fw",
    outcome,
    attempt: outcome === null ? 0 : 1,
    classified: false,
    ...opts,
  };
}

function snapshot(overrides: Partial<SessionSnapshot> = {}): SessionSnapshot {
  return {
    configured: true,
    started: true,
    completed: false,
    num_versions: 3,
    versions_completed: 0,
    current_version: 1,
    next_version: 1,
    build_ok: true,
    open_activity: null,
    last_seq: 10,
    server_time: "2023-01-02T09:00:00+00:00",
    test_grid: [cell("login", null), cell("checkout", null)],
    unclassified: [],
    ...overrides,
  };
}

function tick(
  seq: number,
  elapsed: number | null,
  extras: Partial<TickMessage> = {},
): TickMessage {
  return {
    type: "tick",
    now: "2023-01-02T09:00:00+00:00",
    seq,
    open_activity:
      elapsed === null
        ? null
        : {
            category: "analysis_broken_test",
            protocol: "login",
            framework: "fw",
            version: 1,
            elapsed_s: elapsed,
          },
    ...extras,
  };
}

describe("board gating", () => {
  it("allows run and timer on an untouched open version", () => {
    const vm = new ConsoleViewModel();
    vm.applySession(snapshot(), 0);
    expect(vm.canRun("login", "fw")).toBe(true);
    expect(vm.canStartTimer("login", "fw")).toBe(true);
    expect(vm.canClassify("login", "fw")).toBe(false);
    expect(vm.canAdvance()).toBe(false); // nothing has run yet
  });

  it("freezes a failing test until it is classified", () => {
    const vm = new ConsoleViewModel();
    vm.applySession(
      snapshot({
        test_grid: [cell("login", "fail"), cell("checkout", "pass")],
        unclassified: [{ protocol: "login", framework: "fw", attempt: 1 }],
      }),
      0,
    );
    expect(vm.mustClassify("login", "fw")).toBe(true);
    expect(vm.canRun("login", "fw")).toBe(false);
    expect(vm.canStartTimer("login", "fw")).toBe(false);
    expect(vm.canClassify("login", "fw")).toBe(true);
    expect(vm.canAdvance()).toBe(false);
    // the sibling test is not affected
    expect(vm.canRun("checkout", "fw")).toBe(true);
    expect(vm.canStartTimer("checkout", "fw")).toBe(true);
  });

  it("unfreezes after classification but still refuses advance on a failure", () => {
    const vm = new ConsoleViewModel();
    vm.applySession(
      snapshot({
        test_grid: [
          cell("login", "fail", { classified: true }),
          cell("checkout", "pass"),
        ],
        unclassified: [],
      }),
      0,
    );
    expect(vm.mustClassify("login", "fw")).toBe(false);
    expect(vm.canRun("login", "fw")).toBe(true);
    expect(vm.canAdvance()).toBe(false);
  });

  it("offers advance exactly when every test passed", () => {
    const vm = new ConsoleViewModel();
    vm.applySession(
      snapshot({
        test_grid: [cell("login", "pass"), cell("checkout", "pass")],
      }),
      0,
    );
    expect(vm.canAdvance()).toBe(true);
  });

  it("keeps everything off without a checked-out version or build", () => {
    const vm = new ConsoleViewModel();
    vm.applySession(snapshot({ current_version: null }), 0);
    expect(vm.canRun("login", "fw")).toBe(false);
    expect(vm.canStartTimer("login", "fw")).toBe(false);
    expect(vm.canAdvance()).toBe(false);

    vm.applySession(snapshot({ build_ok: false }), 0);
    expect(vm.canRun("login", "fw")).toBe(false);
    // a broken build does not forbid timing repair work
    expect(vm.canStartTimer("login", "fw")).toBe(true);
  });

  it("blocks new timers and advance while one is running", () => {
    const vm = new ConsoleViewModel();
    vm.applySession(
      snapshot({
        test_grid: [cell("login", "pass"), cell("checkout", "pass")],
      }),
      0,
    );
    vm.applyStream(tick(10, 4.0), 0);
    expect(vm.canStartTimer("login", "fw")).toBe(false);
    expect(vm.canStopTimer()).toBe(true);
    expect(vm.canAdvance()).toBe(false);
  });
});

describe("timer reconciliation", () => {
  it("interpolates between ticks and re-bases on each tick", () => {
    const vm = new ConsoleViewModel();
    vm.applySession(snapshot(), 0);
    vm.applyStream(tick(11, 10.0), 1000);
    expect(vm.timerElapsedS(1000)).toBeCloseTo(10.0, 6);
    expect(vm.timerElapsedS(1400)).toBeCloseTo(10.4, 6);
    vm.applyStream(tick(11, 11.0), 2000);
    expect(vm.timerElapsedS(2050)).toBeCloseTo(11.05, 6);
  });

  it("stays within two seconds of the server under skewed local time", () => {
    const vm = new ConsoleViewModel();
    vm.applySession(snapshot(), 0);
    // local clock runs 40% fast; ticks arrive every second regardless
    let worst = 0;
    for (let i = 0; i < 30; i++) {
      const serverElapsed = 10 + i;
      const arrival = 1000 * i;
      vm.applyStream(tick(11, serverElapsed), arrival);
      for (let frac = 0; frac < 1; frac += 0.25) {
        const localNow = arrival + frac * 1400; // skewed clock
        const shown = vm.timerElapsedS(localNow)!;
        const truth = serverElapsed + frac;
        worst = Math.max(worst, Math.abs(shown - truth));
      }
    }
    expect(worst).toBeLessThan(2);
  });

  it("recovers after the page was frozen for a while", () => {
    const vm = new ConsoleViewModel();
    vm.applySession(snapshot(), 0);
    vm.applyStream(tick(11, 5.0), 1000);
    // no queries for six seconds, then a fresh tick arrives
    vm.applyStream(tick(11, 11.0), 7000);
    expect(vm.timerElapsedS(7010)).toBeCloseTo(11.01, 6);
  });

  it("prefers whichever of snapshot and tick is newer", () => {
    const vm = new ConsoleViewModel();
    // stale tick claims no activity, newer snapshot has one running
    vm.applyStream(tick(8, null), 500);
    vm.applySession(
      snapshot({
        last_seq: 12,
        open_activity: {
          version: 1,
          category: "repair_broken_test",
          protocol: "login",
          framework: "fw",
          note: "",
          wall: "2023-01-02T09:00:00+00:00",
          elapsed_s: 3.5,
        },
      }),
      1000,
    );
    expect(vm.timerElapsedS(1500)).toBeCloseTo(4.0, 6);
    // then a newer tick reports the timer stopped
    vm.applyStream(tick(13, null), 2000);
    expect(vm.timerElapsedS(2500)).toBeNull();
    expect(vm.timerRunning()).toBe(false);
  });

  it("formats a label", () => {
    const vm = new ConsoleViewModel();
    vm.applySession(snapshot(), 0);
    expect(vm.timerLabel(0)).toBe("--:--");
    vm.applyStream(tick(11, 125.2), 0);
    expect(vm.timerLabel(0)).toBe("02:05");
  });
});

describe("stream bookkeeping", () => {
  const ledger = (seq: number) => ({
    type: "ledger" as const,
    seq,
    at: "2023-01-02T09:00:01+00:00",
    kind: "TestRun",
    payload: {},
  });

  it("flags a refresh when the stream runs ahead of the snapshot", () => {
    const vm = new ConsoleViewModel();
    vm.applySession(snapshot({ last_seq: 10 }), 0);
    expect(vm.needsRefresh).toBe(false);
    vm.applyStream(ledger(10), 10); // replayed history, nothing new
    expect(vm.needsRefresh).toBe(false);
    vm.applyStream(ledger(11), 20);
    expect(vm.needsRefresh).toBe(true);
    expect(vm.seq).toBe(11);
    vm.applySession(snapshot({ last_seq: 11 }), 30);
    expect(vm.needsRefresh).toBe(false);
  });

  it("caps the feed", () => {
    const vm = new ConsoleViewModel();
    for (let i = 1; i <= 450; i++) vm.applyStream(ledger(i), i);
    expect(vm.feed.length).toBe(200);
    expect(vm.feed[0].seq).toBe(251);
    expect(vm.feed[vm.feed.length - 1].seq).toBe(450);
  });
});
