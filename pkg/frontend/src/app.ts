/**
 * Browser entry point: wires the client, view model and charts to the
 * DOM. All numbers shown on screen come straight out of server payloads;
 * this file only formats and places them.
 */

import {
  ApiError,
  ConsoleClient,
  EstimatePayload,
  EventStream,
  StreamStatus,
  TestCell,
} from "./api.js";
import { ConsoleViewModel } from "./model.js";
import {
  bandOrderViolations,
  bandPath,
  buildMaintenanceBars,
  buildRoiChart,
  polylinePoints,
} from "./charts.js";

interface RoiControls {
  framework: string | null;
  schedule: "weekly" | "monthly";
  model: "linear" | "log" | "bayes";
  sessionCost: number;
}

const vm = new ConsoleViewModel();
let client: ConsoleClient;
let stream: EventStream;
let tables: any = null;
let series: any = null;
let estimate: EstimatePayload | null = null;
let roiStale = false;
let roiLoading = false;
const roiControls: RoiControls = {
  framework: null,
  schedule: "weekly",
  model: "bayes",
  sessionCost: 75,
};

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function esc(value: unknown): string {
  return String(value ?? "")
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

function toast(message: string, kind: "err" | "ok" = "err"): void {
  const box = $("toast");
  box.textContent = message;
  box.className = `toast show ${kind}`;
  window.setTimeout(() => box.classList.remove("show"), 4000);
}

function resolveToken(): string {
  const fromUrl = new URLSearchParams(window.location.search).get("token");
  if (fromUrl) {
    try {
      window.sessionStorage.setItem("replayroi-token", fromUrl);
    } catch {
      // storage can be unavailable; the URL still carries the token
    }
    return fromUrl;
  }
  try {
    const stored = window.sessionStorage.getItem("replayroi-token");
    if (stored) return stored;
  } catch {
    // fall through to the prompt
  }
  return window.prompt("API token") ?? "";
}

// -- data loading ----------------------------------------------------------

async function refreshSession(): Promise<void> {
  const payload = await client.getSession();
  vm.applySession(payload, Date.now());
  if (roiControls.framework === null && payload.config) {
    roiControls.framework = payload.config.frameworks[0]?.id ?? null;
  }
  renderBoard();
}

async function refreshTables(): Promise<void> {
  tables = await client.getTables();
  series = await client.getSeries();
  renderTotals();
}

async function loadRoi(): Promise<void> {
  if (!roiControls.framework) return;
  roiLoading = true;
  renderRoi();
  try {
    const payload = await client.getRoi({
      framework: roiControls.framework,
      schedule: roiControls.schedule,
      model: roiControls.model,
      sessionCost: roiControls.sessionCost,
      accrual: "calendar",
    });
    estimate = payload.estimate;
    roiStale = false;
  } catch (err) {
    estimate = null;
    toast(err instanceof ApiError ? err.message : `estimate failed: ${err}`);
  } finally {
    roiLoading = false;
    renderRoi();
  }
}

let refreshQueued = false;
function queueRefresh(): void {
  if (refreshQueued) return;
  refreshQueued = true;
  window.setTimeout(async () => {
    refreshQueued = false;
    try {
      await refreshSession();
      await refreshTables();
    } catch (err) {
      toast(`refresh failed: ${err}`);
    }
  }, 120);
}

// -- rendering -------------------------------------------------------------

function renderBanner(status: StreamStatus): void {
  const banner = $("banner");
  if (status === "live") {
    banner.className = "banner hidden";
    banner.textContent = "";
  } else {
    banner.className = "banner";
    banner.textContent =
      status === "connecting"
        ? "connecting to event stream..."
        : "event stream lost, reconnecting; shown state may lag the server";
  }
}

function outcomeBadge(cell: TestCell): string {
  if (cell.outcome === null) return `<span class="badge idle">not run</span>`;
  if (cell.outcome === "pass") return `<span class="badge pass">pass</span>`;
  const cls = cell.classified ? "fail" : "fail attention";
  const tag = cell.classified ? "fail" : "fail, classify";
  return `<span class="badge ${cls}">${tag} #${cell.attempt}</span>`;
}

function renderBoard(): void {
  const s = vm.session;
  const head = $("session-line");
  if (!s) {
    head.textContent = "no session loaded";
    return;
  }
  const phase = !s.started
    ? "baseline"
    : s.completed
      ? "completed"
      : `version ${s.current_version ?? "-"} of ${s.num_versions ?? "?"}`;
  head.innerHTML = `
    <strong>${esc(s.config?.name ?? "session")}</strong>
    <span class="phase">${esc(phase)}</span>
    <span class="muted">build ${
      s.build_ok === null ? "unchecked" : s.build_ok ? "ok" : "broken"
    } | seq ${s.last_seq}</span>`;

  const rows = vm.grid().map((cell) => {
    const acts = vm.actionsFor(cell);
    const blocked = vm.mustClassify(cell.protocol, cell.framework);
    return `
      <tr class="${blocked ? "blocked" : ""}">
        <td>${esc(cell.protocol)}</td>
        <td>${esc(cell.framework)}</td>
        <td>${outcomeBadge(cell)}</td>
        <td class="actions">
          <button data-action="run" data-protocol="${esc(cell.protocol)}"
            data-framework="${esc(cell.framework)}" ${acts.run ? "" : "disabled"}>run</button>
          <button data-action="classify" data-protocol="${esc(cell.protocol)}"
            data-framework="${esc(cell.framework)}" ${acts.classify ? "" : "disabled"}>classify</button>
          <button data-action="timer" data-protocol="${esc(cell.protocol)}"
            data-framework="${esc(cell.framework)}" ${acts.startTimer ? "" : "disabled"}>start timer</button>
        </td>
      </tr>`;
  });
  $("grid-body").innerHTML = rows.join("") ||
    `<tr><td colspan="4" class="muted">no tests configured</td></tr>`;

  const advance = $("advance") as HTMLButtonElement;
  advance.disabled = !vm.canAdvance();
  const blockedNote = $("blocked-note");
  const pending = s.unclassified ?? [];
  blockedNote.textContent = pending.length
    ? `classification required: ${pending
        .map((r) => `${r.protocol}/${r.framework}`)
        .join(", ")}`
    : "";
  renderTimer();
  renderFeed();
}

function renderTimer(): void {
  const box = $("timer");
  const desc = vm.timerDescription();
  if (!desc) {
    box.innerHTML = `<span class="muted">no activity running</span>`;
    return;
  }
  box.innerHTML = `
    <span class="timer-label">${vm.timerLabel(Date.now())}</span>
    <span>${esc(desc.category)} on ${esc(desc.protocol)}</span>
    <button data-action="stop-timer">stop</button>
    <button data-action="discard-timer" class="ghost">discard</button>`;
}

function renderFeed(): void {
  const items = vm.feed
    .slice(-30)
    .reverse()
    .map(
      (e) =>
        `<li><span class="seq">#${e.seq}</span> ${esc(e.kind)}
         <span class="muted">${esc(e.at.replace("T", " ").slice(0, 19))}</span></li>`,
    );
  $("feed").innerHTML = items.join("");
}

function renderTotals(): void {
  const box = $("totals");
  if (!tables) {
    box.innerHTML = "";
    return;
  }
  const t = tables.tables;
  const frameworks = Object.keys(t.implementation ?? {});
  const rows = frameworks.map((fw) => {
    const impl = t.implementation[fw];
    const maint = t.maintenance?.[fw];
    return `
      <tr>
        <td>${esc(fw)}</td>
        <td>${esc(impl?.total_minutes?.toFixed?.(2) ?? impl?.total_minutes ?? "-")}</td>
        <td>${esc(maint?.total_minutes?.toFixed?.(2) ?? maint?.total_minutes ?? "-")}</td>
      </tr>`;
  });
  box.innerHTML = frameworks.length
    ? `<table class="mini"><thead>
         <tr><th>framework</th><th>implementation min</th><th>maintenance min</th></tr>
       </thead><tbody>${rows.join("")}</tbody></table>`
    : "";

  const fw = roiControls.framework;
  const entry = fw && series ? series.series?.[fw] : null;
  const chartBox = $("maintenance-chart");
  if (entry && entry.per_version?.length) {
    const chart = buildMaintenanceBars(entry.per_version, { width: 680 });
    const bars = chart.bars
      .map(
        (b) =>
          `<rect x="${b.x}" y="${b.y}" width="${b.w}" height="${b.h}">
             <title>step ${b.step}: ${b.minutes} min</title></rect>`,
      )
      .join("");
    chartBox.innerHTML = `<svg viewBox="0 0 ${chart.width} ${chart.height}" class="bars">${bars}</svg>`;
  } else {
    chartBox.innerHTML = "";
  }
}

function renderRoi(): void {
  const box = $("roi-chart");
  const meta = $("roi-meta");
  document
    .querySelectorAll<HTMLButtonElement>("[data-schedule]")
    .forEach((b) => {
      b.classList.toggle("active", b.dataset.schedule === roiControls.schedule);
    });
  (document.getElementById("model-pick") as HTMLSelectElement).value =
    roiControls.model;

  if (roiLoading) {
    meta.innerHTML = `<span class="muted">estimating...</span>`;
    return;
  }
  if (!estimate) {
    box.innerHTML = "";
    meta.innerHTML = `<span class="muted">no estimate yet</span>`;
    return;
  }

  const chart = buildRoiChart(estimate, { width: 720, height: 360 });
  const pieces: string[] = [];
  if (chart.band) {
    pieces.push(`<path class="band" d="${bandPath(chart.band)}"/>`);
    pieces.push(
      `<polyline class="median" points="${polylinePoints(
        chart.band.map((p) => ({ x: p.x, y: p.yMedian })),
      )}"/>`,
    );
  }
  pieces.push(`<polyline class="agt" points="${polylinePoints(chart.agt)}"/>`);
  pieces.push(`<polyline class="mgt" points="${polylinePoints(chart.mgt)}"/>`);
  if (chart.breakEven) {
    const bx = chart.breakEven.x;
    if (chart.breakEven.intervalX) {
      const [lo, hi] = chart.breakEven.intervalX;
      if (lo !== null && hi !== null) {
        pieces.push(
          `<rect class="be-interval" x="${lo}" y="${chart.pad}"
             width="${Math.max(1, hi - lo)}" height="${chart.height - 2 * chart.pad}"/>`,
        );
      }
    }
    pieces.push(
      `<line class="be" x1="${bx}" y1="${chart.pad}" x2="${bx}" y2="${chart.height - chart.pad}"/>`,
    );
  }
  box.innerHTML = `<svg viewBox="0 0 ${chart.width} ${chart.height}">${pieces.join("")}</svg>`;

  const bits: string[] = [];
  const roi = estimate.roi;
  bits.push(
    roi.break_even_step !== null
      ? `break-even at step <strong>${roi.break_even_step}</strong>`
      : roi.beyond_horizon
        ? `no break-even within horizon ${roi.horizon}`
        : `no break-even found`,
  );
  if (roi.interval) {
    bits.push(
      `95% interval [${roi.interval[0] ?? "beyond"}, ${roi.interval[1] ?? "beyond"}]`,
    );
  }
  if (typeof roi.beyond_horizon_fraction === "number") {
    bits.push(
      `${(roi.beyond_horizon_fraction * 100).toFixed(1)}% of draws never cross`,
    );
  }
  bits.push(`model ${estimate.model}, ${estimate.schedule} manual schedule`);
  meta.innerHTML = `<p>${bits.join(" · ")}</p>`;

  const warn = $("roi-warning");
  const violations = estimate.bands ? bandOrderViolations(estimate.bands) : [];
  if (estimate.diagnostics_ok === false) {
    warn.className = "warning";
    warn.textContent =
      "sampler did not converge; treat this estimate as unreliable. " +
      (estimate.warnings ?? []).join(" ");
  } else if (violations.length) {
    warn.className = "warning";
    warn.textContent = `band ordering broken at ${violations.length} steps`;
  } else {
    warn.className = "warning hidden";
    warn.textContent = "";
  }
}

// -- command handlers ------------------------------------------------------

async function runCommand(op: string, args: Record<string, unknown>): Promise<void> {
  try {
    await client.commandWithRetry(op, args);
  } catch (err) {
    if (err instanceof ApiError) {
      toast(err.blocked ? `blocked: ${err.message}` : err.message);
    } else {
      toast(`command failed: ${err}`);
    }
  }
  queueRefresh();
}

function classifyDialog(protocol: string, framework: string): void {
  const cell = vm
    .grid()
    .find((c) => c.protocol === protocol && c.framework === framework);
  const kinds =
    cell?.outcome === "pass"
      ? ["false_negative"]
      : ["broken_test", "bug", "crash"];
  const kind = window.prompt(`classification (${kinds.join(", ")})`, kinds[0]);
  if (!kind) return;
  void runCommand("classify", { protocol, framework, kind });
}

function timerDialog(protocol: string, framework: string): void {
  const category = window.prompt(
    "activity category (analysis_broken_test, repair_broken_test, handle_bug, " +
      "handle_false_negative, handle_crash)",
    "analysis_broken_test",
  );
  if (!category) return;
  void runCommand("start-activity", { category, protocol, framework });
}

function onClick(event: Event): void {
  const target = (event.target as HTMLElement).closest<HTMLElement>("[data-action]");
  if (!target) return;
  const action = target.dataset.action!;
  const protocol = target.dataset.protocol ?? "";
  const framework = target.dataset.framework ?? "";
  if (action === "run") void runCommand("run-test", { protocol, framework });
  else if (action === "classify") classifyDialog(protocol, framework);
  else if (action === "timer") timerDialog(protocol, framework);
  else if (action === "stop-timer") void runCommand("stop-activity", {});
  else if (action === "discard-timer") void runCommand("discard-activity", {});
  else if (action === "advance") {
    void (async () => {
      try {
        await client.commandWithRetry("complete-version", {});
        await client.commandWithRetry("advance", {});
      } catch (err) {
        if (err instanceof ApiError) toast(err.message);
      }
      queueRefresh();
    })();
  } else if (action === "refresh-roi") void loadRoi();
}

// -- bootstrap -------------------------------------------------------------

async function start(): Promise<void> {
  client = new ConsoleClient("", resolveToken());
  document.addEventListener("click", onClick);

  document.querySelectorAll<HTMLButtonElement>("[data-schedule]").forEach((b) =>
    b.addEventListener("click", () => {
      roiControls.schedule = b.dataset.schedule as "weekly" | "monthly";
      void loadRoi();
    }),
  );
  (document.getElementById("model-pick") as HTMLSelectElement).addEventListener(
    "change",
    (e) => {
      roiControls.model = (e.target as HTMLSelectElement).value as RoiControls["model"];
      void loadRoi();
    },
  );
  (document.getElementById("cost-input") as HTMLInputElement).addEventListener(
    "change",
    (e) => {
      const v = Number((e.target as HTMLInputElement).value);
      if (Number.isFinite(v) && v > 0) {
        roiControls.sessionCost = v;
        void loadRoi();
      }
    },
  );

  stream = new EventStream(
    client,
    (msg) => {
      vm.applyStream(msg, Date.now());
      if (msg.type === "tick") renderTimer();
      if (msg.type === "ledger") {
        roiStale = true;
        renderFeed();
        if (vm.needsRefresh) queueRefresh();
      }
      const chip = $("roi-stale");
      chip.className = roiStale && estimate ? "chip" : "chip hidden";
    },
    (status) => {
      vm.setConnected(status === "live");
      renderBanner(status);
    },
  );
  void stream.run();

  window.setInterval(() => {
    if (vm.timerRunning()) renderTimer();
  }, 250);

  try {
    await refreshSession();
    await refreshTables();
    await loadRoi();
  } catch (err) {
    toast(`initial load failed: ${err}`);
  }
}

if (typeof document !== "undefined") {
  void start();
}
