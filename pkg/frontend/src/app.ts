/** Single-page control panel for the run service.
 *
 * Renders from a client-side fold of the event stream: the server is
 * the source of events, this page is a projection of them. Polling
 * picks up new events incrementally by cursor, so a refresh never
 * re-fetches the whole log for a live run.
 */

import { ApiClient, ApiError } from "./client.js";
import {
  applyEvent,
  initialState,
  projection,
  type ViewState,
} from "./reducer.js";
import { describeEvent, eventTone, shortHash, stageNumber } from "./format.js";
import type { EventPage, ProvenanceEvent, RunSummary } from "./types.js";
import { STAGES } from "./types.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? window.location.origin;
const client = new ApiClient(baseUrl, {
  role: (params.get("role") as "operator" | "viewer" | null) ?? "operator",
  token: params.get("token") ?? undefined,
});

interface AppState {
  runs: RunSummary[];
  selected: string | null;
  fold: ViewState;
  events: ProvenanceEvent[];
  cursor: number;
  summary: RunSummary | null;
  auxTitle: string;
  auxBody: string;
  error: string;
}

const app: AppState = {
  runs: [],
  selected: null,
  fold: initialState(),
  events: [],
  cursor: 0,
  summary: null,
  auxTitle: "",
  auxBody: "",
  error: "",
};

function el(
  tag: string,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElement {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    if (k === "class") node.className = v;
    else node.setAttribute(k, v);
  }
  for (const c of children) {
    node.append(typeof c === "string" ? document.createTextNode(c) : c);
  }
  return node;
}

function button(label: string, cls: string, onClick: () => void): HTMLElement {
  const b = el("button", { class: cls }, label);
  b.addEventListener("click", onClick);
  return b;
}

async function guarded(work: () => Promise<void>): Promise<void> {
  try {
    app.error = "";
    await work();
  } catch (err) {
    app.error = err instanceof ApiError ? `${err.status}: ${err.message}` : String(err);
  }
  render();
}

// -- data flow ---------------------------------------------------------------

function ingest(page: EventPage): void {
  for (const e of page.events) {
    applyEvent(app.fold, e);
    app.events.push(e);
  }
  app.cursor = page.next_cursor;
}

async function refreshRuns(): Promise<void> {
  const listing = await client.listRuns();
  app.runs = listing.runs.sort((a, b) => a.run_id.localeCompare(b.run_id));
}

async function selectRun(runId: string): Promise<void> {
  app.selected = runId;
  app.fold = initialState();
  app.events = [];
  app.cursor = 0;
  app.auxTitle = "";
  app.auxBody = "";
  await pollSelected();
}

/** Fetch everything past the cursor and refresh the summary. */
async function pollSelected(): Promise<boolean> {
  const runId = app.selected;
  if (runId === null) return false;
  let grew = false;
  for (;;) {
    const page = await client.events(runId, app.cursor);
    ingest(page);
    grew = grew || page.events.length > 0;
    if (app.cursor >= page.total) break;
  }
  app.summary = await client.run(runId);
  return grew;
}

async function createRun(mode: string, runId: string, script: string): Promise<void> {
  const summary = await client.createRun({
    mode,
    run_id: runId || null,
    script: script || null,
  });
  await refreshRuns();
  await selectRun(summary.run_id);
}

// -- rendering ---------------------------------------------------------------

function renderSidebar(): HTMLElement {
  const side = el("div", { class: "sidebar" });
  side.append(el("h1", {}, "xtalflow"));
  side.append(
    button("refresh", "ghost", () => {
      void guarded(async () => {
        await refreshRuns();
        await pollSelected();
      });
    }),
  );

  const list = el("div", { class: "run-list" });
  for (const run of app.runs) {
    const cls = run.run_id === app.selected ? "run-row selected" : "run-row";
    const row = el(
      "div",
      { class: cls },
      el("div", { class: "run-id" }, run.run_id),
      el(
        "div",
        { class: "run-meta" },
        `${run.stage} · ${run.completed ? "complete" : run.halted ? "halted" : "live"}`,
      ),
    );
    row.addEventListener("click", () => void guarded(() => selectRun(run.run_id)));
    list.append(row);
  }
  side.append(list);

  const modeSel = el("select", {}) as HTMLSelectElement;
  modeSel.append(el("option", { value: "steered" }, "steered"));
  modeSel.append(el("option", { value: "scripted" }, "scripted"));
  const idInput = el("input", { placeholder: "run id (optional)" }) as HTMLInputElement;
  const scriptInput = el("textarea", {
    placeholder: "policy script (blank = packaged benchmark)",
    rows: "4",
  }) as HTMLTextAreaElement;
  side.append(
    el(
      "div",
      { class: "new-run" },
      el("h2", {}, "new run"),
      modeSel,
      idInput,
      scriptInput,
      button("create", "primary", () => {
        void guarded(() => createRun(modeSel.value, idInput.value.trim(), scriptInput.value));
      }),
    ),
  );
  return side;
}

function renderHeader(): HTMLElement {
  const head = el("div", { class: "header" });
  if (app.summary === null) {
    head.append(el("div", { class: "muted" }, "select a run"));
    return head;
  }
  const s = app.summary;
  const p = projection(app.fold);
  head.append(
    el(
      "div",
      { class: "title-row" },
      el("span", { class: "run-title" }, s.run_id),
      el("span", { class: "muted" }, `mode ${s.mode} · tail ${shortHash(s.tail_hash)}`),
    ),
  );
  const pills = el("div", { class: "stage-pills" });
  for (const stage of STAGES) {
    let cls = "pill";
    if (stage === p.stage) cls += p.halted ? " halted" : " current";
    pills.append(el("span", { class: cls }, stage));
  }
  head.append(pills);
  const bits: string[] = [`stage ${stageNumber(p.stage)}`];
  if (p.completed) bits.push("completed");
  if (p.halted) bits.push(`halted on ${p.unresolved_gates.join(", ")}`);
  if (p.ask_expected) bits.push(`awaiting value: ${p.ask_expected}`);
  bits.push(`${s.event_count} events`, `${s.intervention_count} interventions`);
  head.append(el("div", { class: "status-line" }, bits.join(" · ")));
  return head;
}

function renderAuthorizationCard(): HTMLElement | null {
  const pendingId = app.fold.pendingAuthorization;
  if (pendingId === null) return null;
  const entry = app.fold.authorizations.get(pendingId);
  if (entry === undefined) return null;
  const rationale = el("input", {
    placeholder: "rationale (optional)",
    class: "rationale",
  }) as HTMLInputElement;
  const send = (decision: "approved" | "rejected") => {
    void guarded(async () => {
      await client.decide(app.selected as string, pendingId, decision, rationale.value);
      await pollSelected();
    });
  };
  return el(
    "div",
    { class: "auth-card" },
    el("h2", {}, "authorization required"),
    el("div", { class: "auth-summary" }, entry.summary),
    el("pre", { class: "auth-payload" }, JSON.stringify(entry.payload, null, 2)),
    rationale,
    el(
      "div",
      { class: "auth-buttons" },
      button("approve", "approve", () => send("approved")),
      button("reject", "reject", () => send("rejected")),
    ),
  );
}

function renderGates(): HTMLElement {
  const panel = el("div", { class: "panel" }, el("h2", {}, "gates"));
  const ids = [...app.fold.gateOutcomes.keys()].sort();
  if (ids.length === 0) {
    panel.append(el("div", { class: "muted" }, "no gate checks yet"));
    return panel;
  }
  for (const id of ids) {
    const o = app.fold.gateOutcomes.get(id);
    if (o === undefined) continue;
    const row = el(
      "div",
      { class: o.verdict === "pass" ? "gate-row pass" : "gate-row fail" },
      el("span", { class: "gate-id" }, id),
      el("span", {}, o.verdict === "pass" ? "pass" : o.reason),
    );
    if (o.verdict !== "pass" && o.suggested_action) {
      row.append(el("div", { class: "gate-hint" }, o.suggested_action));
    }
    panel.append(row);
  }
  return panel;
}

function renderTimeline(): HTMLElement {
  const panel = el("div", { class: "panel timeline" }, el("h2", {}, "timeline"));
  const rows = el("div", { class: "timeline-rows" });
  for (const e of app.events) {
    rows.append(
      el(
        "div",
        { class: `event-row ${eventTone(e)}` },
        el("span", { class: "event-seq" }, String(e.seq)),
        el("span", { class: "event-kind" }, e.kind),
        el("span", { class: "event-text" }, describeEvent(e)),
      ),
    );
  }
  panel.append(rows);
  rows.scrollTop = rows.scrollHeight;
  return panel;
}

function renderInputs(): HTMLElement {
  const bar = el("div", { class: "input-bar" });
  const message = el("input", {
    placeholder: app.fold.askExpected
      ? `answer for ${app.fold.askExpected}...`
      : "message the workflow...",
    class: "message-input",
  }) as HTMLInputElement;
  const sendMessage = () => {
    const text = message.value.trim();
    if (!text || app.selected === null) return;
    void guarded(async () => {
      await client.postMessage(app.selected as string, text);
      message.value = "";
      await pollSelected();
    });
  };
  message.addEventListener("keydown", (ev) => {
    if (ev.key === "Enter") sendMessage();
  });
  bar.append(message, button("send", "primary", sendMessage));

  const name = el("input", { placeholder: "variable", class: "var-name" }) as HTMLInputElement;
  const value = el("input", { placeholder: "JSON value", class: "var-value" }) as HTMLInputElement;
  bar.append(
    name,
    value,
    button("set value", "ghost", () => {
      if (app.selected === null || !name.value.trim()) return;
      void guarded(async () => {
        let parsed: unknown = value.value;
        try {
          parsed = JSON.parse(value.value);
        } catch {
          // Unquoted text is sent as a plain string.
        }
        await client.postValue(app.selected as string, name.value.trim(), parsed);
        await pollSelected();
      });
    }),
  );
  return bar;
}

function renderArtifacts(): HTMLElement {
  const panel = el("div", { class: "panel" }, el("h2", {}, "artifacts"));
  if (app.fold.artifacts.length === 0) {
    panel.append(el("div", { class: "muted" }, "none yet"));
    return panel;
  }
  for (const name of app.fold.artifacts) {
    const link = el(
      "a",
      { href: client.artifactUrl(app.selected as string, name), target: "_blank" },
      name,
    );
    panel.append(el("div", { class: "artifact-row" }, link));
  }
  return panel;
}

function renderAux(): HTMLElement {
  const panel = el("div", { class: "panel" }, el("h2", {}, "reports"));
  const show = (title: string, load: () => Promise<Record<string, any>>) => {
    void guarded(async () => {
      const doc = await load();
      app.auxTitle = title;
      app.auxBody = JSON.stringify(doc, null, 2);
    });
  };
  const runId = app.selected as string;
  panel.append(
    el(
      "div",
      { class: "aux-buttons" },
      button("timing", "ghost", () => show("timing", () => client.timing(runId))),
      button("audit", "ghost", () => show("audit", () => client.audit(runId))),
      button("replay", "ghost", () => show("replay", () => client.replay(runId))),
      button("manifest", "ghost", () => show("manifest", () => client.manifest(runId))),
    ),
  );
  if (app.auxTitle) {
    panel.append(el("h3", {}, app.auxTitle));
    panel.append(el("pre", { class: "aux-body" }, app.auxBody));
  }
  return panel;
}

function render(): void {
  const root = document.getElementById("app");
  if (root === null) return;
  root.replaceChildren();
  root.append(renderSidebar());

  const main = el("div", { class: "main" });
  main.append(renderHeader());
  if (app.error) main.append(el("div", { class: "error" }, app.error));
  if (app.selected !== null && app.summary !== null) {
    const card = renderAuthorizationCard();
    if (card !== null) main.append(card);
    const columns = el("div", { class: "columns" });
    columns.append(renderTimeline());
    const right = el("div", { class: "column-right" });
    right.append(renderGates(), renderArtifacts(), renderAux());
    columns.append(right);
    main.append(columns);
    if (!app.fold.completed) main.append(renderInputs());
  }
  root.append(main);
}

async function tick(): Promise<void> {
  if (app.selected === null) return;
  if (await pollSelected()) render();
}

async function main(): Promise<void> {
  await guarded(async () => {
    await refreshRuns();
    if (app.runs.length > 0) await selectRun(app.runs[0].run_id);
  });
  window.setInterval(() => {
    void tick().catch(() => undefined);
  }, 800);
}

void main();
