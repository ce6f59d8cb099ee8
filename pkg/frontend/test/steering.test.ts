/** Live steering against a real service process.
 *
 * Boots `xtalflow serve` on a scratch workspace, then drives steered
 * runs over HTTP exactly as the page does: approve the orientation
 * matrix reuse card and watch the reduction land, or reject the first
 * correction card and watch the run halt with the rejection recorded.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/client.js";
import { applyEvent, foldEvents, initialState, projection } from "../src/reducer.js";
import type { ProvenanceEvent, RunSummary } from "../src/types.js";

const repoRoot = fileURLToPath(new URL("../..", import.meta.url));

let server: ChildProcess | null = null;
let workspace = "";
let client: ApiClient;

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createServer();
    probe.once("error", reject);
    probe.listen(0, "127.0.0.1", () => {
      const address = probe.address();
      if (address === null || typeof address === "string") {
        reject(new Error("no port"));
        return;
      }
      probe.close(() => resolve(address.port));
    });
  });
}

async function waitForHealth(deadlineMs: number): Promise<void> {
  const deadline = Date.now() + deadlineMs;
  for (;;) {
    try {
      const doc = await client.health();
      if (doc.status === "ok") return;
    } catch {
      // Not listening yet.
    }
    if (Date.now() > deadline) throw new Error("service never became healthy");
    await new Promise((r) => setTimeout(r, 150));
  }
}

beforeAll(async () => {
  workspace = mkdtempSync(join(tmpdir(), "xtalflow-ui-"));
  const port = await freePort();
  server = spawn(
    "python3",
    [
      "-m",
      "xtalflow.cli",
      "serve",
      "--workspace",
      workspace,
      "--host",
      "127.0.0.1",
      "--port",
      String(port),
    ],
    {
      cwd: repoRoot,
      env: { ...process.env, PYTHONPATH: join(repoRoot, "src") },
      stdio: ["ignore", "pipe", "pipe"],
    },
  );
  server.stderr?.on("data", () => undefined);
  client = new ApiClient(`http://127.0.0.1:${port}`, { role: "operator" });
  await waitForHealth(60_000);
});

afterAll(() => {
  server?.kill();
  if (workspace) rmSync(workspace, { recursive: true, force: true });
});

/** Fold every event the server has for the run and check the reducer
 * lands exactly on the server's reported (stage, halted, pending). */
async function expectReducerAgrees(runId: string, summary: RunSummary): Promise<ProvenanceEvent[]> {
  const events = await client.allEvents(runId);
  expect(events.length).toBe(summary.event_count);
  const state = foldEvents(events);
  const p = projection(state);
  expect(p.stage).toBe(summary.stage);
  expect(p.halted).toBe(summary.halted);
  expect(p.pending_authorization).toBe(summary.pending_authorization);
  expect(p.completed).toBe(summary.completed);
  expect(p.ask_expected).toBe(summary.ask_expected);
  expect(p.unresolved_gates).toEqual(summary.unresolved_gates);
  return events;
}

async function pendingEntry(runId: string, requestId: string) {
  const doc = await client.authorizations(runId);
  const entry = doc.authorizations.find((a) => a.request_id === requestId);
  expect(entry, `authorization ${requestId} listed`).toBeDefined();
  return entry!;
}

describe("steered run, approval path", () => {
  const runId = "ui-approve-1";

  it("resumes the reduction when the orientation-matrix reuse is approved", async () => {
    let summary = await client.createRun({ mode: "steered", run_id: runId });
    expect(summary.pending_authorization).not.toBeNull();

    // Walk the pause points until the card proposing to rerun reduce
    // with the reused orientation matrix comes up.
    let ubCursor = -1;
    let ubRequest = "";
    for (let step = 0; step < 20 && ubCursor < 0; step += 1) {
      const pending = summary.pending_authorization;
      expect(pending, `pause ${step} has a pending card`).not.toBeNull();
      await expectReducerAgrees(runId, summary);
      const entry = await pendingEntry(runId, pending!);
      const isUbReuse =
        entry.action_kind === "tool_call" &&
        entry.payload.tool === "reduce" &&
        typeof entry.payload.arguments?.ub_file === "string";
      if (isUbReuse) {
        ubCursor = summary.event_count;
        ubRequest = pending!;
        expect(entry.payload.arguments.ub_file).toBe("run_1001.ub");
      }
      const decided = await client.decide(runId, pending!, "approved", "looks right");
      expect(decided.changed).toBe(true);
      summary = decided.run;
    }
    expect(ubCursor).toBeGreaterThan(0);

    // Everything sealed after the approval: the resolution, the reduce
    // call carrying the reused matrix, and its successful result.
    const afterPage = await client.events(runId, ubCursor, 1000);
    const kinds = afterPage.events.map((e) => e.kind);
    const resolved = afterPage.events.find(
      (e) => e.kind === "authorization_resolved" && e.payload.request_id === ubRequest,
    );
    expect(resolved).toBeDefined();
    expect(resolved!.payload.decision).toBe("approved");
    expect(resolved!.payload.resolved_by).toBe("api:operator");
    const call = afterPage.events.find((e) => e.kind === "tool_call");
    expect(call).toBeDefined();
    expect(call!.payload.tool).toBe("reduce");
    expect(call!.payload.arguments.ub_file).toBe("run_1001.ub");
    const result = afterPage.events.find((e) => e.kind === "tool_result");
    expect(result).toBeDefined();
    expect(result!.payload.status).toBe("ok");
    expect(kinds.indexOf("authorization_resolved")).toBeLessThan(kinds.indexOf("tool_call"));

    // The reducer renders those reduction events: fold up to the card,
    // then through the new tail, and watch the tool log grow.
    const all = await client.allEvents(runId);
    const state = initialState();
    for (const e of all.slice(0, ubCursor)) applyEvent(state, e);
    const toolCallsBefore = state.toolLog.length;
    for (const e of all.slice(ubCursor)) applyEvent(state, e);
    expect(state.toolLog.length).toBeGreaterThan(toolCallsBefore);
    const reduceEntry = state.toolLog.find((t) => t.arguments.ub_file === "run_1001.ub");
    expect(reduceEntry).toBeDefined();
    expect(reduceEntry!.status).toBe("ok");
    expect(reduceEntry!.artifacts.length).toBeGreaterThan(0);

    // Keep approving to the end of the run.
    for (let step = 0; step < 20 && !summary.completed; step += 1) {
      const pending = summary.pending_authorization;
      expect(pending, `pause ${step} after reuse`).not.toBeNull();
      const decided = await client.decide(runId, pending!, "approved");
      summary = decided.run;
    }
    expect(summary.completed).toBe(true);
    expect(summary.stage).toBe("Complete");
    expect(summary.halted).toBe(false);
    const finalEvents = await expectReducerAgrees(runId, summary);
    expect(finalEvents[finalEvents.length - 1].kind).toBe("run_completed");
  });
});

describe("steered run, rejection path", () => {
  const runId = "ui-reject-1";

  it("halts the run and records the rejection", async () => {
    const created = await client.createRun({ mode: "steered", run_id: runId });
    const pending = created.pending_authorization;
    expect(pending).not.toBeNull();
    const entry = await pendingEntry(runId, pending!);
    // The first card offers the volume correction that would clear the
    // plausibility gates.
    expect(entry.action_kind).toBe("correction");
    expect(entry.summary).toContain("unit_cell_volume");
    expect(entry.status).toBe("pending");

    const decided = await client.decide(runId, pending!, "rejected", "value unverified");
    expect(decided.changed).toBe(true);
    expect(decided.status).toBe("rejected");

    const summary = decided.run;
    expect(summary.completed).toBe(false);
    expect(summary.halted).toBe(true);
    expect(summary.unresolved_gates).toEqual(["G01", "G12"]);
    expect(summary.intervention_count).toBe(0);
    expect(summary.stage).toBe("DataAccess");

    // The rejected correction was never applied.
    const state = await client.state(runId);
    expect(state.typed_vars.unit_cell_volume.value).toBe(2);

    const after = await pendingEntry(runId, pending!);
    expect(after.status).toBe("rejected");
    expect(after.resolved_by).toBe("api:operator");

    // Same picture from a pure client-side fold.
    const events = await expectReducerAgrees(runId, summary);
    const folded = foldEvents(events);
    expect(folded.authorizations.get(pending!)?.status).toBe("rejected");
    expect(folded.unresolvedGates).toEqual(["G01", "G12"]);
    expect(folded.interventionCount).toBe(0);

    // Rejecting again with the other decision conflicts; repeating the
    // same decision is idempotent.
    await expect(client.decide(runId, pending!, "approved")).rejects.toThrow(/already/);
    const repeat = await client.decide(runId, pending!, "rejected");
    expect(repeat.changed).toBe(false);
  });
});

describe("live stream", () => {
  it("replays a finished run over SSE with contiguous ids", async () => {
    const collected: ProvenanceEvent[] = [];
    for await (const e of client.stream("ui-approve-1", 0, false)) {
      collected.push(e);
    }
    expect(collected.length).toBeGreaterThan(100);
    collected.forEach((e, i) => expect(e.seq).toBe(i));
    const state = foldEvents(collected);
    expect(state.completed).toBe(true);
    expect(state.stage).toBe("Complete");
  });
});
