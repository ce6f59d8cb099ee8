import { describe, expect, it } from "vitest";

import { describeEvent, eventTone, formatMinutes, shortHash, stageNumber } from "../src/format.js";
import type { ProvenanceEvent } from "../src/types.js";

function ev(kind: string, payload: Record<string, any>): ProvenanceEvent {
  return {
    seq: 0,
    ts: 0,
    kind: kind as ProvenanceEvent["kind"],
    payload,
    prev_hash: "",
    hash: "abcdef0123456789".repeat(4),
  };
}

describe("format helpers", () => {
  it("abbreviates hashes", () => {
    expect(shortHash("abcdef0123456789")).toBe("abcdef0123");
  });

  it("numbers stages", () => {
    expect(stageNumber("DataAccess")).toBe("1/6");
    expect(stageNumber("Complete")).toBe("6/6");
    expect(stageNumber("Nowhere")).toBe("?");
  });

  it("formats durations at sensible scales", () => {
    expect(formatMinutes(0.5)).toBe("30s");
    expect(formatMinutes(43.0)).toBe("43.0 min");
    expect(formatMinutes(435)).toBe("7.3 h");
  });

  it("labels gate checks by verdict", () => {
    const fail = ev("gate_check", { gate_id: "G08", verdict: "fail", reason: "R1 too high" });
    expect(describeEvent(fail)).toBe("gate G08 FAILED: R1 too high");
    expect(eventTone(fail)).toBe("bad");
    const pass = ev("gate_check", { gate_id: "G08", verdict: "pass" });
    expect(describeEvent(pass)).toBe("gate G08 passed");
    expect(eventTone(pass)).toBe("ok");
  });

  it("labels tool traffic", () => {
    const call = ev("tool_call", {
      tool: "reduce",
      arguments: { runs: [1001, 1002, 1003], mask: "default" },
    });
    expect(describeEvent(call)).toBe("call reduce(runs=[1001,1002,1003], mask=default)");
    const result = ev("tool_result", {
      call_id: "c-7",
      status: "ok",
      artifacts: ["reduce.log"],
    });
    expect(describeEvent(result)).toBe("done c-7 -> reduce.log");
    expect(eventTone(result)).toBe("ok");
    expect(eventTone(ev("tool_result", { call_id: "c", status: "error" }))).toBe("bad");
  });

  it("labels steering events", () => {
    expect(
      describeEvent(ev("authorization_resolved", { decision: "approved", resolved_by: "api:operator" })),
    ).toBe("authorization approved by api:operator");
    expect(eventTone(ev("authorization_requested", { summary: "s" }))).toBe("warn");
    expect(eventTone(ev("authorization_resolved", { decision: "rejected" }))).toBe("bad");
    expect(describeEvent(ev("stage_transition", { from: "Reduction", to: "Integration" }))).toBe(
      "stage Reduction -> Integration",
    );
  });
});
