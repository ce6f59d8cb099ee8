/** Small presentation helpers shared by the page and its tests. */

import type { ProvenanceEvent } from "./types.js";
import { STAGES } from "./types.js";

export function shortHash(hash: string): string {
  return hash.slice(0, 10);
}

export function stageNumber(stage: string): string {
  const i = (STAGES as readonly string[]).indexOf(stage);
  return i < 0 ? "?" : `${i + 1}/${STAGES.length}`;
}

export function formatMinutes(minutes: number): string {
  if (minutes < 1) return `${(minutes * 60).toFixed(0)}s`;
  if (minutes < 90) return `${minutes.toFixed(1)} min`;
  return `${(minutes / 60).toFixed(1)} h`;
}

function compactArgs(args: Record<string, any>): string {
  const parts = Object.entries(args).map(([k, v]) => {
    const text = typeof v === "string" ? v : JSON.stringify(v);
    return `${k}=${text.length > 40 ? text.slice(0, 37) + "..." : text}`;
  });
  return parts.join(", ");
}

/** One-line human label for a timeline row. */
export function describeEvent(e: ProvenanceEvent): string {
  const p = e.payload;
  switch (e.kind) {
    case "state_created":
      return `run created for ${p.proposal_id}`;
    case "user_message":
      return `user: ${p.text}`;
    case "agent_message":
      return `agent: ${p.text}`;
    case "tool_call":
      return `call ${p.tool}(${compactArgs(p.arguments ?? {})})`;
    case "tool_result":
      return `${p.status === "ok" ? "done" : "FAILED"} ${p.call_id}` +
        (p.artifacts?.length ? ` -> ${p.artifacts.join(", ")}` : "");
    case "gate_check":
      return p.verdict === "pass"
        ? `gate ${p.gate_id} passed`
        : `gate ${p.gate_id} FAILED: ${p.reason}`;
    case "authorization_requested":
      return `authorization requested: ${p.summary}`;
    case "authorization_resolved":
      return `authorization ${p.decision} by ${p.resolved_by ?? "?"}`;
    case "intervention":
      return `intervention on ${p.gate_id}: ${p.rationale ?? ""}`;
    case "stage_transition":
      return `stage ${p.from} -> ${p.to}`;
    case "retrieval":
      return `knowledge lookup: ${p.query}`;
    case "cif_patch":
      return `CIF patch ${p.tag}`;
    case "run_completed":
      return "run completed";
    default:
      return e.kind;
  }
}

export function eventTone(e: ProvenanceEvent): "ok" | "bad" | "warn" | "info" {
  if (e.kind === "gate_check") return e.payload.verdict === "pass" ? "ok" : "bad";
  if (e.kind === "tool_result") return e.payload.status === "ok" ? "ok" : "bad";
  if (e.kind === "authorization_requested") return "warn";
  if (e.kind === "authorization_resolved") {
    return e.payload.decision === "approved" ? "ok" : "bad";
  }
  if (e.kind === "intervention") return "warn";
  if (e.kind === "run_completed") return "ok";
  return "info";
}
