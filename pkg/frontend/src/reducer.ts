/** Client-side fold over provenance events.
 *
 * Mirrors the server's reducer exactly: replaying a bundle's events
 * through this module must land on the same (stage, halted, pending
 * authorization) triple the server reports at every cursor. On top of
 * that parity core it accumulates display lists (chat, tool log,
 * retrievals, artifacts) the page renders from.
 */

import type {
  AuthorizationEntry,
  EventKind,
  ProvenanceEvent,
  Stage,
} from "./types.js";
import { STAGES } from "./types.js";

export class FoldError extends Error {}

export function stageIndex(stage: string): number {
  const i = (STAGES as readonly string[]).indexOf(stage);
  if (i < 0) throw new FoldError(`unknown stage ${stage}`);
  return i;
}

/** Forward moves advance exactly one stage; corrective moves may
 * return to any earlier stage. */
export function transitionAllowed(from: string, to: string): boolean {
  const i = stageIndex(from);
  const j = stageIndex(to);
  return j === i + 1 || j < i;
}

export interface ChatEntry {
  role: "user" | "agent";
  text: string;
  category?: string;
  seq: number;
}

export interface ToolLogEntry {
  call_id: string;
  tool: string;
  arguments: Record<string, any>;
  authorization_id: string | null;
  status: string;
  duration_seconds: number;
  artifacts: string[];
  warnings: string[];
  log_text: string;
  seq: number;
}

export interface GateOutcomeView {
  gate_id: string;
  verdict: string;
  reason: string;
  offending_inputs: { name: string; value: any }[];
  suggested_action: string;
  seq: number;
}

export interface RetrievalView {
  query: string;
  chunks: Record<string, any>[];
  seq: number;
}

export interface ViewState {
  stage: Stage;
  seq: number;
  proposalId: string;
  runNumbers: number[];
  chat: ChatEntry[];
  toolLog: ToolLogEntry[];
  typedVars: Record<string, { name: string; type: string; unit: string | null; value: any }>;
  authorizations: Map<string, AuthorizationEntry>;
  authorizationOrder: string[];
  pendingAuthorization: string | null;
  inFlightCall: Record<string, any> | null;
  gateOutcomes: Map<string, GateOutcomeView>;
  unresolvedGates: string[];
  askExpected: string | null;
  interventionCount: number;
  interventions: Record<string, any>[];
  patches: Record<string, any>[];
  retrievals: RetrievalView[];
  transitions: { from: string; to: string; seq: number }[];
  artifacts: string[];
  completed: boolean;
}

export function initialState(): ViewState {
  return {
    stage: "DataAccess",
    seq: 0,
    proposalId: "",
    runNumbers: [],
    chat: [],
    toolLog: [],
    typedVars: {},
    authorizations: new Map(),
    authorizationOrder: [],
    pendingAuthorization: null,
    inFlightCall: null,
    gateOutcomes: new Map(),
    unresolvedGates: [],
    askExpected: null,
    interventionCount: 0,
    interventions: [],
    patches: [],
    retrievals: [],
    transitions: [],
    artifacts: [],
    completed: false,
  };
}

function applyValue(state: ViewState, value: Record<string, any> | null | undefined): void {
  if (!value) return;
  state.typedVars[value.name] = { ...value } as ViewState["typedVars"][string];
  if (value.name === state.askExpected) state.askExpected = null;
}

type Handler = (state: ViewState, p: Record<string, any>, e: ProvenanceEvent) => void;

const HANDLERS: Record<EventKind, Handler> = {
  state_created(state, p) {
    state.proposalId = p.proposal_id;
    state.runNumbers = [...(p.run_numbers ?? [])];
    state.stage = "DataAccess";
  },

  user_message(state, p, e) {
    state.chat.push({ role: "user", text: p.text, seq: e.seq });
    if (p.value && p.applied) applyValue(state, p.value);
  },

  agent_message(state, p, e) {
    state.chat.push({ role: "agent", text: p.text, category: p.category, seq: e.seq });
    if (p.category === "ask_user") state.askExpected = p.expected_variable ?? null;
  },

  tool_call(state, p, e) {
    state.inFlightCall = {
      call_id: p.call_id,
      tool: p.tool,
      arguments: { ...(p.arguments ?? {}) },
      authorization_id: p.authorization_id ?? null,
      seq: e.seq,
    };
  },

  tool_result(state, p, e) {
    const call = state.inFlightCall;
    if (call === null || call.call_id !== p.call_id) {
      throw new FoldError(`tool_result ${p.call_id} without matching tool_call`);
    }
    const artifacts: string[] = [...(p.artifacts ?? [])];
    state.toolLog.push({
      call_id: call.call_id,
      tool: call.tool,
      arguments: call.arguments,
      authorization_id: call.authorization_id,
      status: p.status,
      duration_seconds: p.duration_seconds ?? 0,
      artifacts,
      warnings: [...(p.warnings ?? [])],
      log_text: p.log_text ?? "",
      seq: e.seq,
    });
    for (const a of artifacts) {
      if (!state.artifacts.includes(a)) state.artifacts.push(a);
    }
    state.inFlightCall = null;
  },

  gate_check(state, p, e) {
    state.gateOutcomes.set(p.gate_id, {
      gate_id: p.gate_id,
      verdict: p.verdict,
      reason: p.reason ?? "",
      offending_inputs: p.offending_inputs ?? [],
      suggested_action: p.suggested_action ?? "",
      seq: e.seq,
    });
    if (p.verdict === "fail") {
      if (!state.unresolvedGates.includes(p.gate_id)) {
        state.unresolvedGates.push(p.gate_id);
        state.unresolvedGates.sort();
      }
    } else {
      const i = state.unresolvedGates.indexOf(p.gate_id);
      if (i >= 0) state.unresolvedGates.splice(i, 1);
    }
  },

  authorization_requested(state, p) {
    state.authorizations.set(p.request_id, {
      request_id: p.request_id,
      action_kind: p.action_kind,
      summary: p.summary,
      payload: p.payload ?? {},
      status: "pending",
      resolved_by: null,
    });
    state.authorizationOrder.push(p.request_id);
    state.pendingAuthorization = p.request_id;
  },

  authorization_resolved(state, p) {
    const entry = state.authorizations.get(p.request_id);
    if (entry === undefined) {
      throw new FoldError(`resolution for unknown authorization ${p.request_id}`);
    }
    if (entry.status !== "pending") {
      throw new FoldError(`authorization ${p.request_id} resolved twice`);
    }
    entry.status = p.decision === "approved" ? "approved" : "rejected";
    entry.resolved_by = p.resolved_by ?? null;
    if (state.pendingAuthorization === p.request_id) {
      state.pendingAuthorization = null;
    }
  },

  intervention(state, p, e) {
    state.interventionCount += 1;
    state.interventions.push({ ...p, seq: e.seq });
    const i = state.unresolvedGates.indexOf(p.gate_id);
    if (i >= 0) state.unresolvedGates.splice(i, 1);
    applyValue(state, p.value);
  },

  stage_transition(state, p, e) {
    const from: string = p.from;
    const to: string = p.to;
    if (from !== state.stage) {
      throw new FoldError(`transition from ${from} recorded while at ${state.stage}`);
    }
    if (!transitionAllowed(from, to)) {
      throw new FoldError(`illegal transition ${from} -> ${to}`);
    }
    const outcomes: Record<string, any>[] = p.gate_outcomes ?? [];
    if (outcomes.some((o) => o.verdict !== "pass")) {
      throw new FoldError(`transition ${from} -> ${to} carries a failed gate`);
    }
    if (stageIndex(to) > stageIndex(from) && state.unresolvedGates.length > 0) {
      throw new FoldError(
        `forward transition while gates unresolved: ${state.unresolvedGates.join(", ")}`,
      );
    }
    state.stage = to as Stage;
    state.transitions.push({ from, to, seq: e.seq });
  },

  retrieval(state, p, e) {
    // No semantic state change; kept for the knowledge panel.
    state.retrievals.push({ query: p.query ?? "", chunks: p.chunks ?? [], seq: e.seq });
  },

  cif_patch(state, p) {
    state.patches.push({
      tag: p.tag ?? "",
      rationale: p.rationale ?? "",
      source_artifact: p.source_artifact ?? null,
      output_artifact: p.output_artifact ?? null,
    });
  },

  run_completed(state) {
    state.completed = true;
  },
};

export function applyEvent(state: ViewState, event: ProvenanceEvent): ViewState {
  if (event.seq !== state.seq) {
    throw new FoldError(`event seq ${event.seq} applied at fold position ${state.seq}`);
  }
  const handler = HANDLERS[event.kind];
  if (handler === undefined) {
    throw new FoldError(`unhandled event kind ${event.kind}`);
  }
  handler(state, event.payload, event);
  state.seq += 1;
  return state;
}

export function foldEvents(events: ProvenanceEvent[]): ViewState {
  const state = initialState();
  for (const e of events) applyEvent(state, e);
  return state;
}

/** The triple the acceptance contract compares against server state,
 * plus the fields the header renders from. */
export interface Projection {
  stage: string;
  halted: boolean;
  pending_authorization: string | null;
  completed: boolean;
  ask_expected: string | null;
  unresolved_gates: string[];
}

export function projection(state: ViewState): Projection {
  return {
    stage: state.stage,
    halted: state.unresolvedGates.length > 0,
    pending_authorization: state.pendingAuthorization,
    completed: state.completed,
    ask_expected: state.askExpected,
    unresolved_gates: [...state.unresolvedGates],
  };
}
