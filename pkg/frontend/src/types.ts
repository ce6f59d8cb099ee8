/** Wire types of the run service. */

export const STAGES = [
  "DataAccess",
  "Reduction",
  "Integration",
  "Refinement",
  "Validation",
  "Complete",
] as const;

export type Stage = (typeof STAGES)[number];

export type EventKind =
  | "state_created"
  | "user_message"
  | "agent_message"
  | "tool_call"
  | "tool_result"
  | "gate_check"
  | "authorization_requested"
  | "authorization_resolved"
  | "intervention"
  | "stage_transition"
  | "retrieval"
  | "cif_patch"
  | "run_completed";

/** One sealed line of a run's event log, exactly as the server sends it. */
export interface ProvenanceEvent {
  seq: number;
  ts: number;
  kind: EventKind;
  // Payload shapes vary per kind; the reducer narrows what it reads.
  payload: Record<string, any>;
  prev_hash: string;
  hash: string;
}

export interface RunSummary {
  run_id: string;
  mode: string;
  stage: string;
  completed: boolean;
  halted: boolean;
  unresolved_gates: string[];
  pending_authorization: string | null;
  ask_expected: string | null;
  intervention_count: number;
  patch_count: number;
  event_count: number;
  tail_hash: string;
  artifact_count: number;
  script_consumed: number;
  script_entries: number;
}

export interface EventPage {
  events: ProvenanceEvent[];
  next_cursor: number;
  total: number;
  tail_hash: string;
}

export interface GateSpecView {
  id: string;
  gate_class: string;
  boundary: [string, string];
  required_inputs: string[];
  description: string;
}

export interface AuthorizationEntry {
  request_id: string;
  action_kind: string;
  summary: string;
  payload: Record<string, any>;
  status: "pending" | "approved" | "rejected";
  resolved_by: string | null;
}

export interface ArtifactInfo {
  name: string;
  size: number;
}

export interface TimingView {
  wall_minutes: number;
  machine_minutes: number;
  user_minutes: number;
  tool_minutes: Record<string, number>;
  tool_calls: number;
}
