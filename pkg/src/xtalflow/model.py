"""Workflow stages, typed variables, and the event-fold state reducer.

A WorkflowState is a pure function of the ordered event sequence: fold
the events and you have the state, byte-for-byte. Filesystem location
and run identity deliberately stay out of the snapshot so replays in a
different directory produce identical bytes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .canonical import canonical_bytes, sha256_hex
from .events import ProvenanceEvent

STAGES = ("DataAccess", "Reduction", "Integration", "Refinement",
          "Validation", "Complete")


class FoldError(ValueError):
    """An event cannot be applied to the current state."""


class SequencingError(FoldError):
    """Event sequence number does not match the fold position."""


class TransitionError(FoldError):
    """Illegal stage transition."""


class SetupError(ValueError):
    """Run workspace is unusable."""


class ConfigurationError(ValueError):
    """Run creation inputs are invalid."""


def stage_index(stage: str) -> int:
    try:
        return STAGES.index(stage)
    except ValueError:
        raise TransitionError(f"unknown stage {stage!r}") from None


def next_stage(stage: str) -> str | None:
    i = stage_index(stage)
    return STAGES[i + 1] if i + 1 < len(STAGES) else None


def transition_allowed(from_stage: str, to_stage: str) -> bool:
    """Forward moves advance exactly one stage; corrective moves may
    return to any earlier stage."""
    i, j = stage_index(from_stage), stage_index(to_stage)
    return j == i + 1 or j < i


# Variable name -> (semantic type, unit). The unit travels with the
# value so gate bounds are never applied to a bare number.
VARIABLE_TYPES: dict[str, tuple[str, str | None]] = {
    "runs": ("list", None),
    "calibration_file": ("path", None),
    "background_file": ("path", None),
    "ub_file": ("path", None),
    "wavelength_min": ("number", "angstrom"),
    "wavelength_max": ("number", "angstrom"),
    "d_min": ("number", "angstrom"),
    "theta_max": ("number", "degree"),
    "molecular_formula": ("formula", None),
    "z": ("number", None),
    "unit_cell_volume": ("number", "angstrom^3"),
    "space_group": ("text", None),
    "cell": ("cell", "angstrom,degree"),
    "hydrogen_treatment": ("text", None),
    "mask": ("text", None),
}


def typed_value(name: str, value) -> dict:
    semantic, unit = VARIABLE_TYPES.get(name, ("text", None))
    return {"name": name, "type": semantic, "unit": unit, "value": value}


@dataclass
class WorkflowState:
    stage: str = "DataAccess"
    proposal_id: str = ""
    system_prompt: str = ""
    knowledge_schema: dict = field(default_factory=dict)
    run_numbers: list[int] = field(default_factory=list)
    created_at: float = 0.0
    seq: int = 0

    chat: list[dict] = field(default_factory=list)
    tool_log: list[dict] = field(default_factory=list)
    typed_vars: dict[str, dict] = field(default_factory=dict)

    authorizations: dict[str, dict] = field(default_factory=dict)
    pending_authorization: str | None = None
    in_flight_call: dict | None = None

    gate_outcomes: dict[str, dict] = field(default_factory=dict)
    unresolved_gates: list[str] = field(default_factory=list)
    ask_expected: str | None = None
    intervention_count: int = 0
    patches: list[dict] = field(default_factory=list)
    completed: bool = False

    @property
    def patch_count(self) -> int:
        return len(self.patches)

    @property
    def halted(self) -> bool:
        return bool(self.unresolved_gates)

    @property
    def last_gate_outcomes(self) -> list[dict]:
        return [self.gate_outcomes[g] for g in sorted(self.gate_outcomes)]

    def var(self, name: str, default=None):
        entry = self.typed_vars.get(name)
        return entry["value"] if entry is not None else default


def apply_event(state: WorkflowState, event: ProvenanceEvent) -> WorkflowState:
    """Fold one event into the state. Mutates and returns `state`;
    callers needing history keep the event list, not state copies."""
    if event.seq != state.seq:
        raise SequencingError(
            f"event seq {event.seq} applied at fold position {state.seq}")
    handler = _HANDLERS.get(event.kind)
    if handler is None:
        raise FoldError(f"unhandled event kind {event.kind!r}")
    handler(state, event.payload, event.ts)
    state.seq += 1
    return state


def fold(events: list[ProvenanceEvent]) -> WorkflowState:
    state = WorkflowState()
    for event in events:
        apply_event(state, event)
    return state


def _on_state_created(state: WorkflowState, p: dict, ts: float) -> None:
    state.proposal_id = p["proposal_id"]
    state.system_prompt = p["system_prompt"]
    state.knowledge_schema = dict(p.get("knowledge_schema", {}))
    state.run_numbers = list(p.get("run_numbers", []))
    state.created_at = ts
    state.stage = "DataAccess"


def _on_user_message(state: WorkflowState, p: dict, ts: float) -> None:
    state.chat.append({"role": "user", "text": p["text"]})
    value = p.get("value")
    if value and p.get("applied"):
        state.typed_vars[value["name"]] = dict(value)
        if value["name"] == state.ask_expected:
            state.ask_expected = None


def _on_agent_message(state: WorkflowState, p: dict, ts: float) -> None:
    state.chat.append({"role": "agent", "text": p["text"]})
    if p.get("category") == "ask_user":
        state.ask_expected = p.get("expected_variable")


def _on_tool_call(state: WorkflowState, p: dict, ts: float) -> None:
    state.in_flight_call = {
        "call_id": p["call_id"], "tool": p["tool"],
        "arguments": dict(p.get("arguments", {})),
        "authorization_id": p.get("authorization_id"),
        "issued_at": ts,
    }


def _on_tool_result(state: WorkflowState, p: dict, ts: float) -> None:
    call = state.in_flight_call
    if call is None or call["call_id"] != p["call_id"]:
        raise FoldError(
            f"tool_result {p['call_id']} without matching tool_call")
    # The pair lands in the append-only log as one complete entry.
    state.tool_log.append({
        **call,
        "status": p["status"],
        "duration_seconds": p.get("duration_seconds", 0.0),
        "scripted_minutes": p.get("scripted_minutes"),
        "artifacts": list(p.get("artifacts", [])),
        "warnings": list(p.get("warnings", [])),
        "log_text": p.get("log_text", ""),
        "finished_at": ts,
    })
    state.in_flight_call = None


def _on_gate_check(state: WorkflowState, p: dict, ts: float) -> None:
    outcome = {
        "gate_id": p["gate_id"], "verdict": p["verdict"],
        "reason": p.get("reason", ""),
        "offending_inputs": p.get("offending_inputs", []),
        "suggested_action": p.get("suggested_action", ""),
    }
    state.gate_outcomes[p["gate_id"]] = outcome
    if p["verdict"] == "fail":
        if p["gate_id"] not in state.unresolved_gates:
            state.unresolved_gates.append(p["gate_id"])
            state.unresolved_gates.sort()
    else:
        if p["gate_id"] in state.unresolved_gates:
            state.unresolved_gates.remove(p["gate_id"])


def _on_authorization_requested(state: WorkflowState, p: dict,
                                ts: float) -> None:
    state.authorizations[p["request_id"]] = {
        "request_id": p["request_id"],
        "action_kind": p["action_kind"],
        "summary": p["summary"],
        "payload": p.get("payload", {}),
        "status": "pending",
        "resolved_by": None,
    }
    state.pending_authorization = p["request_id"]


def _on_authorization_resolved(state: WorkflowState, p: dict,
                               ts: float) -> None:
    entry = state.authorizations.get(p["request_id"])
    if entry is None:
        raise FoldError(
            f"resolution for unknown authorization {p['request_id']}")
    if entry["status"] != "pending":
        raise FoldError(
            f"authorization {p['request_id']} resolved twice")
    entry["status"] = "approved" if p["decision"] == "approved" else "rejected"
    entry["resolved_by"] = p.get("resolved_by")
    if state.pending_authorization == p["request_id"]:
        state.pending_authorization = None


def _on_intervention(state: WorkflowState, p: dict, ts: float) -> None:
    state.intervention_count += 1
    gate = p.get("gate_id")
    if gate in state.unresolved_gates:
        state.unresolved_gates.remove(gate)
    # An authorized corrective value takes effect through the
    # intervention itself, not through a separate user message.
    value = p.get("value")
    if value:
        state.typed_vars[value["name"]] = dict(value)
        if value["name"] == state.ask_expected:
            state.ask_expected = None


def _on_stage_transition(state: WorkflowState, p: dict, ts: float) -> None:
    from_stage, to_stage = p["from"], p["to"]
    if from_stage != state.stage:
        raise TransitionError(
            f"transition from {from_stage} recorded while at {state.stage}")
    if not transition_allowed(from_stage, to_stage):
        raise TransitionError(
            f"illegal transition {from_stage} -> {to_stage}")
    outcomes = p.get("gate_outcomes", [])
    if any(o.get("verdict") != "pass" for o in outcomes):
        raise TransitionError(
            f"transition {from_stage} -> {to_stage} carries a failed gate")
    if stage_index(to_stage) > stage_index(from_stage) and state.unresolved_gates:
        raise TransitionError(
            f"forward transition while gates unresolved: "
            f"{state.unresolved_gates}")
    state.stage = to_stage


def _on_retrieval(state: WorkflowState, p: dict, ts: float) -> None:
    pass   # recorded for provenance; no state change


def _on_cif_patch(state: WorkflowState, p: dict, ts: float) -> None:
    state.patches.append({
        "tag": p.get("tag", ""),
        "rationale": p.get("rationale", ""),
        "source_artifact": p.get("source_artifact"),
        "output_artifact": p.get("output_artifact"),
    })


def _on_run_completed(state: WorkflowState, p: dict, ts: float) -> None:
    state.completed = True


_HANDLERS = {
    "state_created": _on_state_created,
    "user_message": _on_user_message,
    "agent_message": _on_agent_message,
    "tool_call": _on_tool_call,
    "tool_result": _on_tool_result,
    "gate_check": _on_gate_check,
    "authorization_requested": _on_authorization_requested,
    "authorization_resolved": _on_authorization_resolved,
    "intervention": _on_intervention,
    "stage_transition": _on_stage_transition,
    "retrieval": _on_retrieval,
    "cif_patch": _on_cif_patch,
    "run_completed": _on_run_completed,
}


def snapshot(state: WorkflowState) -> bytes:
    """Canonical serialization of the semantic state. Excludes run id
    and filesystem roots so equal histories give equal bytes anywhere."""
    doc = {
        "ask_expected": state.ask_expected,
        "authorizations": {k: state.authorizations[k]
                           for k in sorted(state.authorizations)},
        "chat": state.chat,
        "completed": state.completed,
        "created_at": state.created_at,
        "halted": state.halted,
        "in_flight_call": state.in_flight_call,
        "intervention_count": state.intervention_count,
        "knowledge_schema": state.knowledge_schema,
        "last_gate_outcomes": state.last_gate_outcomes,
        "patches": state.patches,
        "pending_authorization": state.pending_authorization,
        "proposal_id": state.proposal_id,
        "run_numbers": state.run_numbers,
        "seq": state.seq,
        "stage": state.stage,
        "system_prompt": state.system_prompt,
        "tool_log": state.tool_log,
        "typed_vars": {k: state.typed_vars[k]
                       for k in sorted(state.typed_vars)},
        "unresolved_gates": state.unresolved_gates,
    }
    return canonical_bytes(doc)


def state_hash(state: WorkflowState) -> str:
    return sha256_hex(snapshot(state))


def ensure_workspace(workspace_root: Path) -> Path:
    root = Path(workspace_root)
    if not root.is_dir():
        raise SetupError(f"workspace {root} does not exist")
    if not os.access(root, os.W_OK):
        raise SetupError(f"workspace {root} is not writable")
    return root


def build_state_created_payload(proposal_id: str, system_prompt: str,
                                knowledge_schema: dict,
                                run_numbers: list[int]) -> dict:
    if not system_prompt.strip():
        raise ConfigurationError("system prompt must be non-empty")
    return {
        "proposal_id": proposal_id,
        "system_prompt": system_prompt,
        "knowledge_schema": dict(knowledge_schema),
        "run_numbers": list(run_numbers),
    }


def create_initial_state(workspace_root: Path, proposal_id: str,
                         system_prompt: str, knowledge_schema: dict,
                         run_numbers: list[int] = (),
                         ts: float = 0.0) -> WorkflowState:
    ensure_workspace(workspace_root)
    payload = build_state_created_payload(
        proposal_id, system_prompt, knowledge_schema, list(run_numbers))
    state = WorkflowState()
    _on_state_created(state, payload, ts)
    state.seq = 1
    return state
