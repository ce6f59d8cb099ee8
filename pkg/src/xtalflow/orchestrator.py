"""The governed execution loop.

One orchestrator owns one run: it folds every event into the workflow
state, asks the policy what to do next, checks gates eagerly and at
every stage boundary, and holds every side-effecting action until a
human approves it. Nothing here calls a tool or edits an artifact
except through those two doors.
"""

from __future__ import annotations

import json
from pathlib import Path

from .adapters import run_tool
from .canonical import sha256_hex
from .clock import TickClock
from .events import EventLog
from .formats import ReductionConfig, parse_cif, patch_item, serialize_cif, \
    serialize_config
from .gates import PATCH_TRIGGERS, GateSpec, eager_gates_for_tool, \
    eager_gates_for_value, evaluate_gate, gates_for_boundary, inputs_ready, \
    spec_for
from .model import WorkflowState, apply_event, build_state_created_payload, \
    ensure_workspace, fold, next_stage, state_hash, typed_value
from .policy import AskUser, Call, Done, ProposeCorrection, Say, \
    ScriptedPolicy, classify_intent, extract_value, parse_script
from .retrieval import DEFAULT_BUDGET_TOKENS, KnowledgeRelease, \
    default_release_root
from .tools import TOOLBOX, validate_call
from .workspace import BUNDLE_DIR, ArtifactStore, RunEnvironment

SYSTEM_PROMPT = (
    "You are the analysis assistant for a single-crystal neutron "
    "diffraction experiment. Collect the configuration from the "
    "experimenters, run the allowlisted facility tools, and carry the "
    "analysis from raw runs to a validated structure file. Every "
    "side-effecting action requires explicit human authorization, every "
    "claim about data must cite its source, and a failed verification "
    "check halts forward progress until a human resolves it."
)

DRAIN_LIMIT = 200


class ScriptRunError(RuntimeError):
    """A script that cannot be executed as written."""


class AuthorizationError(ValueError):
    """Unknown request id or an already-resolved request."""


def run_id_for_script(script_text: str) -> str:
    return "run-" + sha256_hex(script_text.encode("utf-8"))[:12]


def packaged_script(name: str = "benchmark") -> str:
    """One of the operator scripts shipped inside the package."""
    from importlib import resources
    base = resources.files("xtalflow") / "data" / "scripts"
    return (base / f"{name}.txt").read_text(encoding="utf-8")


class Orchestrator:
    def __init__(self, workspace_root: Path, script_text: str = "",
                 clock=None, knowledge_root: Path | None = None,
                 proposal_id: str = "IPTS-2025-0042",
                 run_id: str | None = None):
        ensure_workspace(workspace_root)
        self.workspace_root = Path(workspace_root).resolve()
        self.script_text = script_text
        self.run_id = run_id or run_id_for_script(script_text)
        bundle = self.workspace_root / BUNDLE_DIR / self.run_id
        bundle.mkdir(parents=True, exist_ok=True)
        self.bundle_dir = bundle
        self.log = EventLog(bundle / "events.log")
        self.env = RunEnvironment(self.workspace_root,
                                  ArtifactStore(bundle / "artifacts"))
        self.clock = clock or TickClock()
        root = Path(knowledge_root) if knowledge_root \
            else default_release_root()
        self.release = KnowledgeRelease.load(root)
        self.policy = ScriptedPolicy(self.release,
                                     budget_tokens=DEFAULT_BUDGET_TOKENS)
        if self.log.events:
            self.state = fold(self.log.events)
        else:
            self.state = WorkflowState()
            self._emit("state_created", build_state_created_payload(
                proposal_id, SYSTEM_PROMPT,
                {"release_version": self.release.version,
                 "budget_tokens": DEFAULT_BUDGET_TOKENS},
                []))

    # -- event plumbing ------------------------------------------------------

    def _emit(self, kind: str, payload: dict):
        event = self.log.append(self.clock.now(), kind, payload)
        apply_event(self.state, event)
        return event

    def _next_id(self, prefix: str) -> str:
        # Log length is strictly increasing, so ids never collide.
        return f"{prefix}-{len(self.log.events):04d}"

    # -- user input ----------------------------------------------------------

    def post_user_message(self, text: str, drain: bool = True) -> None:
        intent = classify_intent(text, self.state.ask_expected)
        if intent == "provide_value":
            extracted = extract_value(text, self.state.ask_expected)
            if extracted is not None:
                self._ingest_value(self.state.ask_expected, extracted,
                                   via_text=text)
                if drain:
                    self.drain()
                return
        self._emit("user_message", {"text": text, "intent": intent})
        self._apply_decisions(self.policy.react(self.state, text, intent))
        if drain:
            self.drain()

    def post_value(self, name: str, value, drain: bool = True) -> None:
        self._ingest_value(name, value,
                           via_text=f"set {name} = {json.dumps(value)}")
        if drain:
            self.drain()

    def _correction_targets(self, name: str) -> list[str]:
        targets = []
        for gate_id in self.state.unresolved_gates:
            outcome = self.state.gate_outcomes.get(gate_id, {})
            if any(o.get("name") == name
                   for o in outcome.get("offending_inputs", [])):
                targets.append(gate_id)
        return sorted(targets)

    def _ingest_value(self, name: str, value, via_text: str) -> None:
        entry = typed_value(name, value)
        targets = self._correction_targets(name)
        if targets:
            # The new value corrects inputs a failed gate named, so it
            # takes effect only through an authorized intervention.
            self._emit("user_message", {
                "text": via_text, "intent": "provide_value",
                "value": entry, "applied": False, "correction": True})
            self._request_authorization(
                "correction",
                f"Apply corrected value for {name} "
                f"(resolves {', '.join(targets)})",
                {"kind": "apply_value", "value": entry,
                 "target_gates": targets,
                 "rationale": f"replaces the value that failed "
                              f"{', '.join(targets)}"})
        else:
            self._emit("user_message", {
                "text": via_text, "intent": "provide_value",
                "value": entry, "applied": True})
            self._eager_value_gates(name)

    # -- authorization lifecycle ---------------------------------------------

    def _request_authorization(self, action_kind: str, summary: str,
                               payload: dict) -> str:
        request_id = self._next_id("auth")
        self._emit("authorization_requested", {
            "request_id": request_id, "action_kind": action_kind,
            "summary": summary, "payload": payload})
        return request_id

    def resolve_authorization(self, request_id: str, decision: str,
                              resolved_by: str, rationale: str = "",
                              drain: bool = True) -> None:
        if decision not in ("approved", "rejected"):
            raise AuthorizationError(f"decision must be approved or "
                                     f"rejected, not {decision!r}")
        entry = self.state.authorizations.get(request_id)
        if entry is None:
            raise AuthorizationError(f"unknown request {request_id!r}")
        if entry["status"] != "pending":
            raise AuthorizationError(
                f"request {request_id} already {entry['status']}")
        self._emit("authorization_resolved", {
            "request_id": request_id, "decision": decision,
            "resolved_by": resolved_by, "rationale": rationale})
        if decision == "approved":
            self._execute_authorized(request_id, entry)
        else:
            self._emit("agent_message", {
                "text": f"Request {request_id} was rejected; nothing "
                        f"was executed.",
                "category": "info"})
        if drain:
            self.drain()

    def _execute_authorized(self, request_id: str, entry: dict) -> None:
        payload = entry["payload"]
        if entry["action_kind"] == "tool_call":
            self._execute_tool(payload["tool"],
                               dict(payload.get("arguments", {})),
                               authorization_id=request_id)
            return
        kind = payload.get("kind")
        if kind == "apply_value":
            for gate_id in payload["target_gates"]:
                self._emit("intervention", {
                    "intervention_id": self._next_id("int"),
                    "gate_id": gate_id,
                    "authorization_id": request_id,
                    "action": "apply_value",
                    "rationale": payload.get("rationale", ""),
                    "value": payload["value"]})
            self._eager_value_gates(payload["value"]["name"])
        elif kind == "patch_model":
            self._apply_patch(request_id, payload)
        else:
            raise ScriptRunError(
                f"authorization {request_id} carries unknown action "
                f"{kind!r}")

    def _apply_patch(self, request_id: str, payload: dict) -> None:
        source = payload.get("source_artifact") \
            or self.env.artifacts.latest("model_", ".cif")
        if source is None:
            raise ScriptRunError("no model file exists to patch")
        doc = parse_cif(self.env.artifacts.read(source))
        patched, record = patch_item(doc, payload["tag"],
                                     payload["new_value"])
        out_name = f"model_{self.env.artifacts.next_index('model_', '.cif')}.cif"
        self.env.artifacts.write(out_name, serialize_cif(patched))
        for gate_id in payload.get("target_gates", []):
            self._emit("intervention", {
                "intervention_id": self._next_id("int"),
                "gate_id": gate_id,
                "authorization_id": request_id,
                "action": "patch_model",
                "rationale": payload.get("rationale", "")})
        self._emit("cif_patch", {
            "tag": record.tag, "old_value": record.old_value,
            "new_value": record.new_value,
            "rationale": payload.get("rationale", ""),
            "source_artifact": source, "output_artifact": out_name,
            "authorization_id": request_id})
        for gate_id in PATCH_TRIGGERS:
            spec = spec_for(gate_id)
            if inputs_ready(spec, self.state, self.env):
                self._run_gate(spec)

    # -- gates ---------------------------------------------------------------

    def _run_gate(self, spec: GateSpec,
                  boundary: tuple[str, str] | None = None):
        outcome = evaluate_gate(spec, self.state, self.env)
        was_unresolved = spec.id in self.state.unresolved_gates
        self._emit("gate_check",
                   outcome.to_payload(spec, boundary or spec.boundary))
        if not outcome.passed and not was_unresolved:
            self._emit("agent_message", {
                "text": f"Check {spec.id} failed: {outcome.reason} "
                        f"Suggested action: {outcome.suggested_action}",
                "category": "gate_diagnostics", "gate_id": spec.id})
        return outcome

    def _eager_value_gates(self, name: str) -> None:
        for spec in eager_gates_for_value(self.state, name):
            if inputs_ready(spec, self.state, self.env):
                self._run_gate(spec)

    def _eager_tool_gates(self, tool: str) -> None:
        for spec in eager_gates_for_tool(self.state, tool):
            if inputs_ready(spec, self.state, self.env):
                self._run_gate(spec)

    # -- tools ---------------------------------------------------------------

    def _request_tool(self, tool: str, arguments: dict,
                      reason: str) -> None:
        rejection = validate_call(tool, arguments, self.env)
        if rejection is not None:
            self._emit("agent_message", {
                "text": f"Tool call refused ({rejection.category}): "
                        f"{rejection.detail}",
                "category": "call_rejected",
                "rejection": rejection.to_payload()})
            return
        spec = TOOLBOX[tool]
        if spec.requires_authorization:
            self._request_authorization(
                "tool_call",
                f"Run {tool} ({spec.scripted_minutes:g} min): {reason}",
                {"tool": tool, "arguments": arguments})
        else:
            self._execute_tool(tool, arguments)

    def _execute_tool(self, tool: str, arguments: dict,
                      authorization_id: str | None = None) -> None:
        call_id = self._next_id("call")
        self._emit("tool_call", {
            "call_id": call_id, "tool": tool, "arguments": arguments,
            "authorization_id": authorization_id})
        result = run_tool(tool, arguments, self.env)
        duration = result.scripted_minutes * 60.0
        self.clock.advance(duration)
        self._emit("tool_result", {
            "call_id": call_id, "duration_seconds": duration,
            **result.to_payload()})
        self._eager_tool_gates(tool)

    # -- policy loop ---------------------------------------------------------

    def _apply_decisions(self, decisions) -> None:
        for decision in decisions:
            if isinstance(decision, Say):
                if decision.retrieval is not None:
                    r = decision.retrieval
                    self._emit("retrieval", {
                        **r.to_payload(), "provenance": r.provenance()})
                self._emit("agent_message", {
                    "text": decision.text, "category": decision.category})
            elif isinstance(decision, AskUser):
                self._emit("agent_message", {
                    "text": decision.text, "category": "ask_user",
                    "expected_variable": decision.expected_variable})
            elif isinstance(decision, Call):
                if self.state.pending_authorization is None:
                    self._request_tool(decision.tool, decision.arguments,
                                       decision.reason)
            elif isinstance(decision, ProposeCorrection):
                if self.state.pending_authorization is not None:
                    continue
                payload = {
                    "kind": "apply_value" if decision.value
                            else "patch_model",
                    "target_gates": list(decision.target_gates),
                    "rationale": decision.rationale,
                }
                if decision.value is not None:
                    payload["value"] = decision.value
                if decision.patch is not None:
                    payload.update(decision.patch)
                self._request_authorization(
                    "correction", decision.summary, payload)
            elif isinstance(decision, Done):
                pass                # only drain() acts on Done
            else:
                raise ScriptRunError(
                    f"policy produced unknown decision {decision!r}")

    def drain(self) -> None:
        """Run the policy until it blocks on the user, a pending
        authorization, or completion."""
        for _ in range(DRAIN_LIMIT):
            decision = self.policy.advance(self.state)
            if decision is None:
                return
            if isinstance(decision, Done):
                if not self._attempt_transition():
                    return
                continue
            self._apply_decisions([decision])
            if isinstance(decision, AskUser):
                return
            if self.state.pending_authorization is not None:
                return
        raise ScriptRunError("policy did not reach a blocking point; "
                             "suspected decision loop")

    # -- stage boundaries ----------------------------------------------------

    def _materialize_config(self) -> None:
        mapping: dict[str, object] = {}
        for name in ("runs", "calibration_file", "background_file",
                     "ub_file", "wavelength_min", "wavelength_max",
                     "d_min", "theta_max", "molecular_formula", "z",
                     "unit_cell_volume", "space_group", "mask"):
            value = self.state.var(name)
            if value is not None:
                mapping[name] = value
        cell = self.state.var("cell")
        if cell:
            for key, value in zip(("cell_a", "cell_b", "cell_c",
                                   "cell_alpha", "cell_beta",
                                   "cell_gamma"), cell):
                mapping[key] = value
        self.env.artifacts.write(
            "reduction.config",
            serialize_config(ReductionConfig.from_values(mapping)))

    def _attempt_transition(self) -> bool:
        frm = self.state.stage
        to = next_stage(frm)
        if to is None:
            return False
        if frm == "DataAccess":
            self._materialize_config()
        evaluated = []
        for spec in gates_for_boundary(frm, to):
            outcome = self._run_gate(spec, boundary=(frm, to))
            evaluated.append((spec, outcome))
        if not all(o.passed for _, o in evaluated):
            return False
        self._emit("stage_transition", {
            "from": frm, "to": to,
            "gate_outcomes": [o.to_payload(s, (frm, to))
                              for s, o in evaluated],
            "state_hash": state_hash(self.state)})
        self._emit("agent_message", {
            "text": f"All checks passed; moving from {frm} to {to}.",
            "category": "info"})
        if to == "Complete":
            self._emit("run_completed", {
                "final_stage": to,
                "state_hash": state_hash(self.state),
                "artifact_count": len(self.env.artifacts.names()),
                "intervention_count": self.state.intervention_count})
        return True

    # -- scripted execution --------------------------------------------------

    def run_scripted(self) -> WorkflowState:
        entries = parse_script(self.script_text)
        for entry in entries:
            if self.state.completed:
                raise ScriptRunError(
                    f"line {entry.line_no}: the run is complete but the "
                    f"script continues")
            pending = self.state.pending_authorization
            if entry.kind in ("approve", "reject"):
                if pending is None:
                    raise ScriptRunError(
                        f"line {entry.line_no}: nothing is awaiting "
                        f"authorization")
                ref = pending if entry.ref == "latest" else entry.ref
                decision = "approved" if entry.kind == "approve" \
                    else "rejected"
                self.resolve_authorization(ref, decision,
                                           resolved_by="script-operator")
            elif pending is not None:
                raise ScriptRunError(
                    f"line {entry.line_no}: request {pending} is awaiting "
                    f"a decision; the script must approve or reject it "
                    f"before continuing")
            elif entry.kind == "say":
                self.post_user_message(entry.text)
            else:
                self.post_value(entry.name, entry.value)
        return self.state
