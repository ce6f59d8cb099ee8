"""Scripted decision policy and the user-script format.

The policy replaces a live language model with a deterministic rule
table: the same workflow state always produces the same decision. It
proposes and diagnoses; it never executes. Everything that touches the
workspace goes back through the orchestrator's authorization path.

Script format, one entry per line:

    say: <free text>
    value: <name> = <JSON literal>
    approve: <request-ref>        # "latest" or an explicit request id
    reject: <request-ref>
    # comment

"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .model import VARIABLE_TYPES, WorkflowState, typed_value
from .retrieval import KnowledgeRelease, RetrievalResult

INTENTS = ("workflow_start", "provide_value", "question", "assess_results",
           "improve_input", "validate_cif", "other")

# The order configuration values are asked for; volume deliberately
# comes last so its sanity gates see a complete picture.
ASK_ORDER = ("runs", "calibration_file", "wavelength_min", "wavelength_max",
             "d_min", "theta_max", "molecular_formula", "z", "space_group",
             "cell", "unit_cell_volume")

ASK_PROMPTS = {
    "runs": "Which run numbers should be processed?",
    "calibration_file": "Which calibration file applies to these runs?",
    "wavelength_min": "What is the minimum wavelength of the band, in "
                      "angstroms?",
    "wavelength_max": "What is the maximum wavelength of the band, in "
                      "angstroms?",
    "d_min": "What resolution limit (d_min, angstroms) should be used?",
    "theta_max": "What is the maximum scattering half-angle theta, in "
                 "degrees?",
    "molecular_formula": "What is the molecular formula of the asymmetric "
                         "unit?",
    "z": "How many formula units per cell (Z)?",
    "space_group": "What is the space group?",
    "cell": "What are the cell parameters a, b, c, alpha, beta, gamma?",
    "unit_cell_volume": "What is the unit cell volume in cubic angstroms?",
}

_NUMBER = re.compile(r"-?\d+(?:\.\d+)?")


class ScriptError(ValueError):
    """A script line that does not parse."""


@dataclass(frozen=True)
class ScriptEntry:
    kind: str                       # say | value | approve | reject
    line_no: int
    text: str = ""
    name: str = ""
    value: object = None
    ref: str = ""


def parse_script(text: str) -> list[ScriptEntry]:
    entries: list[ScriptEntry] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        keyword, sep, rest = line.partition(":")
        keyword = keyword.strip().lower()
        rest = rest.strip()
        if not sep or keyword not in ("say", "value", "approve", "reject"):
            raise ScriptError(f"line {line_no}: expected "
                              f"say/value/approve/reject, got {raw!r}")
        if keyword == "say":
            if not rest:
                raise ScriptError(f"line {line_no}: empty say")
            entries.append(ScriptEntry("say", line_no, text=rest))
        elif keyword == "value":
            name, eq, literal = rest.partition("=")
            name = name.strip()
            if not eq or not name:
                raise ScriptError(
                    f"line {line_no}: value needs '<name> = <JSON>'")
            literal = literal.strip()
            try:
                value = json.loads(literal)
            except json.JSONDecodeError:
                # allow a trailing comment after the literal
                try:
                    value = json.loads(literal.split(" #")[0].strip())
                except json.JSONDecodeError as exc:
                    raise ScriptError(
                        f"line {line_no}: bad JSON literal: {exc}"
                    ) from None
            entries.append(ScriptEntry("value", line_no, name=name,
                                       value=value))
        else:
            ref = rest.split("#")[0].strip()
            entries.append(ScriptEntry(keyword, line_no,
                                       ref=ref or "latest"))
    return entries


def classify_intent(text: str, ask_expected: str | None = None) -> str:
    lowered = text.lower().strip()
    if any(phrase in lowered for phrase in
           ("data processing", "start the workflow", "begin the workflow",
            "process the data", "start processing")):
        return "workflow_start"
    if lowered.startswith("set ") or "=" in lowered:
        return "provide_value"
    if ask_expected and _NUMBER.search(lowered):
        return "provide_value"
    if lowered.endswith("?") or lowered.split(":")[0].split(" ")[0] in (
            "where", "what", "how", "why", "when", "which", "who"):
        return "question"
    if any(word in lowered for word in ("analyz", "analys", "assess",
                                        "results", "diagnos")):
        return "assess_results"
    if any(word in lowered for word in ("improve", "fix", "adjust",
                                        "correct", "better")):
        return "improve_input"
    if any(word in lowered for word in ("validat", "checkcif",
                                        "publication", "deposit")):
        return "validate_cif"
    return "other"


def extract_value(text: str, expected: str | None):
    """Pull a bare value out of conversational text like 'set it as 2'.
    Only numeric extraction is attempted; anything richer should come
    through a value entry."""
    if expected is None:
        return None
    kind, _ = VARIABLE_TYPES.get(expected, ("text", None))
    if kind != "number":
        return None
    m = _NUMBER.search(text)
    if m is None:
        return None
    literal = m.group(0)
    return float(literal) if "." in literal else int(literal)


# -- decisions ---------------------------------------------------------------

@dataclass
class Say:
    text: str
    category: str = "info"          # info | answer | gate_diagnostics
    retrieval: RetrievalResult | None = None


@dataclass
class AskUser:
    text: str
    expected_variable: str


@dataclass
class Call:
    tool: str
    arguments: dict = field(default_factory=dict)
    reason: str = ""


@dataclass
class ProposeCorrection:
    summary: str
    rationale: str
    target_gates: tuple[str, ...]
    value: dict | None = None       # typed variable entry to apply
    patch: dict | None = None       # {"tag":..., "new_value":...}


@dataclass
class Done:
    note: str = ""


Decision = object


class ScriptedPolicy:
    """Deterministic rule table over the folded state.

    `react` answers a user message; `advance` picks the next autonomous
    step. Both are pure functions of (state, knowledge release), which
    is what makes reruns reproducible.
    """

    def __init__(self, release: KnowledgeRelease | None = None,
                 budget_tokens: int = 512):
        self.release = release
        self.budget_tokens = budget_tokens

    # -- helpers over state --------------------------------------------------

    @staticmethod
    def _ok_calls(state: WorkflowState, tool: str) -> list[dict]:
        return [t for t in state.tool_log
                if t["tool"] == tool and t["status"] == "ok"]

    @staticmethod
    def _calls(state: WorkflowState, tool: str) -> list[dict]:
        return [t for t in state.tool_log if t["tool"] == tool]

    @staticmethod
    def _latest_model(state: WorkflowState) -> str | None:
        if state.patches:
            return state.patches[-1].get("output_artifact")
        for entry in reversed(state.tool_log):
            if entry["tool"] == "refine" and entry["status"] == "ok":
                models = [a for a in entry["artifacts"]
                          if a.startswith("model_")]
                if models:
                    return models[0]
        return None

    def _lookup(self, query: str) -> RetrievalResult | None:
        if self.release is None:
            return None
        return self.release.query(query, budget=self.budget_tokens)

    # -- reacting to a user message ------------------------------------------

    def react(self, state: WorkflowState, text: str,
              intent: str) -> list[Decision]:
        if intent == "workflow_start":
            return [Say(
                "Starting the structure analysis workflow. I will collect "
                "the configuration first; every tool run and every "
                "correction will wait for your approval.")]
        if intent == "question":
            return [self._answer(text)]
        if intent == "assess_results":
            return self._assess(state)
        if intent == "improve_input":
            return self._improve(state)
        if intent == "validate_cif":
            if state.stage == "Validation" \
                    and self._latest_model(state) is not None:
                return [Call("checkcif", {},
                             reason="publication validation requested")]
            return [Say("Validation runs once a refined model exists; "
                        "we are not there yet.")]
        if intent == "provide_value":
            return []               # application is the orchestrator's job
        return [Say("I did not follow that. You can provide a value, ask "
                    "a question, say 'analyze results', or approve a "
                    "pending request.")]

    def _answer(self, question: str) -> Say:
        result = self._lookup(question)
        if result is None or not result.chunks:
            return Say("I could not find that in the reference documents.",
                       category="answer", retrieval=result)
        top = result.chunks[0].chunk
        text = (f"{top.text}\n[source: {top.source_id}, release "
                f"{result.release_version}]")
        return Say(text, category="answer", retrieval=result)

    def _assess(self, state: WorkflowState) -> list[Decision]:
        unresolved = list(state.unresolved_gates)
        if "G07" in unresolved:
            return self._assess_reduction(state)
        if "G08" in unresolved or "G09" in unresolved:
            return self._assess_refinement(state)
        if "G10" in unresolved or "G11" in unresolved:
            return self._assess_validation(state)
        if unresolved:
            outcomes = [state.gate_outcomes[g] for g in unresolved
                        if g in state.gate_outcomes]
            lines = [f"{o['gate_id']}: {o['reason']}" for o in outcomes]
            return [Say("Unresolved checks:\n" + "\n".join(lines),
                        category="gate_diagnostics")]
        return [Say(f"No unresolved checks. The workflow is at the "
                    f"{state.stage} stage.")]

    def _assess_reduction(self, state: WorkflowState) -> list[Decision]:
        outcome = state.gate_outcomes.get("G07", {})
        reduces = self._calls(state, "reduce")
        donor = None
        if reduces:
            ubs = sorted(a for a in reduces[-1]["artifacts"]
                         if a.endswith(".ub"))
            donor = ubs[0] if ubs else None
        diagnosis = ("Reduction did not complete cleanly: "
                     + outcome.get("reason", "see the log."))
        if donor is None:
            return [Say(diagnosis + " No run produced a usable "
                        "orientation matrix; the inputs need review.",
                        category="gate_diagnostics")]
        failed_runs = [str(o["value"]) for o in
                       outcome.get("offending_inputs", [])
                       if o["name"] == "reduce.log"]
        summary = (f"Reuse the orientation matrix {donor} for the runs "
                   f"that failed to index, then rerun reduction.")
        return [
            Say(diagnosis, category="gate_diagnostics"),
            ProposeCorrection(
                summary=summary,
                rationale="Indexing failed on at least one run; a matrix "
                          "from a run of the same mounting that indexed "
                          "cleanly can be shared across all runs.",
                target_gates=("G07",),
                value=typed_value("ub_file", donor)),
        ]

    def _assess_refinement(self, state: WorkflowState) -> list[Decision]:
        outcome = state.gate_outcomes.get("G08") \
            or state.gate_outcomes.get("G09") or {}
        retrieval = self._lookup(
            "refinement residuals hydrogen treatment riding model")
        return [Say(
            "The refinement statistics are outside the publishable "
            "bands: " + outcome.get("reason", "")
            + " With neutron data this usually means the hydrogen model "
              "is incomplete. Say 'improve input' to apply a constrained "
              "riding hydrogen treatment and refine again.",
            category="gate_diagnostics", retrieval=retrieval)]

    def _assess_validation(self, state: WorkflowState) -> list[Decision]:
        targets = tuple(g for g in ("G10", "G11")
                        if g in state.unresolved_gates)
        reasons = "; ".join(
            state.gate_outcomes.get(g, {}).get("reason", "")
            for g in targets)
        model = self._latest_model(state)
        return [
            Say(f"Validation is blocked: {reasons}",
                category="gate_diagnostics"),
            ProposeCorrection(
                summary=f"Add _exptl_crystal_description 'block' to "
                        f"{model} and rerun validation.",
                rationale="The validation alert flags the missing crystal "
                          "habit description; the measured specimen is a "
                          "block.",
                target_gates=targets,
                patch={"tag": "_exptl_crystal_description",
                       "new_value": "block"}),
        ]

    def _improve(self, state: WorkflowState) -> list[Decision]:
        if "G08" in state.unresolved_gates:
            return [ProposeCorrection(
                summary="Apply a constrained riding hydrogen treatment "
                        "and refine again.",
                rationale="The weighted residual is dominated by missing "
                          "hydrogen scattering; a riding model completes "
                          "the hydrogen treatment deterministically.",
                target_gates=("G08",),
                value=typed_value("hydrogen_treatment",
                                  "constrained_riding"))]
        return [Say("Nothing obviously needs improving right now.")]

    # -- autonomous next step ------------------------------------------------

    def advance(self, state: WorkflowState) -> Decision | None:
        if state.pending_authorization or state.completed:
            return None
        if state.unresolved_gates:
            return None             # a human decides how to proceed
        stage = state.stage
        if stage == "DataAccess":
            return self._advance_data_access(state)
        if stage == "Reduction":
            return self._advance_reduction(state)
        if stage == "Integration":
            if self._ok_calls(state, "integrate"):
                return Done("merged reflection file ready")
            return Call("integrate",
                        {"runs": list(state.var("runs", []))},
                        reason="merge the per-run reflection lists")
        if stage == "Refinement":
            return self._advance_refinement(state)
        if stage == "Validation":
            return self._advance_validation(state)
        return None

    def _advance_data_access(self, state: WorkflowState) -> Decision | None:
        for name in ASK_ORDER:
            if name in state.typed_vars:
                continue
            if state.ask_expected == name:
                return None         # already asked, waiting
            return AskUser(ASK_PROMPTS[name], expected_variable=name)
        if not self._ok_calls(state, "list_runs"):
            return Call("list_runs", {},
                        reason="confirm the staged runs before reduction")
        return Done("configuration complete")

    def _advance_reduction(self, state: WorkflowState) -> Decision | None:
        g07 = state.gate_outcomes.get("G07")
        if g07 and g07["verdict"] == "pass":
            return Done("reduction verified")
        arguments: dict = {"runs": list(state.var("runs", []))}
        ub_file = state.var("ub_file")
        if ub_file:
            arguments["ub_file"] = ub_file
            arguments["scenario"] = "ok"
        elif not self._calls(state, "reduce"):
            arguments["scenario"] = "findub_fail"
        else:
            arguments["scenario"] = "ok"
        return Call("reduce", arguments, reason="produce per-run "
                    "reflection lists and orientation matrices")

    def _advance_refinement(self, state: WorkflowState) -> Decision | None:
        hydrogen = state.var("hydrogen_treatment")
        oks = self._ok_calls(state, "refine")
        if hydrogen:
            completed = [t for t in oks
                         if t["arguments"].get("scenario")
                         == "hydrogen_completed"]
            if completed:
                return Done("refinement verified")
            model = self._latest_model(state)
            arguments = {"scenario": "hydrogen_completed"}
            if model:
                arguments["model_cif"] = model
            return Call("refine", arguments,
                        reason="refine with the completed hydrogen "
                        "treatment")
        if oks:
            return None             # first model refined; awaiting review
        return Call("refine", {"scenario": "first_model"},
                    reason="refine a first structural model")

    def _advance_validation(self, state: WorkflowState) -> Decision | None:
        model = self._latest_model(state)
        if model is None:
            return None
        fresh = [t for t in self._ok_calls(state, "checkcif")
                 if f"validated {model}" in t.get("log_text", "")
                 or t["arguments"].get("model_cif") == model]
        if not fresh:
            return Call("checkcif", {},
                        reason=f"validate {model} for publication")
        rendered = [t for t in self._ok_calls(state, "visualize")
                    if model in t.get("log_text", "")]
        if not rendered:
            return Call("visualize", {},
                        reason=f"render {model} for the report")
        return Done("validation clean")
