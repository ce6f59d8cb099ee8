"""Script parsing, intent routing, and the scripted decision table."""

import pytest

from xtalflow.model import WorkflowState, typed_value
from xtalflow.policy import (
    ASK_ORDER,
    AskUser,
    Call,
    Done,
    ProposeCorrection,
    Say,
    ScriptError,
    ScriptedPolicy,
    classify_intent,
    extract_value,
    parse_script,
)
from xtalflow.retrieval import KnowledgeRelease, default_release_root


# -- script parsing ----------------------------------------------------------

def test_parse_script_kinds_and_comments():
    entries = parse_script(
        "# a comment\n"
        "\n"
        "say: hello there\n"
        "value: runs = [1001, 1002]\n"
        "approve: auth-0003\n"
        "reject:\n")
    kinds = [e.kind for e in entries]
    assert kinds == ["say", "value", "approve", "reject"]
    assert entries[0].text == "hello there"
    assert entries[1].name == "runs"
    assert entries[1].value == [1001, 1002]
    assert entries[2].ref == "auth-0003"
    assert entries[3].ref == "latest"


def test_parse_script_inline_comments():
    entries = parse_script(
        "value: d_min = 0.5  # resolution floor\n"
        "approve: latest  # the reduce request\n")
    assert entries[0].value == 0.5
    assert entries[1].ref == "latest"


def test_parse_script_value_json_literals():
    entries = parse_script(
        'value: space_group = "C c"\n'
        "value: cell = [18.508, 18.981, 6.527, 90.0, 90.64, 90.0]\n"
        "value: z = 4\n")
    assert entries[0].value == "C c"
    assert entries[1].value[1] == 18.981
    assert entries[2].value == 4


@pytest.mark.parametrize("line", [
    "do: something",
    "say:",
    "value: runs [1001]",
    "value: runs = not-json",
    "just prose with no keyword",
])
def test_parse_script_rejects_malformed_lines(line):
    with pytest.raises(ScriptError):
        parse_script(line + "\n")


def test_parse_script_reports_line_numbers():
    with pytest.raises(ScriptError, match="line 3"):
        parse_script("say: ok\n# fine\nvalue: broken\n")


# -- intent classification ---------------------------------------------------

@pytest.mark.parametrize("text,intent", [
    ("i want to perform the data processing task", "workflow_start"),
    ("please start the workflow", "workflow_start"),
    ("set it as 2", "provide_value"),
    ("wavelength_max = 3.5", "provide_value"),
    ("Where is the calibration file?", "question"),
    ("what does this alert mean", "question"),
    ("analyze the results", "assess_results"),
    ("can you assess the refinement", "assess_results"),
    ("improve the input", "improve_input"),
    ("fix the hydrogen model", "improve_input"),
    ("run the publication validation", "validate_cif"),
    ("checkcif please", "validate_cif"),
    ("hello", "other"),
])
def test_classify_intent_table(text, intent):
    assert classify_intent(text) == intent


def test_bare_number_is_a_value_only_while_a_question_is_open():
    assert classify_intent("2292.9", ask_expected="unit_cell_volume") \
        == "provide_value"
    assert classify_intent("2292.9") == "other"


def test_extract_value_numeric_only():
    assert extract_value("set it as 2", "unit_cell_volume") == 2
    assert extract_value("use 0.5 here", "d_min") == 0.5
    # non-numeric variables never extract from prose
    assert extract_value("set it as 2", "space_group") is None
    assert extract_value("set it as 2", None) is None
    assert extract_value("no digits", "d_min") is None


# -- state scaffolding -------------------------------------------------------

FULL_VARS = {
    "runs": [1001, 1002, 1003],
    "calibration_file": "calibration/TOPAZ_2025A.DetCal",
    "wavelength_min": 0.4,
    "wavelength_max": 3.5,
    "d_min": 0.5,
    "theta_max": 80.0,
    "molecular_formula": "Ca1 Al2 Si3 O13 H6",
    "z": 4,
    "space_group": "C c",
    "cell": [18.508, 18.981, 6.527, 90.0, 90.64, 90.0],
    "unit_cell_volume": 2292.9,
}


def make_state(stage="DataAccess", variables=None, **kw) -> WorkflowState:
    state = WorkflowState(stage=stage, **kw)
    for name, value in (variables or {}).items():
        state.typed_vars[name] = typed_value(name, value)
    return state


def tool_entry(tool, status="ok", arguments=None, artifacts=None,
               log_text=""):
    return {"tool": tool, "status": status, "arguments": arguments or {},
            "artifacts": artifacts or [], "log_text": log_text,
            "call_id": "call-test", "warnings": []}


@pytest.fixture(scope="module")
def policy():
    return ScriptedPolicy(KnowledgeRelease.load(default_release_root()))


bare = ScriptedPolicy()                 # no knowledge release attached


# -- react -------------------------------------------------------------------

def test_react_workflow_start_greets():
    decisions = bare.react(make_state(), "start the workflow",
                           "workflow_start")
    assert len(decisions) == 1
    assert isinstance(decisions[0], Say)
    assert "approval" in decisions[0].text


def test_react_question_cites_source(policy):
    decisions = policy.react(make_state(),
                             "Where is the calibration file?", "question")
    say = decisions[0]
    assert say.category == "answer"
    assert "/SNS/TOPAZ/IPTS-xxxxx/shared/calibration" in say.text
    assert "[source: kb-calibration" in say.text
    assert say.retrieval is not None


def test_react_question_without_release_degrades():
    say = bare.react(make_state(), "where is anything?", "question")[0]
    assert "could not find" in say.text


def test_react_provide_value_defers_to_orchestrator():
    assert bare.react(make_state(), "set it as 2", "provide_value") == []


def test_react_other_gets_help():
    say = bare.react(make_state(), "hello", "other")[0]
    assert "approve" in say.text


def test_react_validate_before_model_declines():
    say = bare.react(make_state(stage="Reduction"),
                     "validate the cif", "validate_cif")[0]
    assert isinstance(say, Say)


# -- assess ------------------------------------------------------------------

def test_assess_clean_state_reports_stage():
    say = bare.react(make_state(stage="Integration"),
                     "analyze the results", "assess_results")[0]
    assert "Integration" in say.text


def test_assess_reduction_proposes_ub_reuse():
    state = make_state(stage="Reduction", variables=FULL_VARS)
    state.tool_log.append(tool_entry(
        "reduce", status="failed",
        artifacts=["run_1001.hkl", "run_1001.ub",
                   "run_1002.hkl", "run_1002.ub", "reduce.log"]))
    state.unresolved_gates.append("G07")
    state.gate_outcomes["G07"] = {
        "gate_id": "G07", "verdict": "fail",
        "reason": "reduction log reports an indexing failure",
        "offending_inputs": [{"name": "reduce.log", "value": "FindUB"}]}
    decisions = bare.react(state, "analyze the results", "assess_results")
    assert isinstance(decisions[0], Say)
    assert decisions[0].category == "gate_diagnostics"
    proposal = decisions[1]
    assert isinstance(proposal, ProposeCorrection)
    assert proposal.target_gates == ("G07",)
    assert proposal.value["name"] == "ub_file"
    # deterministic donor choice: lexicographically first .ub artifact
    assert proposal.value["value"] == "run_1001.ub"
    assert proposal.rationale


def test_assess_reduction_without_donor_only_diagnoses():
    state = make_state(stage="Reduction", variables=FULL_VARS)
    state.tool_log.append(tool_entry("reduce", status="failed",
                                     artifacts=["reduce.log"]))
    state.unresolved_gates.append("G07")
    state.gate_outcomes["G07"] = {
        "gate_id": "G07", "verdict": "fail", "reason": "nothing indexed",
        "offending_inputs": []}
    decisions = bare.react(state, "analyze the results", "assess_results")
    assert len(decisions) == 1
    assert "review" in decisions[0].text


def test_assess_refinement_recommends_hydrogen_work(policy):
    state = make_state(stage="Refinement", variables=FULL_VARS)
    state.unresolved_gates.append("G08")
    state.gate_outcomes["G08"] = {
        "gate_id": "G08", "verdict": "fail",
        "reason": "R1 0.1846 exceeds 0.10", "offending_inputs": []}
    say = policy.react(state, "analyze the results", "assess_results")[0]
    assert "hydrogen" in say.text
    assert "improve input" in say.text
    assert say.retrieval is not None


def test_assess_validation_proposes_patch():
    state = make_state(stage="Validation", variables=FULL_VARS)
    state.tool_log.append(tool_entry(
        "refine", arguments={"scenario": "hydrogen_completed"},
        artifacts=["refine_2.out", "model_2.cif"]))
    state.unresolved_gates += ["G10", "G11"]
    for g in ("G10", "G11"):
        state.gate_outcomes[g] = {
            "gate_id": g, "verdict": "fail",
            "reason": "missing _exptl_crystal_description",
            "offending_inputs": []}
    decisions = bare.react(state, "analyze the results", "assess_results")
    proposal = decisions[1]
    assert isinstance(proposal, ProposeCorrection)
    assert proposal.target_gates == ("G10", "G11")
    assert proposal.patch == {"tag": "_exptl_crystal_description",
                              "new_value": "block"}
    assert "model_2.cif" in proposal.summary


def test_improve_applies_riding_hydrogen_only_when_g08_open():
    state = make_state(stage="Refinement")
    state.unresolved_gates.append("G08")
    proposal = bare.react(state, "improve the input", "improve_input")[0]
    assert isinstance(proposal, ProposeCorrection)
    assert proposal.value["value"] == "constrained_riding"
    assert proposal.target_gates == ("G08",)

    calm = bare.react(make_state(), "improve the input", "improve_input")[0]
    assert isinstance(calm, Say)


# -- advance -----------------------------------------------------------------

def test_advance_blocks_on_pending_and_unresolved_and_completion():
    pending = make_state()
    pending.pending_authorization = "auth-0001"
    assert bare.advance(pending) is None

    halted = make_state(stage="Reduction", variables=FULL_VARS)
    halted.unresolved_gates.append("G07")
    assert bare.advance(halted) is None

    done = make_state(stage="Complete")
    done.completed = True
    assert bare.advance(done) is None


def test_advance_asks_for_variables_in_order():
    state = make_state()
    first = bare.advance(state)
    assert isinstance(first, AskUser)
    assert first.expected_variable == ASK_ORDER[0] == "runs"

    # once asked, the policy waits instead of repeating itself
    state.ask_expected = "runs"
    assert bare.advance(state) is None

    state.typed_vars["runs"] = typed_value("runs", [1001])
    state.ask_expected = None
    nxt = bare.advance(state)
    assert isinstance(nxt, AskUser)
    assert nxt.expected_variable == "calibration_file"


def test_advance_volume_is_asked_last():
    state = make_state(variables={k: v for k, v in FULL_VARS.items()
                                  if k != "unit_cell_volume"})
    ask = bare.advance(state)
    assert isinstance(ask, AskUser)
    assert ask.expected_variable == "unit_cell_volume"


def test_advance_data_access_lists_runs_then_finishes():
    state = make_state(variables=FULL_VARS)
    call = bare.advance(state)
    assert isinstance(call, Call)
    assert call.tool == "list_runs"

    state.tool_log.append(tool_entry("list_runs"))
    assert isinstance(bare.advance(state), Done)


def test_advance_reduction_scenario_progression():
    state = make_state(stage="Reduction", variables=FULL_VARS)
    first = bare.advance(state)
    assert isinstance(first, Call) and first.tool == "reduce"
    assert first.arguments["scenario"] == "findub_fail"
    assert first.arguments["runs"] == [1001, 1002, 1003]

    state.tool_log.append(tool_entry("reduce", status="failed"))
    retry = bare.advance(state)
    assert retry.arguments["scenario"] == "ok"
    assert "ub_file" not in retry.arguments

    state.typed_vars["ub_file"] = typed_value("ub_file", "run_1001.ub")
    rescued = bare.advance(state)
    assert rescued.arguments["ub_file"] == "run_1001.ub"
    assert rescued.arguments["scenario"] == "ok"

    state.gate_outcomes["G07"] = {"gate_id": "G07", "verdict": "pass"}
    assert isinstance(bare.advance(state), Done)


def test_advance_integration():
    state = make_state(stage="Integration", variables=FULL_VARS)
    call = bare.advance(state)
    assert call.tool == "integrate"
    state.tool_log.append(tool_entry("integrate"))
    assert isinstance(bare.advance(state), Done)


def test_advance_refinement_waits_for_review_after_first_model():
    state = make_state(stage="Refinement", variables=FULL_VARS)
    call = bare.advance(state)
    assert call.tool == "refine"
    assert call.arguments == {"scenario": "first_model"}

    state.tool_log.append(tool_entry(
        "refine", arguments={"scenario": "first_model"},
        artifacts=["refine_1.out", "model_1.cif"]))
    assert bare.advance(state) is None


def test_advance_refinement_completes_hydrogen_then_done():
    state = make_state(stage="Refinement", variables=FULL_VARS)
    state.typed_vars["hydrogen_treatment"] = typed_value(
        "hydrogen_treatment", "constrained_riding")
    state.tool_log.append(tool_entry(
        "refine", arguments={"scenario": "first_model"},
        artifacts=["refine_1.out", "model_1.cif"]))
    call = bare.advance(state)
    assert call.arguments["scenario"] == "hydrogen_completed"
    assert call.arguments["model_cif"] == "model_1.cif"

    state.tool_log.append(tool_entry(
        "refine", arguments={"scenario": "hydrogen_completed"},
        artifacts=["refine_2.out", "model_2.cif"]))
    assert isinstance(bare.advance(state), Done)


def test_advance_validation_checks_renders_then_done():
    state = make_state(stage="Validation", variables=FULL_VARS)
    state.tool_log.append(tool_entry(
        "refine", arguments={"scenario": "hydrogen_completed"},
        artifacts=["refine_2.out", "model_2.cif"]))
    check = bare.advance(state)
    assert check.tool == "checkcif"

    state.tool_log.append(tool_entry(
        "checkcif", log_text="validated model_2.cif: 1 alert"))
    render = bare.advance(state)
    assert render.tool == "visualize"

    state.tool_log.append(tool_entry(
        "visualize", log_text="rendered model_2.cif to structure.png"))
    assert isinstance(bare.advance(state), Done)


def test_advance_validation_revalidates_after_patch():
    """A patch produces a new model; stale checkcif runs do not count."""
    state = make_state(stage="Validation", variables=FULL_VARS)
    state.tool_log.append(tool_entry(
        "refine", arguments={"scenario": "hydrogen_completed"},
        artifacts=["refine_2.out", "model_2.cif"]))
    state.tool_log.append(tool_entry(
        "checkcif", log_text="validated model_2.cif: 1 alert"))
    state.patches.append({"tag": "_exptl_crystal_description",
                          "output_artifact": "model_3.cif"})
    check = bare.advance(state)
    assert isinstance(check, Call)
    assert check.tool == "checkcif"
    assert "model_3.cif" in check.reason


def test_latest_model_prefers_patch_output():
    state = make_state(stage="Validation")
    state.tool_log.append(tool_entry(
        "refine", artifacts=["refine_1.out", "model_1.cif"]))
    assert ScriptedPolicy._latest_model(state) == "model_1.cif"
    state.patches.append({"output_artifact": "model_3.cif"})
    assert ScriptedPolicy._latest_model(state) == "model_3.cif"
