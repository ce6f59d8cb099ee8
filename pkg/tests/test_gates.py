"""Gate catalog behavior: totality, fail-closed semantics, and the
monotone-repair property (fixing exactly what a gate names flips it)."""

import numpy as np
import pytest

from xtalflow import crystal, gates
from xtalflow.formats import write_checkcif_report, write_shelxl_output, write_ub
from xtalflow.formats.checkcif import CheckCifAlert
from xtalflow.model import WorkflowState, typed_value
from xtalflow.workspace import ArtifactStore, RunEnvironment, run_data_file

BENCH_CELL = (18.508, 18.981, 6.527, 90.0, 90.64, 90.0)
BENCH_VARS = {
    "runs": [1001, 1002, 1003],
    "calibration_file": "calibration/TOPAZ_2025A.DetCal",
    "wavelength_min": 0.4,
    "wavelength_max": 3.5,
    "d_min": 0.5,
    "theta_max": 80.0,
    "molecular_formula": "Ca1 Al2 Si3 O13 H6",
    "z": 4,
    "unit_cell_volume": 2292.9,
    "space_group": "C c",
    "cell": list(BENCH_CELL),
}

GOOD_STATS = dict(r1="0.0554", wr2="0.1297", goof="1.062", cycles=14,
                  uiso_max="0.0412", uiso_min="0.0089")
BAD_STATS = dict(r1="0.1846", wr2="0.4594", goof="2.195", cycles=20,
                 uiso_max="0.0790", uiso_min="0.0101")

MODEL_CIF_COMPLETE = b"""data_bench
_cell_length_a 18.508
_cell_length_b 18.981
_cell_length_c 6.527
_cell_angle_alpha 90.00
_cell_angle_beta 90.64
_cell_angle_gamma 90.00
_cell_volume 2292.9
_cell_formula_units_Z 4
_chemical_formula_sum 'Ca1 Al2 Si3 O13 H6'
_space_group_name_H-M_alt 'C c'
_diffrn_radiation_probe neutron
_exptl_crystal_description block
"""

MODEL_CIF_NO_DESCRIPTION = b"""data_bench
_cell_length_a 18.508
_cell_length_b 18.981
_cell_length_c 6.527
_cell_angle_alpha 90.00
_cell_angle_beta 90.64
_cell_angle_gamma 90.00
_cell_volume 2292.9
_cell_formula_units_Z 4
_chemical_formula_sum 'Ca1 Al2 Si3 O13 H6'
_space_group_name_H-M_alt 'C c'
_diffrn_radiation_probe neutron
"""


def make_state(**overrides) -> WorkflowState:
    state = WorkflowState()
    values = dict(BENCH_VARS)
    values.update(overrides)
    for name, value in values.items():
        if value is None:
            continue
        state.typed_vars[name] = typed_value(name, value)
    return state


@pytest.fixture
def env(tmp_path):
    for n in BENCH_VARS["runs"]:
        path = run_data_file(tmp_path, n)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(b"raw-events\n")
    calib = tmp_path / "calibration" / "TOPAZ_2025A.DetCal"
    calib.parent.mkdir(parents=True, exist_ok=True)
    calib.write_text("panel table\n")
    return RunEnvironment(tmp_path, ArtifactStore(tmp_path / "artifacts"))


def run_gate(gate_id, state, env):
    return gates.evaluate_gate(gates.spec_for(gate_id), state, env, ts=17.0)


def assert_diagnosed(outcome):
    assert outcome.verdict == "fail"
    assert outcome.reason
    assert outcome.offending_inputs
    assert outcome.suggested_action


def stage_good_reduction(env, state):
    cell = crystal.UnitCell(*state.var("cell"))
    rng = np.random.default_rng(7)
    ub = crystal.random_rotation(rng) @ crystal.b_matrix(cell)
    env.artifacts.write("reduce.log", b"runs indexed and integrated\n")
    for n in state.var("runs"):
        env.artifacts.write(f"run_{n}.hkl", b"   0   0   0    0.00    0.00   0\n")
        env.artifacts.write(f"run_{n}.ub", write_ub(ub, cell))


def write_refine(env, stats, signatures=(), drop_uiso=False):
    kwargs = dict(stats)
    if drop_uiso:
        kwargs["uiso_max"] = None
        kwargs["uiso_min"] = None
    k = env.artifacts.next_index("refine_", ".out")
    env.artifacts.write(f"refine_{k}.out",
                        write_shelxl_output(signatures=signatures, **kwargs))


# -- catalog shape ----------------------------------------------------------

def test_catalog_has_thirteen_gates():
    specs = gates.catalog()
    assert len(specs) == 13
    assert [s.id for s in specs] == [f"G{i:02d}" for i in range(1, 14)]


def test_every_class_used_and_valid():
    seen = {s.gate_class for s in gates.catalog()}
    assert seen == set(gates.GATE_CLASSES)


def test_boundary_table_covers_forward_chain():
    assert [s.id for s in gates.gates_for_boundary("DataAccess", "Reduction")] \
        == ["G01", "G02", "G03", "G04", "G06", "G12"]
    assert [s.id for s in gates.gates_for_boundary("Reduction", "Integration")] \
        == ["G02", "G05", "G07"]
    assert [s.id for s in gates.gates_for_boundary("Integration", "Refinement")] \
        == ["G07"]
    assert [s.id for s in gates.gates_for_boundary("Refinement", "Validation")] \
        == ["G08", "G09"]
    assert [s.id for s in gates.gates_for_boundary("Validation", "Complete")] \
        == ["G10", "G11", "G13"]


def test_backward_boundary_has_no_gates():
    assert gates.gates_for_boundary("Refinement", "Reduction") == []


def test_illegal_boundary_rejected():
    with pytest.raises(gates.GateError):
        gates.gates_for_boundary("DataAccess", "Integration")


def test_unknown_gate_id_rejected():
    with pytest.raises(gates.GateError):
        gates.spec_for("G99")


# -- totality and fail-closed behavior --------------------------------------

def test_missing_inputs_fail_never_skip(env):
    empty = WorkflowState()
    for spec in gates.catalog():
        if not spec.required_inputs:
            continue
        outcome = gates.evaluate_gate(spec, empty, env)
        assert_diagnosed(outcome)
        assert "missing prerequisite" in outcome.reason


def test_g13_vacuous_pass_without_patches(env):
    assert run_gate("G13", WorkflowState(), env).passed


def test_garbage_values_fail_instead_of_raising(env):
    state = make_state(molecular_formula="1notaformula")
    outcome = run_gate("G01", state, env)
    assert_diagnosed(outcome)
    assert "gate evaluation error" in outcome.reason


def test_unreadable_artifact_fails_instead_of_raising(env):
    env.artifacts.write("reduction.config", b"\xff\xfe broken")
    outcome = run_gate("G03", make_state(), env)
    assert_diagnosed(outcome)


def test_every_failure_carries_all_three_diagnostics(env):
    # One constructible failing input per gate.
    failing = {}
    failing["G01"] = (make_state(unit_cell_volume=2.0), env)
    failing["G02"] = (make_state(wavelength_min=1.5), env)
    failing["G12"] = (make_state(unit_cell_volume=2.0), env)
    failing["G04"] = (make_state(space_group="P 4"), env)
    for gate_id, (state, e) in failing.items():
        assert_diagnosed(run_gate(gate_id, state, e))


def test_outcomes_are_deterministic(env):
    state = make_state(unit_cell_volume=2.0)
    spec = gates.spec_for("G01")
    a = gates.evaluate_gate(spec, state, env, ts=5.0)
    b = gates.evaluate_gate(spec, state, env, ts=5.0)
    assert a.to_payload(spec, spec.boundary) == b.to_payload(spec, spec.boundary)


# -- G01 volume minimum ------------------------------------------------------

def test_g01_passes_benchmark(env):
    outcome = run_gate("G01", make_state(), env)
    assert outcome.passed
    assert "1500" in outcome.reason


def test_g01_rejects_tiny_volume_and_names_minimum(env):
    outcome = run_gate("G01", make_state(unit_cell_volume=2.0), env)
    assert_diagnosed(outcome)
    assert "1500" in outcome.reason
    assert "1500" in outcome.suggested_action
    assert any(o["name"] == "unit_cell_volume" for o in outcome.offending_inputs)


def test_g01_rejects_unrealizable_cell(env):
    state = make_state(cell=[5.0, 5.0, 5.0, 150.0, 150.0, 150.0])
    outcome = run_gate("G01", state, env)
    assert_diagnosed(outcome)
    assert any(o["name"] == "cell" for o in outcome.offending_inputs)


def test_g01_monotone_repair(env):
    state = make_state(unit_cell_volume=2.0)
    outcome = run_gate("G01", state, env)
    assert not outcome.passed
    state.typed_vars["unit_cell_volume"] = typed_value(
        "unit_cell_volume", 2292.9)
    assert run_gate("G01", state, env).passed


# -- G02 resolution window ---------------------------------------------------

def test_g02_passes_benchmark(env):
    assert run_gate("G02", make_state(), env).passed


def test_g02_rejects_unreachable_d_min(env):
    outcome = run_gate("G02", make_state(wavelength_min=1.5), env)
    assert_diagnosed(outcome)
    assert "d_min" in [o["name"] for o in outcome.offending_inputs]


def test_g02_monotone_repair(env):
    state = make_state(wavelength_min=1.5)
    assert not run_gate("G02", state, env).passed
    state.typed_vars["d_min"] = typed_value("d_min", 0.80)
    assert run_gate("G02", state, env).passed


# -- G03 configuration -------------------------------------------------------

CONFIG_OK = b"""runs = 1001-1003
wavelength_min = 0.4
wavelength_max = 3.5
d_min = 0.5
theta_max = 80.0
molecular_formula = Ca1 Al2 Si3 O13 H6
z = 4
unit_cell_volume = 2292.9
space_group = C c
calibration_file = calibration/TOPAZ_2025A.DetCal
"""


def test_g03_passes_complete_config(env):
    env.artifacts.write("reduction.config", CONFIG_OK)
    assert run_gate("G03", make_state(), env).passed


def test_g03_names_missing_keys(env):
    stripped = b"".join(line + b"\n" for line in CONFIG_OK.splitlines()
                        if not line.startswith(b"calibration_file"))
    env.artifacts.write("reduction.config", stripped)
    outcome = run_gate("G03", make_state(), env)
    assert_diagnosed(outcome)
    assert any(o["name"] == "calibration_file"
               for o in outcome.offending_inputs)


def test_g03_rejects_type_errors(env):
    env.artifacts.write(
        "reduction.config",
        CONFIG_OK.replace(b"z = 4", b"z = four"))
    assert_diagnosed(run_gate("G03", make_state(), env))


# -- G04 symmetry agreement --------------------------------------------------

def test_g04_passes_monoclinic_benchmark(env):
    assert run_gate("G04", make_state(), env).passed


def test_g04_rejects_mismatched_system(env):
    outcome = run_gate("G04", make_state(space_group="P 4"), env)
    assert_diagnosed(outcome)
    assert any(o["name"] == "cell" for o in outcome.offending_inputs)


def test_g04_rejects_unknown_symbol(env):
    outcome = run_gate("G04", make_state(space_group="Q 9"), env)
    assert_diagnosed(outcome)


def test_g04_monotone_repair(env):
    state = make_state(space_group="P 4")
    assert not run_gate("G04", state, env).passed
    state.typed_vars["cell"] = typed_value(
        "cell", [6.0, 6.0, 9.0, 90.0, 90.0, 90.0])
    assert run_gate("G04", state, env).passed


# -- G05 orientation matrices ------------------------------------------------

def test_g05_passes_consistent_matrices(env):
    state = make_state()
    stage_good_reduction(env, state)
    assert run_gate("G05", state, env).passed


def test_g05_rejects_wrong_cell_and_names_file(env):
    state = make_state()
    stage_good_reduction(env, state)
    wrong = crystal.UnitCell(19.8, 18.981, 6.527, 90.0, 90.64, 90.0)
    env.artifacts.write("run_1002.ub",
                        write_ub(crystal.b_matrix(wrong), wrong))
    outcome = run_gate("G05", state, env)
    assert_diagnosed(outcome)
    assert any(o["name"] == "run_1002.ub" for o in outcome.offending_inputs)


def test_g05_rejects_unreadable_matrix(env):
    state = make_state()
    stage_good_reduction(env, state)
    env.artifacts.write("run_1003.ub", b"not numbers\n")
    assert_diagnosed(run_gate("G05", state, env))


def test_g05_monotone_repair(env):
    state = make_state()
    stage_good_reduction(env, state)
    wrong = crystal.UnitCell(19.8, 18.981, 6.527, 90.0, 90.64, 90.0)
    env.artifacts.write("run_1002.ub",
                        write_ub(crystal.b_matrix(wrong), wrong))
    assert not run_gate("G05", state, env).passed
    good = crystal.UnitCell(*state.var("cell"))
    env.artifacts.write("run_1002.ub",
                        write_ub(crystal.b_matrix(good), good))
    assert run_gate("G05", state, env).passed


# -- G06 staged inputs -------------------------------------------------------

def test_g06_passes_staged_workspace(env):
    assert run_gate("G06", make_state(), env).passed


def test_g06_rejects_missing_run_file(env, tmp_path):
    run_data_file(tmp_path, 1002).unlink()
    outcome = run_gate("G06", make_state(), env)
    assert_diagnosed(outcome)
    assert any(o["value"] == 1002 for o in outcome.offending_inputs)


def test_g06_rejects_escaping_calibration_path(env):
    state = make_state(calibration_file="../../etc/passwd")
    outcome = run_gate("G06", state, env)
    assert_diagnosed(outcome)
    assert any(o["name"] == "calibration_file"
               for o in outcome.offending_inputs)


def test_g06_checks_background_when_set(env):
    state = make_state(background_file="data/background.dat")
    outcome = run_gate("G06", state, env)
    assert_diagnosed(outcome)
    assert any(o["name"] == "background_file"
               for o in outcome.offending_inputs)


# -- G07 reduction health ----------------------------------------------------

def test_g07_passes_clean_reduction(env):
    state = make_state()
    stage_good_reduction(env, state)
    assert run_gate("G07", state, env).passed


def test_g07_rejects_failure_signature_and_missing_outputs(env):
    state = make_state()
    stage_good_reduction(env, state)
    env.artifacts.write(
        "reduce.log",
        b"run 1001 indexed\nERROR: FindUBwithFFT failed on run 1003\n")
    (env.artifacts.root / "run_1003.ub").unlink()
    outcome = run_gate("G07", state, env)
    assert_diagnosed(outcome)
    offenders = [o["name"] for o in outcome.offending_inputs]
    assert "reduce.log" in offenders
    assert "run_1003.ub" in offenders
    assert "reuse" in outcome.suggested_action


# -- G08 / G09 refinement statistics ----------------------------------------

def test_g08_rejects_first_model_statistics(env):
    write_refine(env, BAD_STATS)
    outcome = run_gate("G08", make_state(), env)
    assert_diagnosed(outcome)
    offenders = {o["name"] for o in outcome.offending_inputs}
    assert {"R1", "wR2", "GoF"} <= offenders


def test_g08_passes_final_statistics(env):
    write_refine(env, GOOD_STATS)
    assert run_gate("G08", make_state(), env).passed


def test_g08_uses_latest_output(env):
    write_refine(env, BAD_STATS)
    write_refine(env, GOOD_STATS)
    assert run_gate("G08", make_state(), env).passed


def test_g08_rejects_unstable_refinement(env):
    write_refine(env, GOOD_STATS,
                 signatures=("** REFINEMENT UNSTABLE **",))
    outcome = run_gate("G08", make_state(), env)
    assert_diagnosed(outcome)
    assert "converge" in outcome.reason


def test_g09_passes_plausible_displacements(env):
    write_refine(env, GOOD_STATS)
    assert run_gate("G09", make_state(), env).passed


def test_g09_fails_closed_when_extrema_absent(env):
    write_refine(env, GOOD_STATS, drop_uiso=True)
    outcome = run_gate("G09", make_state(), env)
    assert_diagnosed(outcome)
    assert "not reported" in outcome.reason


def test_g09_rejects_out_of_band_uiso(env):
    stats = dict(GOOD_STATS, uiso_max="0.3100")
    write_refine(env, stats)
    outcome = run_gate("G09", make_state(), env)
    assert_diagnosed(outcome)
    assert any(o["name"] == "UISO_MAX" for o in outcome.offending_inputs)


def test_g09_rejects_nonpositive_uiso(env):
    stats = dict(GOOD_STATS, uiso_min="0.0000")
    write_refine(env, stats)
    assert_diagnosed(run_gate("G09", make_state(), env))


# -- G10 / G11 publication checks -------------------------------------------

def test_g10_names_missing_description_tag(env):
    env.artifacts.write("model_1.cif", MODEL_CIF_NO_DESCRIPTION)
    outcome = run_gate("G10", make_state(), env)
    assert_diagnosed(outcome)
    assert any(o["name"] == "_exptl_crystal_description"
               for o in outcome.offending_inputs)
    assert "block" in outcome.suggested_action


def test_g10_passes_complete_model(env):
    env.artifacts.write("model_1.cif", MODEL_CIF_COMPLETE)
    assert run_gate("G10", make_state(), env).passed


def test_g11_rejects_level_a_alert(env):
    report = write_checkcif_report([
        CheckCifAlert("EXPT005_ALERT_1_A", "A",
                      "_exptl_crystal_description is missing",
                      suppressed_test="CRYSR_01"),
        CheckCifAlert("PLAT999_ALERT_2_G", "G", "informational"),
    ])
    env.artifacts.write("checkcif_1.txt", report)
    outcome = run_gate("G11", make_state(), env)
    assert_diagnosed(outcome)
    assert any(o["name"] == "EXPT005_ALERT_1_A"
               for o in outcome.offending_inputs)


def test_g11_passes_clean_report(env):
    report = write_checkcif_report([
        CheckCifAlert("PLAT999_ALERT_2_G", "G", "informational"),
    ])
    env.artifacts.write("checkcif_1.txt", report)
    assert run_gate("G11", make_state(), env).passed


# -- G12 density -------------------------------------------------------------

def test_g12_passes_benchmark_density(env):
    outcome = run_gate("G12", make_state(), env)
    assert outcome.passed


def test_g12_rejects_absurd_density(env):
    outcome = run_gate("G12", make_state(unit_cell_volume=2.0), env)
    assert_diagnosed(outcome)
    names = {o["name"] for o in outcome.offending_inputs}
    assert {"unit_cell_volume", "z", "molecular_formula"} <= names


# -- G13 change log ----------------------------------------------------------

def test_g13_rejects_unexplained_patch(env):
    state = make_state()
    state.patches.append({"tag": "_exptl_crystal_description",
                          "rationale": "  ",
                          "source_artifact": "model_2.cif",
                          "output_artifact": "model_3.cif"})
    assert_diagnosed(run_gate("G13", state, env))


def test_g13_passes_explained_patches(env):
    state = make_state()
    state.patches.append({"tag": "_exptl_crystal_description",
                          "rationale": "validation alert asked for it",
                          "source_artifact": "model_2.cif",
                          "output_artifact": "model_3.cif"})
    assert run_gate("G13", state, env).passed


# -- eager triggers and boundary sweep ---------------------------------------

def test_volume_change_triggers_volume_gates():
    state = make_state()
    triggered = [s.id for s in gates.eager_gates_for_value(
        state, "unit_cell_volume")]
    assert triggered == ["G01", "G12"]


def test_value_triggers_respect_current_stage():
    state = make_state()
    state.stage = "Refinement"
    assert gates.eager_gates_for_value(state, "unit_cell_volume") == []


def test_tool_triggers():
    state = make_state()
    assert [s.id for s in gates.eager_gates_for_tool(state, "reduce")] \
        == ["G05", "G07"]
    assert [s.id for s in gates.eager_gates_for_tool(state, "refine")] \
        == ["G08", "G09"]
    assert gates.eager_gates_for_tool(state, "visualize") == []


def test_boundary_sweep_runs_all_gates_in_order(env):
    state = make_state(unit_cell_volume=2.0)
    env.artifacts.write("reduction.config", CONFIG_OK)
    outcomes = gates.evaluate_boundary(
        "DataAccess", "Reduction", state, env, ts=3.0)
    assert [o.gate_id for o in outcomes] \
        == ["G01", "G02", "G03", "G04", "G06", "G12"]
    verdicts = {o.gate_id: o.verdict for o in outcomes}
    assert verdicts["G01"] == "fail"
    assert verdicts["G12"] == "fail"
    assert verdicts["G02"] == "pass"
    assert all(o.evaluated_at == 3.0 for o in outcomes)
