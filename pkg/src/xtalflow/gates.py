"""Fail-closed verification gates.

Thirteen deterministic checks in four classes guard the stage
boundaries. A gate that cannot see its inputs fails; a gate whose
evaluation raises fails; and every failure names what went wrong, which
inputs did it, and a concrete next action. Gates never repair anything.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import crystal
from .formats import (CifParseError, ConfigParseError, ConfigTypeError,
                      ShelxlParseError, UbFileError, missing_required_tags,
                      parse_checkcif_report, parse_cif, parse_config,
                      parse_shelxl_output, read_ub)
from .model import WorkflowState, transition_allowed
from .workspace import RunEnvironment

GATE_CATALOG_VERSION = "1"

GATE_CLASSES = ("HardBounds", "CrossConsistency", "ToolVerified",
                "PublicationValidation")

# Log lines that prove the reduction went wrong.
REDUCTION_FAILURE_SIGNATURES = (
    "FindUBwithFFT",
    "ERROR:",
)

R1_MAX = 0.10
WR2_MAX = 0.30
GOF_RANGE = (0.5, 2.0)
UISO_RANGE = (0.0, 0.25)


@dataclass(frozen=True)
class GateSpec:
    id: str
    gate_class: str
    boundary: tuple[str, str]
    required_inputs: tuple[str, ...]
    description: str


@dataclass
class GateOutcome:
    gate_id: str
    verdict: str                      # "pass" | "fail"
    reason: str = ""
    offending_inputs: list[dict] = field(default_factory=list)
    suggested_action: str = ""
    evaluated_at: float = 0.0

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_payload(self, spec: "GateSpec",
                   boundary: tuple[str, str]) -> dict:
        return {
            "gate_id": self.gate_id,
            "gate_class": spec.gate_class,
            "boundary": list(boundary),
            "verdict": self.verdict,
            "reason": self.reason,
            "offending_inputs": self.offending_inputs,
            "suggested_action": self.suggested_action,
        }


class GateError(ValueError):
    """Engine misuse (unknown gate, illegal boundary)."""


CATALOG: tuple[GateSpec, ...] = (
    GateSpec("G01", "HardBounds", ("DataAccess", "Reduction"),
             ("var:molecular_formula", "var:z", "var:unit_cell_volume",
              "var:cell"),
             "Declared cell volume meets the per-atom minimum and the "
             "cell metric is realizable."),
    GateSpec("G02", "HardBounds", ("DataAccess", "Reduction"),
             ("var:wavelength_min", "var:wavelength_max", "var:d_min",
              "var:theta_max"),
             "Wavelength window, d_min, and theta_max are mutually "
             "consistent."),
    GateSpec("G03", "HardBounds", ("DataAccess", "Reduction"),
             ("artifact:reduction.config",),
             "Reduction configuration carries every required key, "
             "correctly typed."),
    GateSpec("G04", "CrossConsistency", ("DataAccess", "Reduction"),
             ("var:space_group", "var:cell"),
             "Space-group lattice system matches the declared cell."),
    GateSpec("G05", "CrossConsistency", ("Reduction", "Integration"),
             ("var:cell", "artifact_kind:ub"),
             "Orientation matrices on disk are consistent with the "
             "declared cell."),
    GateSpec("G06", "CrossConsistency", ("DataAccess", "Reduction"),
             ("var:runs", "var:calibration_file"),
             "Run files are staged and calibration/background paths "
             "stay inside the allowed roots."),
    GateSpec("G07", "ToolVerified", ("Reduction", "Integration"),
             ("var:runs", "artifact:reduce.log"),
             "Reduction log is free of failure signatures and per-run "
             "outputs are complete."),
    GateSpec("G08", "ToolVerified", ("Refinement", "Validation"),
             ("latest:refine_out",),
             "Refinement converged with residuals inside the "
             "publication thresholds."),
    GateSpec("G09", "ToolVerified", ("Refinement", "Validation"),
             ("latest:refine_out",),
             "Displacement parameters are physically plausible."),
    GateSpec("G10", "PublicationValidation", ("Validation", "Complete"),
             ("latest:model_cif",),
             "Model file carries every required metadata tag."),
    GateSpec("G11", "PublicationValidation", ("Validation", "Complete"),
             ("latest:checkcif_txt",),
             "Validation report shows zero level A and level B alerts."),
    GateSpec("G12", "CrossConsistency", ("DataAccess", "Reduction"),
             ("var:molecular_formula", "var:z", "var:unit_cell_volume"),
             "Density implied by formula, Z, and volume is plausible."),
    GateSpec("G13", "PublicationValidation", ("Validation", "Complete"),
             (),
             "Every model edit carries a recorded rationale."),
)

_SPEC_BY_ID = {spec.id: spec for spec in CATALOG}

# Which gates guard each boundary. G02 binds at configuration time and
# again after reduction; G07 re-checks reduction health before
# refinement begins.
BOUNDARY_GATES: dict[tuple[str, str], tuple[str, ...]] = {
    ("DataAccess", "Reduction"): ("G01", "G02", "G03", "G04", "G06", "G12"),
    ("Reduction", "Integration"): ("G02", "G05", "G07"),
    ("Integration", "Refinement"): ("G07",),
    ("Refinement", "Validation"): ("G08", "G09"),
    ("Validation", "Complete"): ("G10", "G11", "G13"),
}

# Eager re-evaluation triggers: when a typed variable lands or a tool
# finishes, gates that just became decidable run immediately so the
# user hears about problems at the earliest possible moment.
TOOL_TRIGGERS: dict[str, tuple[str, ...]] = {
    "reduce": ("G05", "G07"),
    "refine": ("G08", "G09"),
    "checkcif": ("G10", "G11"),
}

# A model-file patch changes what G10 sees immediately; alert gates wait
# for the validation tool to rerun before they can flip back.
PATCH_TRIGGERS: tuple[str, ...] = ("G10",)


def catalog() -> list[GateSpec]:
    return list(CATALOG)


def spec_for(gate_id: str) -> GateSpec:
    try:
        return _SPEC_BY_ID[gate_id]
    except KeyError:
        raise GateError(f"unknown gate {gate_id!r}") from None


def gates_for_boundary(from_stage: str, to_stage: str) -> list[GateSpec]:
    if not transition_allowed(from_stage, to_stage):
        raise GateError(f"illegal transition {from_stage} -> {to_stage}")
    ids = BOUNDARY_GATES.get((from_stage, to_stage), ())
    return [_SPEC_BY_ID[g] for g in sorted(ids)]


def _cell_from_state(state: WorkflowState) -> crystal.UnitCell:
    values = state.var("cell")
    return crystal.UnitCell(*[float(v) for v in values[:6]])


def _input_present(name: str, state: WorkflowState,
                   env: RunEnvironment) -> bool:
    kind, _, rest = name.partition(":")
    if kind == "var":
        return rest in state.typed_vars
    if kind == "artifact":
        return env.artifacts.exists(rest)
    if kind == "artifact_kind":
        return any(n.endswith(f".{rest}") for n in env.artifacts.names())
    if kind == "latest":
        prefix, _, ext = rest.rpartition("_")
        return env.artifacts.latest(prefix + "_", "." + ext) is not None
    raise GateError(f"unknown required-input form {name!r}")


def inputs_ready(spec: GateSpec, state: WorkflowState,
                 env: RunEnvironment) -> bool:
    """True when every required input exists. Eager triggers skip gates
    that are not yet decidable; boundary evaluation never does."""
    try:
        return all(_input_present(name, state, env)
                   for name in spec.required_inputs)
    except GateError:
        raise
    except Exception:
        return False


def evaluate_gate(spec: GateSpec, state: WorkflowState,
                  env: RunEnvironment, ts: float = 0.0) -> GateOutcome:
    """Evaluate one gate. Missing inputs fail; exceptions fail; a fail
    always carries reason, offending inputs, and a next action."""
    try:
        missing = [name for name in spec.required_inputs
                   if not _input_present(name, state, env)]
        if missing:
            return GateOutcome(
                gate_id=spec.id, verdict="fail",
                reason="missing prerequisite: "
                       + ", ".join(m.partition(":")[2] for m in missing),
                offending_inputs=[{"name": m.partition(":")[2],
                                   "value": None} for m in missing],
                suggested_action="provide "
                + ", ".join(m.partition(":")[2] for m in missing)
                + " before attempting this transition",
                evaluated_at=ts)
        outcome = _IMPLEMENTATIONS[spec.id](state, env)
        outcome.gate_id = spec.id
        outcome.evaluated_at = ts
        if not outcome.passed:
            # Fail-closed bookkeeping: diagnostics must never be empty.
            if not outcome.reason:
                outcome.reason = "check failed"
            if not outcome.offending_inputs:
                outcome.offending_inputs = [{"name": "unknown", "value": None}]
            if not outcome.suggested_action:
                outcome.suggested_action = "inspect the inputs named above"
        return outcome
    except Exception as exc:
        return GateOutcome(
            gate_id=spec.id, verdict="fail",
            reason=f"gate evaluation error: {exc}",
            offending_inputs=[{"name": "evaluation", "value": str(exc)}],
            suggested_action="fix or re-provide the gate's inputs; "
                             "evaluation errors never pass",
            evaluated_at=ts)


def evaluate_boundary(from_stage: str, to_stage: str, state: WorkflowState,
                      env: RunEnvironment, ts: float = 0.0
                      ) -> list[GateOutcome]:
    """All gates on a boundary, in id order, no short-circuiting."""
    return [evaluate_gate(spec, state, env, ts)
            for spec in gates_for_boundary(from_stage, to_stage)]


def eager_gates_for_value(state: WorkflowState, name: str) -> list[GateSpec]:
    """Gates on the current outgoing boundary that consume this
    variable; the caller still checks input completeness via
    evaluate_gate (incomplete ones are skipped by the orchestrator)."""
    boundary_ids = BOUNDARY_GATES.get(
        (state.stage, _forward_of(state.stage)), ())
    out = []
    for gate_id in sorted(boundary_ids):
        spec = _SPEC_BY_ID[gate_id]
        if f"var:{name}" in spec.required_inputs:
            out.append(spec)
    return out


def eager_gates_for_tool(state: WorkflowState, tool: str) -> list[GateSpec]:
    triggered = TOOL_TRIGGERS.get(tool, ())
    return [_SPEC_BY_ID[g] for g in sorted(triggered)]


def _forward_of(stage: str) -> str:
    from .model import next_stage
    return next_stage(stage) or stage


def _fail(reason: str, offending: list[dict], action: str) -> GateOutcome:
    return GateOutcome(gate_id="", verdict="fail", reason=reason,
                       offending_inputs=offending, suggested_action=action)


def _pass(reason: str = "") -> GateOutcome:
    return GateOutcome(gate_id="", verdict="pass", reason=reason)


def _g01_volume(state: WorkflowState, env: RunEnvironment) -> GateOutcome:
    formula = crystal.parse_formula(state.var("molecular_formula"))
    z = int(state.var("z"))
    volume = float(state.var("unit_cell_volume"))
    cell = _cell_from_state(state)
    minimum = crystal.min_volume_heuristic(formula, z)
    offending: list[dict] = []
    reasons: list[str] = []
    if volume < minimum:
        offending.append({"name": "unit_cell_volume", "value": volume})
        reasons.append(
            f"declared volume {volume:g} A^3 is below the minimum "
            f"{minimum:g} A^3 for {formula.atom_total} atoms x Z={z} "
            f"x 15 A^3")
    if not cell.is_realizable():
        offending.append({"name": "cell", "value": list(cell.parameters())})
        reasons.append("declared cell parameters do not describe a "
                       "realizable lattice")
    if offending:
        return _fail(
            "; ".join(reasons), offending,
            f"declare a volume of at least {minimum:g} A^3 and a "
            f"geometrically valid cell")
    return _pass(f"volume {volume:g} A^3 >= minimum {minimum:g} A^3")


def _g02_resolution(state: WorkflowState, env: RunEnvironment) -> GateOutcome:
    lam_lo = float(state.var("wavelength_min"))
    lam_hi = float(state.var("wavelength_max"))
    d_min = float(state.var("d_min"))
    theta_max = float(state.var("theta_max"))
    verdict = crystal.resolution_consistency(lam_lo, lam_hi, d_min, theta_max)
    if verdict.passed:
        return _pass(verdict.message)
    return _fail(
        verdict.message,
        [{"name": "d_min", "value": d_min},
         {"name": "wavelength_min", "value": lam_lo},
         {"name": "theta_max", "value": theta_max}],
        f"raise d_min to at least {verdict.achievable_d_min:.4g} A or "
        f"lower wavelength_min")


def _g03_config(state: WorkflowState, env: RunEnvironment) -> GateOutcome:
    data = env.artifacts.read("reduction.config")
    try:
        cfg = parse_config(data)
    except (ConfigParseError, ConfigTypeError) as exc:
        return _fail(
            f"configuration does not parse: {exc}",
            [{"name": "reduction.config", "value": str(exc)}],
            "fix the configuration file so every key parses with its "
            "declared type")
    missing = cfg.missing_required
    if missing:
        return _fail(
            "required configuration keys missing: " + ", ".join(missing),
            [{"name": key, "value": None} for key in missing],
            "add the missing keys to the reduction configuration")
    return _pass("all required keys present and typed")


def _g04_symmetry(state: WorkflowState, env: RunEnvironment) -> GateOutcome:
    cell = _cell_from_state(state)
    try:
        system = crystal.lattice_system(state.var("space_group"))
    except crystal.SpaceGroupError as exc:
        return _fail(
            f"space group not recognized: {exc}",
            [{"name": "space_group", "value": state.var("space_group")}],
            "provide a valid Hermann-Mauguin symbol or number 1-230")
    verdict = crystal.check_cell_symmetry(cell, system)
    if verdict.passed:
        return _pass(f"cell satisfies {system.name} constraints")
    return _fail(
        f"declared cell violates {system.name} constraints: "
        + "; ".join(f"{v['constraint']} (off by {v['delta']:.4g})"
                    for v in verdict.violations),
        [{"name": "cell", "value": list(cell.parameters())},
         {"name": "space_group", "value": state.var("space_group")}],
        "correct the cell parameters or the space-group assignment so "
        "they agree")


def _g05_ub(state: WorkflowState, env: RunEnvironment) -> GateOutcome:
    declared = _cell_from_state(state)
    offending: list[dict] = []
    reasons: list[str] = []
    checked = 0
    for name in env.artifacts.names():
        if not name.endswith(".ub"):
            continue
        checked += 1
        try:
            ub, _ = read_ub(env.artifacts.read(name))
            report = crystal.ub_consistency(ub, declared)
        except (UbFileError, crystal.DegenerateOrientationError) as exc:
            offending.append({"name": name, "value": str(exc)})
            reasons.append(f"{name}: unusable orientation matrix ({exc})")
            continue
        if not report.passed:
            detail_parts = []
            if report.failed_parameters:
                detail_parts.append(
                    "deviations on " + ", ".join(report.failed_parameters))
            if report.orthogonality_residual >= crystal.ORTHOGONALITY_TOL:
                detail_parts.append("non-orthogonal U factor")
            if not report.handedness_positive:
                detail_parts.append("left-handed matrix")
            offending.append({"name": name,
                              "value": report.failed_parameters})
            reasons.append(f"{name}: " + "; ".join(detail_parts))
    if checked == 0:
        return _fail(
            "no orientation-matrix artifacts to check",
            [{"name": "*.ub", "value": None}],
            "run reduction so orientation matrices exist")
    if offending:
        return _fail(
            "orientation matrices inconsistent with the declared cell: "
            + "; ".join(reasons),
            offending,
            "re-index the affected runs or reuse a UB file consistent "
            "with the declared cell")
    return _pass(f"{checked} orientation matrices consistent with the "
                 f"declared cell")


def _g06_paths(state: WorkflowState, env: RunEnvironment) -> GateOutcome:
    runs = state.var("runs")
    offending: list[dict] = []
    reasons: list[str] = []
    missing_runs = [n for n in runs if not env.run_file_exists(int(n))]
    if missing_runs:
        offending.extend({"name": "runs", "value": n} for n in missing_runs)
        reasons.append(
            "run files not staged under the workspace: "
            + ", ".join(str(n) for n in missing_runs))
    for var_name in ("calibration_file", "background_file"):
        value = state.var(var_name)
        if value is None:
            continue
        if env.resolve_read_path(str(value)) is None:
            offending.append({"name": var_name, "value": str(value)})
            reasons.append(
                f"{var_name} {value!r} does not resolve inside the "
                f"allowed roots")
    if offending:
        return _fail(
            "; ".join(reasons), offending,
            "stage the missing run files and keep calibration/background "
            "paths inside the experiment areas")
    return _pass(f"{len(runs)} run files staged, auxiliary paths contained")


def _g07_reduction(state: WorkflowState, env: RunEnvironment) -> GateOutcome:
    log_text = env.artifacts.read("reduce.log").decode("utf-8")
    offending: list[dict] = []
    reasons: list[str] = []
    for line in log_text.splitlines():
        if any(sig in line for sig in REDUCTION_FAILURE_SIGNATURES):
            offending.append({"name": "reduce.log", "value": line.strip()})
            reasons.append(f"failure signature in log: {line.strip()!r}")
    for n in state.var("runs"):
        for suffix in (".hkl", ".ub"):
            artifact = f"run_{int(n)}{suffix}"
            if not env.artifacts.exists(artifact):
                offending.append({"name": artifact, "value": None})
                reasons.append(f"expected output {artifact} is missing")
    if offending:
        return _fail(
            "; ".join(reasons), offending,
            "correct the reduction inputs and rerun, or reuse an "
            "orientation matrix from a run that indexed successfully")
    return _pass("log clean, per-run reflection and orientation outputs "
                 "complete")


def _latest_refine_summary(env: RunEnvironment):
    name = env.artifacts.latest("refine_", ".out")
    return name, parse_shelxl_output(env.artifacts.read(name))


def _g08_residuals(state: WorkflowState, env: RunEnvironment) -> GateOutcome:
    name, summary = _latest_refine_summary(env)
    stats = summary.stats
    offending: list[dict] = []
    reasons: list[str] = []
    if not summary.converged:
        offending.append({"name": name,
                          "value": summary.warning_lines})
        reasons.append("refinement did not converge")
    if stats.r1 > R1_MAX:
        offending.append({"name": "R1", "value": stats.r1})
        reasons.append(f"R1 {stats.r1:g} exceeds {R1_MAX:g}")
    if stats.wr2 > WR2_MAX:
        offending.append({"name": "wR2", "value": stats.wr2})
        reasons.append(f"wR2 {stats.wr2:g} exceeds {WR2_MAX:g}")
    if not GOF_RANGE[0] <= stats.gof <= GOF_RANGE[1]:
        offending.append({"name": "GoF", "value": stats.gof})
        reasons.append(
            f"goodness of fit {stats.gof:g} outside "
            f"[{GOF_RANGE[0]:g}, {GOF_RANGE[1]:g}]")
    if offending:
        return _fail(
            "; ".join(reasons), offending,
            "improve the structural model (complete the hydrogen "
            "treatment, check the data) and refine again")
    return _pass(
        f"converged with R1 {stats.r1:g}, wR2 {stats.wr2:g}, "
        f"GoF {stats.gof:g}")


def _g09_displacement(state: WorkflowState, env: RunEnvironment) -> GateOutcome:
    name, summary = _latest_refine_summary(env)
    stats = summary.stats
    if stats.max_uiso is None or stats.min_uiso is None:
        return _fail(
            "displacement extrema not reported by the refinement",
            [{"name": name, "value": None}],
            "rerun refinement with displacement reporting enabled")
    offending: list[dict] = []
    reasons: list[str] = []
    lo, hi = UISO_RANGE
    if stats.min_uiso <= lo:
        offending.append({"name": "UISO_MIN", "value": stats.min_uiso})
        reasons.append(f"minimum Uiso {stats.min_uiso:g} is not positive")
    if stats.max_uiso > hi:
        offending.append({"name": "UISO_MAX", "value": stats.max_uiso})
        reasons.append(
            f"maximum Uiso {stats.max_uiso:g} A^2 exceeds {hi:g} A^2")
    if offending:
        return _fail(
            "; ".join(reasons), offending,
            "inspect the displacement parameters; atoms outside "
            "(0, 0.25] A^2 usually mean a mis-assigned or missing atom")
    return _pass(f"Uiso within ({lo:g}, {hi:g}] A^2")


def _g10_cif_tags(state: WorkflowState, env: RunEnvironment) -> GateOutcome:
    name = env.artifacts.latest("model_", ".cif")
    try:
        doc = parse_cif(env.artifacts.read(name))
    except CifParseError as exc:
        return _fail(
            f"model file does not parse: {exc}",
            [{"name": name, "value": str(exc)}],
            "repair the model file so it parses")
    missing = missing_required_tags(doc)
    if missing:
        return _fail(
            "required metadata tags missing: " + ", ".join(missing),
            [{"name": tag, "value": None} for tag in missing],
            "patch the model file to add the missing tags (for example "
            "_exptl_crystal_description 'block') with a recorded "
            "rationale")
    return _pass("all required metadata tags present")


def _g11_alerts(state: WorkflowState, env: RunEnvironment) -> GateOutcome:
    name = env.artifacts.latest("checkcif_", ".txt")
    report = parse_checkcif_report(env.artifacts.read(name))
    counts = report.counts
    if report.publication_clean:
        return _pass(f"zero level A/B alerts (C={counts['C']}, "
                     f"G={counts['G']})")
    serious = [a for a in report.alerts if a.level in ("A", "B")]
    return _fail(
        f"{counts['A']} level A and {counts['B']} level B alerts remain",
        [{"name": alert.code, "value": alert.message} for alert in serious],
        "resolve each level A/B alert (patch the named metadata or "
        "model issue) and rerun validation")


def _g12_density(state: WorkflowState, env: RunEnvironment) -> GateOutcome:
    formula = crystal.parse_formula(state.var("molecular_formula"))
    z = int(state.var("z"))
    volume = float(state.var("unit_cell_volume"))
    result = crystal.density(formula, z, volume)
    lo, hi = crystal.DENSITY_PLAUSIBLE
    if result.plausible:
        return _pass(f"density {result.grams_per_cm3:.3f} g/cm^3 within "
                     f"[{lo:g}, {hi:g}]")
    return _fail(
        f"implied density {result.grams_per_cm3:.4g} g/cm^3 falls "
        f"outside the plausible band [{lo:g}, {hi:g}]",
        [{"name": "unit_cell_volume", "value": volume},
         {"name": "z", "value": z},
         {"name": "molecular_formula", "value": formula.text()}],
        "check the volume, Z, and formula for unit or transcription "
        "errors")


def _g13_change_log(state: WorkflowState, env: RunEnvironment) -> GateOutcome:
    missing = [p["tag"] for p in state.patches if not p["rationale"].strip()]
    if missing:
        return _fail(
            "model edits without a recorded rationale: " + ", ".join(missing),
            [{"name": tag, "value": None} for tag in missing],
            "record a rationale for every model edit before completing")
    return _pass(f"{len(state.patches)} model edits, all with rationale")


_IMPLEMENTATIONS = {
    "G01": _g01_volume,
    "G02": _g02_resolution,
    "G03": _g03_config,
    "G04": _g04_symmetry,
    "G05": _g05_ub,
    "G06": _g06_paths,
    "G07": _g07_reduction,
    "G08": _g08_residuals,
    "G09": _g09_displacement,
    "G10": _g10_cif_tags,
    "G11": _g11_alerts,
    "G12": _g12_density,
    "G13": _g13_change_log,
}
