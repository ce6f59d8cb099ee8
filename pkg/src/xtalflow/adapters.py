"""Deterministic stand-ins for the facility tools.

Each adapter fabricates plausible outputs from its inputs alone, so the
same call against the same workspace produces byte-identical artifacts
on any machine. Failure scenarios are selected explicitly through the
call's `scenario` argument and mimic the known failure modes of the
real programs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from . import crystal
from .formats import (CifParseError, missing_required_tags, parse_cif,
                      parse_config, parse_hklf2, write_checkcif_report,
                      write_hklf2, write_shelxl_output, write_ub)
from .formats.checkcif import CheckCifAlert
from .tools import TOOLBOX
from .workspace import DATA_DIR, RunEnvironment

_RUN_FILE = re.compile(r"^run_(\d+)\.dat$")

# 1x1 transparent PNG; the render is a placeholder, the provenance is real.
_PNG_1X1 = (
    b"\x89PNG\r\n\x1a\n\x00\x00\x00\rIHDR\x00\x00\x00\x01\x00\x00\x00\x01"
    b"\x08\x06\x00\x00\x00\x1f\x15\xc4\x89\x00\x00\x00\rIDATx\x9cc\x00\x01"
    b"\x00\x00\x05\x00\x01\r\n-\xb3\x00\x00\x00\x00IEND\xaeB`\x82"
)

_REFINE_STATS = {
    "first_model": dict(r1="0.1846", wr2="0.4594", goof="2.195",
                        cycles=20, uiso_max="0.0790", uiso_min="0.0101"),
    "hydrogen_completed": dict(r1="0.0554", wr2="0.1297", goof="1.062",
                               cycles=14, uiso_max="0.0412",
                               uiso_min="0.0089"),
    "unstable": dict(r1="0.8421", wr2="0.9932", goof="9.871",
                     cycles=50, uiso_max="4.1200", uiso_min="-0.3100"),
}

# checkcif alert fabricated for each missing required tag.
_ALERT_FOR_MISSING = {
    "_exptl_crystal_description": (
        "EXPT005_ALERT_1_A",
        "_exptl_crystal_description is missing. Crystal habit description "
        "required for publication.", "CRYSR_01"),
    "_diffrn_radiation_probe": (
        "DIFF003_ALERT_1_A",
        "_diffrn_radiation_probe is missing.", None),
    "_chemical_formula_sum": (
        "FORMU010_ALERT_1_A",
        "_chemical_formula_sum is missing.", None),
    "_cell_length_a": ("CELLZ001_ALERT_1_A",
                       "Cell length tags are incomplete.", None),
    "_cell_length_b": ("CELLZ001_ALERT_1_A",
                       "Cell length tags are incomplete.", None),
    "_cell_length_c": ("CELLZ001_ALERT_1_A",
                       "Cell length tags are incomplete.", None),
    "_cell_angle_alpha": ("CELLZ001_ALERT_1_A",
                          "Cell angle tags are incomplete.", None),
    "_cell_angle_beta": ("CELLZ001_ALERT_1_A",
                         "Cell angle tags are incomplete.", None),
    "_cell_angle_gamma": ("CELLZ001_ALERT_1_A",
                          "Cell angle tags are incomplete.", None),
    "_cell_volume": ("CELLV001_ALERT_1_A", "_cell_volume is missing.", None),
    "_cell_formula_units_Z": ("CELLZ002_ALERT_1_A",
                              "_cell_formula_units_Z is missing.", None),
    "_space_group_name_H-M_alt": ("SYMMG020_ALERT_1_A",
                                  "Space group symbol is missing.", None),
}


@dataclass
class ToolResult:
    status: str                       # "ok" | "failed"
    scripted_minutes: float
    log_text: str
    artifacts: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_payload(self) -> dict:
        return {
            "status": self.status,
            "scripted_minutes": self.scripted_minutes,
            "log_text": self.log_text,
            "artifacts": self.artifacts,
            "warnings": self.warnings,
        }


class AdapterError(RuntimeError):
    """Adapter misuse that validation should have caught."""


def run_tool(tool: str, arguments: dict, env: RunEnvironment) -> ToolResult:
    try:
        impl = _ADAPTERS[tool]
    except KeyError:
        raise AdapterError(f"no adapter for tool {tool!r}") from None
    return impl(arguments, env)


def _minutes(tool: str) -> float:
    return TOOLBOX[tool].scripted_minutes


def _fail(tool: str, lines: list[str], artifacts=None) -> ToolResult:
    return ToolResult(status="failed", scripted_minutes=_minutes(tool),
                      log_text="\n".join(lines) + "\n",
                      artifacts=sorted(artifacts or []))


def _ok(tool: str, lines: list[str], artifacts=None, warnings=None
        ) -> ToolResult:
    return ToolResult(status="ok", scripted_minutes=_minutes(tool),
                      log_text="\n".join(lines) + "\n",
                      artifacts=sorted(artifacts or []),
                      warnings=list(warnings or []))


def _list_runs(arguments: dict, env: RunEnvironment) -> ToolResult:
    data_dir = env.workspace_root / DATA_DIR
    rows = []
    if data_dir.is_dir():
        for path in sorted(data_dir.iterdir()):
            m = _RUN_FILE.match(path.name)
            if m:
                rows.append((int(m.group(1)), path.stat().st_size))
    lines = [f"{len(rows)} staged runs"]
    lines += [f"run {n}: {size} bytes" for n, size in rows]
    return _ok("list_runs", lines)


def _load_config(env: RunEnvironment):
    data = env.artifacts.read("reduction.config")
    if data is None:
        return None
    return parse_config(data)


def _synthesize_reflections(run_number: int, lam_lo: float, lam_hi: float
                            ) -> list[crystal.Reflection]:
    rng = np.random.default_rng(run_number)
    reflections = []
    while len(reflections) < 48:
        h, k, l = (int(v) for v in rng.integers(-9, 10, size=3))
        if h == k == l == 0:
            continue
        f2 = float(rng.gamma(2.0, 60.0))
        sigma = 0.05 * f2 + 0.5
        lam = float(rng.uniform(lam_lo, lam_hi))
        reflections.append(crystal.Reflection(
            h=h, k=k, l=l, f_squared=round(f2, 2),
            sigma_f_squared=round(sigma, 2), batch=1,
            wavelength=round(lam, 4)))
    return reflections


def _reduce(arguments: dict, env: RunEnvironment) -> ToolResult:
    cfg = _load_config(env)
    if cfg is None:
        return _fail("reduce", ["ERROR: reduction.config not found"])
    params = cfg.cell_parameters()
    if params is None:
        return _fail("reduce",
                     ["ERROR: no cell parameters in configuration"])
    cell = crystal.UnitCell(*params)
    runs = [int(n) for n in arguments["runs"]]
    scenario = arguments.get("scenario", "ok")
    lam_lo = float(cfg.values.get("wavelength_min", 0.4))
    lam_hi = float(cfg.values.get("wavelength_max", 3.5))

    reused_ub = None
    ub_source = arguments.get("ub_file")
    if ub_source:
        raw = env.artifacts.read(ub_source) if "/" not in ub_source else None
        if raw is None:
            path = env.resolve_read_path(ub_source)
            raw = path.read_bytes() if path is not None else None
        if raw is None:
            return _fail("reduce",
                         [f"ERROR: ub_file {ub_source!r} not found"])
        from .formats import read_ub
        reused_ub, _ = read_ub(raw)

    lines = ["reduction engine (deterministic mock)",
             f"calibration: {cfg.values.get('calibration_file', '-')}"]
    if ub_source:
        lines.append(f"reusing orientation matrix from {ub_source}")
    artifacts: list[str] = []
    warnings: list[str] = []
    failed = False

    for idx, n in enumerate(runs):
        last = idx == len(runs) - 1
        if not env.run_file_exists(n):
            lines.append(f"ERROR: run file for {n} is not staged")
            failed = True
            continue
        if scenario == "partial" and last:
            msg = f"run {n} skipped: beam off for remainder of cycle"
            lines.append(f"WARNING: {msg}")
            warnings.append(msg)
            continue
        if scenario == "findub_fail" and last and reused_ub is None:
            lines.append(
                f"ERROR: FindUBwithFFT found no satisfactory UB for run "
                f"{n}; peaks not indexed")
            failed = True
            continue
        if reused_ub is not None:
            ub = reused_ub
        else:
            rng = np.random.default_rng(n)
            ub = crystal.random_rotation(rng) @ crystal.b_matrix(cell)
        reflections = _synthesize_reflections(n, lam_lo, lam_hi)
        hkl_name = f"run_{n}.hkl"
        ub_name = f"run_{n}.ub"
        env.artifacts.write(hkl_name, write_hklf2(reflections))
        env.artifacts.write(
            ub_name, write_ub(ub, crystal.cell_from_ub(ub),
                              crystal.cell_volume(cell)))
        artifacts += [hkl_name, ub_name]
        lines.append(f"run {n}: indexed 48 peaks, integrated "
                     f"{len(reflections)} reflections")

    # The persisted log is itself a gate input, so both outcomes write it.
    env.artifacts.write(
        "reduce.log", ("\n".join(lines) + "\n").encode("utf-8"))
    artifacts.append("reduce.log")
    if failed:
        return _fail("reduce", lines, artifacts)
    return _ok("reduce", lines, artifacts, warnings)


def _integrate(arguments: dict, env: RunEnvironment) -> ToolResult:
    runs = [int(n) for n in arguments["runs"]]
    merged: list[crystal.Reflection] = []
    lines = ["merge engine (deterministic mock)"]
    for batch, n in enumerate(runs, start=1):
        data = env.artifacts.read(f"run_{n}.hkl")
        if data is None:
            lines.append(f"ERROR: run_{n}.hkl is missing; reduce first")
            return _fail("integrate", lines)
        reflections = parse_hklf2(data)
        merged += [crystal.Reflection(
            h=r.h, k=r.k, l=r.l, f_squared=r.f_squared,
            sigma_f_squared=r.sigma_f_squared, batch=batch,
            wavelength=r.wavelength) for r in reflections]
        lines.append(f"run {n}: {len(reflections)} reflections as "
                     f"batch {batch}")
    env.artifacts.write("merged.hkl", write_hklf2(merged))
    lines.append(f"wrote {len(merged)} merged reflections")
    return _ok("integrate", lines, ["merged.hkl"])


def _quote_cif(value: str) -> str:
    if value and not any(ch.isspace() for ch in value):
        return value
    return f"'{value}'"


def _model_cif_text(cfg, serial: int) -> str:
    cell = crystal.UnitCell(*cfg.cell_parameters())
    lines = [
        f"data_model_{serial}",
        f"_cell_length_a {cell.a:.3f}",
        f"_cell_length_b {cell.b:.3f}",
        f"_cell_length_c {cell.c:.3f}",
        f"_cell_angle_alpha {cell.alpha:.2f}",
        f"_cell_angle_beta {cell.beta:.2f}",
        f"_cell_angle_gamma {cell.gamma:.2f}",
        f"_cell_volume {float(cfg.values['unit_cell_volume']):.1f}",
        f"_cell_formula_units_Z {int(cfg.values['z'])}",
        "_chemical_formula_sum "
        + _quote_cif(str(cfg.values["molecular_formula"])),
        "_space_group_name_H-M_alt "
        + _quote_cif(str(cfg.values["space_group"])),
        "_diffrn_radiation_probe neutron",
        "loop_",
        "_atom_site_label",
        "_atom_site_fract_x",
        "_atom_site_fract_y",
        "_atom_site_fract_z",
        "Ca1 0.25000 0.12500 0.00000",
        "Al1 0.08300 0.33100 0.21400",
        "Si1 0.41700 0.27600 0.63800",
        "O1 0.19800 0.44900 0.35200",
        "H1 0.31200 0.06700 0.88100",
    ]
    # The crystal habit tag is the one the real pipeline forgets too;
    # validation is expected to catch it downstream.
    return "\n".join(lines) + "\n"


def _refine(arguments: dict, env: RunEnvironment) -> ToolResult:
    cfg = _load_config(env)
    if cfg is None:
        return _fail("refine", ["ERROR: reduction.config not found"])
    if not env.artifacts.exists("merged.hkl"):
        return _fail("refine",
                     ["ERROR: merged.hkl not found; integrate first"])
    scenario = arguments.get("scenario", "first_model")
    stats = _REFINE_STATS[scenario]
    k = env.artifacts.next_index("refine_", ".out")

    model_source = arguments.get("model_cif")
    lines = ["refinement engine (deterministic mock)",
             f"reflections: merged.hkl, starting model: "
             f"{model_source or 'ab initio'}"]

    if scenario == "unstable":
        out = write_shelxl_output(
            signatures=("** REFINEMENT UNSTABLE **",
                        "** NON POSITIVE DEFINITE **"),
            header_lines=(f"least-squares cycle report {k}",), **stats)
        env.artifacts.write(f"refine_{k}.out", out)
        lines.append("ERROR: refinement diverged; no model written")
        return _fail("refine", lines, [f"refine_{k}.out"])

    out = write_shelxl_output(
        header_lines=(f"least-squares cycle report {k}",), **stats)
    env.artifacts.write(f"refine_{k}.out", out)
    env.artifacts.write(f"model_{k}.cif",
                        _model_cif_text(cfg, k).encode("utf-8"))
    lines.append(f"converged after {stats['cycles']} cycles: "
                 f"R1 {stats['r1']}, wR2 {stats['wr2']}, "
                 f"GOOF {stats['goof']}")
    return _ok("refine", lines, [f"refine_{k}.out", f"model_{k}.cif"])


def _checkcif(arguments: dict, env: RunEnvironment) -> ToolResult:
    target = arguments.get("model_cif") or env.artifacts.latest(
        "model_", ".cif")
    if target is None or not env.artifacts.exists(target):
        return _fail("checkcif", ["ERROR: no model file to validate"])
    alerts: list[CheckCifAlert] = []
    try:
        doc = parse_cif(env.artifacts.read(target))
    except CifParseError as exc:
        alerts.append(CheckCifAlert(
            "CIF001_ALERT_1_A", "A", f"model file does not parse: {exc}"))
        missing = []
    else:
        missing = missing_required_tags(doc)
    seen = set()
    for tag in missing:
        code, message, suppressed = _ALERT_FOR_MISSING[tag]
        if code in seen:
            continue
        seen.add(code)
        alerts.append(CheckCifAlert(code, code[-1], message,
                                    suppressed_test=suppressed))
    alerts.append(CheckCifAlert(
        "PLAT999_ALERT_2_G", "G",
        "Report produced by the deterministic mock validation engine."))
    k = env.artifacts.next_index("checkcif_", ".txt")
    name = f"checkcif_{k}.txt"
    env.artifacts.write(name, write_checkcif_report(alerts, subject=target))
    serious = sum(1 for a in alerts if a.level in ("A", "B"))
    lines = [f"validated {target}: {serious} serious alerts, "
             f"{len(alerts)} total"]
    return _ok("checkcif", lines, [name])


def _visualize(arguments: dict, env: RunEnvironment) -> ToolResult:
    target = arguments.get("model_cif") or env.artifacts.latest(
        "model_", ".cif")
    if target is None or not env.artifacts.exists(target):
        return _fail("visualize", ["ERROR: no model file to render"])
    env.artifacts.write("structure.png", _PNG_1X1)
    return _ok("visualize", [f"rendered {target} to structure.png"],
               ["structure.png"])


_ADAPTERS = {
    "list_runs": _list_runs,
    "reduce": _reduce,
    "integrate": _integrate,
    "refine": _refine,
    "checkcif": _checkcif,
    "visualize": _visualize,
}
