"""Allowlisted tool registry and call validation.

Only tools registered here can run, and every call is checked against
the tool's parameter schema before anything executes. Rejections are
machine readable and name argument names, never argument values, so
they can be logged without leaking payload content.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .workspace import RunEnvironment

TOOL_CATALOG_VERSION = "1"

REJECT_UNKNOWN_TOOL = "unknown_tool"
REJECT_UNKNOWN_ARGUMENT = "unknown_argument"
REJECT_MISSING_ARGUMENT = "missing_argument"
REJECT_WRONG_TYPE = "wrong_type"
REJECT_BAD_CHOICE = "bad_choice"
REJECT_PATH_ESCAPE = "path_escape"


@dataclass(frozen=True)
class ParamSpec:
    kind: str                       # int_list | number | text | path | choice
    required: bool = False
    choices: tuple[str, ...] = ()


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    side_effects: str               # "none" | "writes_workspace"
    scripted_minutes: float
    parameters: dict[str, ParamSpec] = field(default_factory=dict)

    @property
    def requires_authorization(self) -> bool:
        return self.side_effects != "none"

    def to_listing(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "side_effects": self.side_effects,
            "requires_authorization": self.requires_authorization,
            "scripted_minutes": self.scripted_minutes,
            "parameters": {
                name: {"kind": p.kind, "required": p.required,
                       **({"choices": list(p.choices)} if p.choices else {})}
                for name, p in sorted(self.parameters.items())
            },
        }


@dataclass(frozen=True)
class CallRejection:
    """Why a call was refused. `detail` mentions argument names only."""
    category: str
    detail: str

    def to_payload(self) -> dict:
        return {"category": self.category, "detail": self.detail}


TOOLBOX: dict[str, ToolSpec] = {
    spec.name: spec for spec in (
        ToolSpec(
            "list_runs",
            "List the staged measurement runs in the workspace.",
            side_effects="none", scripted_minutes=0.0),
        ToolSpec(
            "reduce",
            "Index and integrate the raw runs into per-run reflection "
            "lists and orientation matrices.",
            side_effects="writes_workspace", scripted_minutes=12.0,
            parameters={
                "runs": ParamSpec("int_list", required=True),
                "scenario": ParamSpec(
                    "choice", choices=("ok", "findub_fail", "partial")),
                "ub_file": ParamSpec("path"),
            }),
        ToolSpec(
            "integrate",
            "Merge per-run reflection lists into one scaled file.",
            side_effects="writes_workspace", scripted_minutes=6.0,
            parameters={
                "runs": ParamSpec("int_list", required=True),
            }),
        ToolSpec(
            "refine",
            "Refine the structural model against the merged reflections.",
            side_effects="writes_workspace", scripted_minutes=4.0,
            parameters={
                "model_cif": ParamSpec("artifact"),
                "scenario": ParamSpec(
                    "choice",
                    choices=("first_model", "hydrogen_completed",
                             "unstable")),
            }),
        ToolSpec(
            "checkcif",
            "Run publication validation checks over a model file.",
            side_effects="writes_workspace", scripted_minutes=2.0,
            parameters={
                "model_cif": ParamSpec("artifact"),
            }),
        ToolSpec(
            "visualize",
            "Render a picture of the refined structure.",
            side_effects="writes_workspace", scripted_minutes=1.0,
            parameters={
                "model_cif": ParamSpec("artifact"),
            }),
    )
}


def tool_listing() -> list[dict]:
    return [TOOLBOX[name].to_listing() for name in sorted(TOOLBOX)]


def _kind_ok(kind: str, value) -> bool:
    if kind == "int_list":
        return (isinstance(value, list) and value
                and all(isinstance(v, int) and not isinstance(v, bool)
                        for v in value))
    if kind == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind in ("text", "path", "artifact", "choice"):
        return isinstance(value, str) and bool(value)
    return False


def validate_call(tool: str, arguments: dict,
                  env: RunEnvironment) -> CallRejection | None:
    """None when the call may proceed, otherwise the first rejection."""
    spec = TOOLBOX.get(tool)
    if spec is None:
        return CallRejection(REJECT_UNKNOWN_TOOL,
                             f"tool {tool!r} is not in the allowlist")
    if not isinstance(arguments, dict):
        return CallRejection(REJECT_WRONG_TYPE,
                             "arguments must be an object")
    for name in sorted(arguments):
        if name not in spec.parameters:
            return CallRejection(
                REJECT_UNKNOWN_ARGUMENT,
                f"tool {tool!r} does not accept argument {name!r}")
    for name, param in sorted(spec.parameters.items()):
        if param.required and name not in arguments:
            return CallRejection(
                REJECT_MISSING_ARGUMENT,
                f"tool {tool!r} requires argument {name!r}")
    for name, param in sorted(spec.parameters.items()):
        if name not in arguments:
            continue
        value = arguments[name]
        if not _kind_ok(param.kind, value):
            return CallRejection(
                REJECT_WRONG_TYPE,
                f"argument {name!r} of tool {tool!r} has the wrong type "
                f"(expected {param.kind})")
        if param.kind == "choice" and value not in param.choices:
            return CallRejection(
                REJECT_BAD_CHOICE,
                f"argument {name!r} of tool {tool!r} must be one of "
                + ", ".join(param.choices))
        if param.kind == "path" and not env.path_allowed(value):
            return CallRejection(
                REJECT_PATH_ESCAPE,
                f"argument {name!r} of tool {tool!r} resolves outside "
                f"the allowed roots")
        if param.kind == "artifact" and ("/" in value or "\\" in value
                                         or ".." in value):
            return CallRejection(
                REJECT_PATH_ESCAPE,
                f"argument {name!r} of tool {tool!r} must be a bare "
                f"artifact name")
    return None
