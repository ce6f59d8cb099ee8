"""HTTP facade over orchestrator runs.

One FastAPI app owns one workspace directory and any number of run
bundles inside it. Scripted runs execute to completion on creation;
steered runs consume the script's say/value lines but leave every
authorization decision to the API, which is how an interactive client
drives the same benchmark a script would.

Roles: requests are either operator (may post messages, values, and
decisions) or viewer (read only). With XTALFLOW_OPERATOR_TOKEN or
XTALFLOW_VIEWER_TOKEN set, the x-auth-token header picks the role;
with neither set the x-role header is trusted (default operator),
which keeps local development friction-free.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.responses import Response, StreamingResponse
from pydantic import BaseModel

from .canonical import sha256_hex
from .gates import catalog
from .orchestrator import AuthorizationError, Orchestrator, ScriptRunError, \
    packaged_script, run_id_for_script
from .policy import ScriptEntry, ScriptError, parse_script
from .provenance import MANIFEST_NAME, aggregate_report, audit, \
    finalize_run, read_manifest, replay_strict, timing_from_events
from .synthetic import COHORTS, MANUAL_BASELINE_MINUTES
from .tools import TOOLBOX
from .workspace import BUNDLE_DIR, PathViolation, stage_placeholder_inputs

_RUN_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_-]{0,63}$")

_CONTENT_TYPES = {
    ".png": "image/png",
    ".json": "application/json",
}


# -- request bodies ----------------------------------------------------------

class CreateRun(BaseModel):
    mode: str = "scripted"              # scripted | steered
    script: str | None = None           # defaults to the packaged benchmark
    run_id: str | None = None
    stage_inputs: bool = True


class PostMessage(BaseModel):
    text: str


class PostValue(BaseModel):
    name: str
    value: object = None


class Decision(BaseModel):
    decision: str                       # approved | rejected
    rationale: str = ""


# -- run registry ------------------------------------------------------------

@dataclass
class RunHandle:
    orch: Orchestrator
    mode: str
    entries: list[ScriptEntry] = field(default_factory=list)
    cursor: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)

    def drive_script(self) -> None:
        """Consume say/value entries until the run blocks or finishes.

        Steered handles never see approve/reject entries; the operator
        resolves those over the API and this picks up afterwards.
        """
        state = self.orch.state
        while self.cursor < len(self.entries):
            if state.completed or state.pending_authorization:
                return
            entry = self.entries[self.cursor]
            self.cursor += 1
            if entry.kind == "say":
                self.orch.post_user_message(entry.text)
            else:
                self.orch.post_value(entry.name, entry.value)

    def finalize_if_done(self) -> None:
        if self.orch.state.completed and not (
                self.orch.bundle_dir / MANIFEST_NAME).is_file():
            finalize_run(self.orch)


class RunRegistry:
    def __init__(self, workspace_root: Path):
        self.workspace_root = Path(workspace_root)
        self.handles: dict[str, RunHandle] = {}
        self.lock = threading.Lock()
        bundles = self.workspace_root / BUNDLE_DIR
        if bundles.is_dir():
            for entry in sorted(bundles.iterdir()):
                if (entry / "events.log").is_file():
                    orch = Orchestrator(self.workspace_root,
                                        run_id=entry.name)
                    self.handles[entry.name] = RunHandle(orch,
                                                         mode="resumed")

    def get(self, run_id: str) -> RunHandle:
        handle = self.handles.get(run_id)
        if handle is None:
            raise HTTPException(404, f"no run {run_id!r}")
        return handle


def run_summary(handle: RunHandle) -> dict:
    orch, state = handle.orch, handle.orch.state
    return {
        "run_id": orch.run_id,
        "mode": handle.mode,
        "stage": state.stage,
        "completed": state.completed,
        "halted": state.halted,
        "unresolved_gates": list(state.unresolved_gates),
        "pending_authorization": state.pending_authorization,
        "ask_expected": state.ask_expected,
        "intervention_count": state.intervention_count,
        "patch_count": state.patch_count,
        "event_count": len(orch.log.events),
        "tail_hash": orch.log.tail_hash,
        "artifact_count": len(orch.env.artifacts.names()),
        "script_consumed": handle.cursor,
        "script_entries": len(handle.entries),
    }


def event_payload(event) -> dict:
    return {"seq": event.seq, "ts": event.ts, "kind": event.kind,
            "payload": event.payload, "prev_hash": event.prev_hash,
            "hash": event.hash}


# -- app ---------------------------------------------------------------------

def create_app(workspace_root: Path) -> FastAPI:
    app = FastAPI(title="xtalflow", version="0.1.0")
    registry = RunRegistry(workspace_root)
    app.state.registry = registry

    operator_token = os.environ.get("XTALFLOW_OPERATOR_TOKEN", "")
    viewer_token = os.environ.get("XTALFLOW_VIEWER_TOKEN", "")

    def role_of(request: Request) -> str:
        if operator_token or viewer_token:
            token = request.headers.get("x-auth-token", "")
            if operator_token and token == operator_token:
                return "operator"
            if viewer_token and token == viewer_token:
                return "viewer"
            raise HTTPException(401, "missing or unknown token")
        role = request.headers.get("x-role", "operator")
        if role not in ("operator", "viewer"):
            raise HTTPException(400, f"unknown role {role!r}")
        return role

    def operator(role: str = Depends(role_of)) -> str:
        if role != "operator":
            raise HTTPException(403, "this action needs the operator role")
        return role

    @app.get("/health")
    def health():
        return {"status": "ok", "runs": len(registry.handles)}

    @app.get("/gates")
    def gates():
        return {"gates": [{
            "id": spec.id, "gate_class": spec.gate_class,
            "boundary": list(spec.boundary),
            "required_inputs": list(spec.required_inputs),
            "description": spec.description,
        } for spec in catalog()]}

    @app.get("/tools")
    def tools():
        return {"tools": [spec.to_listing() for spec in TOOLBOX.values()]}

    @app.get("/reports/aggregate")
    def aggregate(baseline: float = MANUAL_BASELINE_MINUTES):
        groups = {c.label: c.samples() for c in COHORTS}
        try:
            return aggregate_report(groups, baseline)
        except ValueError as exc:
            raise HTTPException(400, str(exc)) from None

    @app.get("/runs")
    def list_runs(role: str = Depends(role_of)):
        with registry.lock:
            return {"runs": [run_summary(h)
                             for h in registry.handles.values()]}

    @app.post("/runs", status_code=201)
    def create_run(body: CreateRun, role: str = Depends(operator)):
        if body.mode not in ("scripted", "steered"):
            raise HTTPException(400,
                                f"unknown mode {body.mode!r}")
        script = body.script if body.script is not None \
            else packaged_script()
        try:
            entries = parse_script(script)
        except ScriptError as exc:
            raise HTTPException(400, str(exc)) from None
        run_id = body.run_id or run_id_for_script(script)
        if not _RUN_ID.match(run_id):
            raise HTTPException(400, f"bad run id {run_id!r}")
        with registry.lock:
            if run_id in registry.handles:
                raise HTTPException(409, f"run {run_id!r} already exists")
            if body.stage_inputs:
                values = {e.name: e.value for e in entries
                          if e.kind == "value"}
                stage_placeholder_inputs(
                    registry.workspace_root, values.get("runs", []),
                    values.get("calibration_file"))
            orch = Orchestrator(registry.workspace_root, script,
                                run_id=run_id)
            if body.mode == "scripted":
                handle = RunHandle(orch, "scripted", entries,
                                   cursor=len(entries))
                try:
                    orch.run_scripted()
                except ScriptRunError as exc:
                    registry.handles[run_id] = handle
                    raise HTTPException(400, str(exc)) from None
                handle.finalize_if_done()
            else:
                steered = [e for e in entries
                           if e.kind in ("say", "value")]
                handle = RunHandle(orch, "steered", steered)
                handle.drive_script()
            registry.handles[run_id] = handle
            return run_summary(handle)

    @app.get("/runs/{run_id}")
    def get_run(run_id: str, role: str = Depends(role_of)):
        return run_summary(registry.get(run_id))

    @app.get("/runs/{run_id}/state")
    def get_state(run_id: str, role: str = Depends(role_of)):
        state = registry.get(run_id).orch.state
        return {
            "typed_vars": state.typed_vars,
            "gate_outcomes": state.gate_outcomes,
            "chat": state.chat,
            "tool_log": state.tool_log,
            "authorizations": state.authorizations,
            "patches": state.patches,
        }

    @app.get("/runs/{run_id}/events")
    def get_events(run_id: str, cursor: int = 0, limit: int = 1000,
                   role: str = Depends(role_of)):
        handle = registry.get(run_id)
        if cursor < 0 or limit < 1:
            raise HTTPException(400, "cursor and limit must be natural")
        with handle.lock:
            events = handle.orch.log.events
            window = events[cursor:cursor + limit]
            return {"events": [event_payload(e) for e in window],
                    "next_cursor": cursor + len(window),
                    "total": len(events),
                    "tail_hash": handle.orch.log.tail_hash}

    @app.get("/runs/{run_id}/stream")
    def stream_events(run_id: str, cursor: int = 0,
                      follow: bool = False, timeout_s: float = 30.0,
                      role: str = Depends(role_of)):
        handle = registry.get(run_id)

        def generate():
            position = max(cursor, 0)
            deadline = time.monotonic() + timeout_s
            while True:
                with handle.lock:
                    # Completion is read under the same lock as the
                    # slice, so done=True means the slice is the tail.
                    done = handle.orch.state.completed
                    events = handle.orch.log.events[position:]
                for e in events:
                    # seq is 0-based and equals the list index, so the
                    # next slice starts one past it.
                    position = e.seq + 1
                    yield (f"id: {e.seq}\nevent: provenance\n"
                           f"data: {json.dumps(event_payload(e))}\n\n")
                if (done and not events) or not follow \
                        or time.monotonic() > deadline:
                    yield "event: end\ndata: {}\n\n"
                    return
                if not events:
                    time.sleep(0.05)

        return StreamingResponse(generate(),
                                 media_type="text/event-stream")

    @app.post("/runs/{run_id}/messages")
    def post_message(run_id: str, body: PostMessage,
                     role: str = Depends(operator)):
        handle = registry.get(run_id)
        with handle.lock:
            if handle.orch.state.completed:
                raise HTTPException(409, "the run is complete")
            handle.orch.post_user_message(body.text)
            handle.drive_script()
            handle.finalize_if_done()
            return run_summary(handle)

    @app.post("/runs/{run_id}/values")
    def post_value(run_id: str, body: PostValue,
                   role: str = Depends(operator)):
        handle = registry.get(run_id)
        with handle.lock:
            if handle.orch.state.completed:
                raise HTTPException(409, "the run is complete")
            handle.orch.post_value(body.name, body.value)
            handle.drive_script()
            handle.finalize_if_done()
            return run_summary(handle)

    @app.get("/runs/{run_id}/authorizations")
    def list_authorizations(run_id: str,
                            role: str = Depends(role_of)):
        state = registry.get(run_id).orch.state
        return {"authorizations": [state.authorizations[k]
                                   for k in sorted(state.authorizations)],
                "pending": state.pending_authorization}

    @app.post("/runs/{run_id}/authorizations/{request_id}")
    def decide(run_id: str, request_id: str, body: Decision,
               role: str = Depends(operator)):
        if body.decision not in ("approved", "rejected"):
            raise HTTPException(400,
                                f"unknown decision {body.decision!r}")
        handle = registry.get(run_id)
        with handle.lock:
            entry = handle.orch.state.authorizations.get(request_id)
            if entry is None:
                raise HTTPException(404,
                                    f"no request {request_id!r}")
            if entry["status"] != "pending":
                if entry["status"] == body.decision:
                    # Idempotent repeat of the same decision.
                    return {"request_id": request_id,
                            "status": entry["status"],
                            "changed": False,
                            "run": run_summary(handle)}
                raise HTTPException(
                    409, f"request {request_id} is already "
                         f"{entry['status']}")
            try:
                handle.orch.resolve_authorization(
                    request_id, body.decision, resolved_by=f"api:{role}",
                    rationale=body.rationale)
            except AuthorizationError as exc:
                raise HTTPException(409, str(exc)) from None
            handle.drive_script()
            handle.finalize_if_done()
            return {"request_id": request_id, "status": body.decision,
                    "changed": True, "run": run_summary(handle)}

    @app.get("/runs/{run_id}/artifacts")
    def list_artifacts(run_id: str, role: str = Depends(role_of)):
        store = registry.get(run_id).orch.env.artifacts
        return {"artifacts": [{
            "name": name,
            "size": len(store.read(name)),
            "sha256": sha256_hex(store.read(name)),
        } for name in store.names()]}

    @app.get("/runs/{run_id}/artifacts/{name}")
    def get_artifact(run_id: str, name: str,
                     role: str = Depends(role_of)):
        store = registry.get(run_id).orch.env.artifacts
        try:
            data = store.read(name)
        except PathViolation as exc:
            raise HTTPException(404, str(exc)) from None
        if data is None:
            raise HTTPException(404, f"no artifact {name!r}")
        media = _CONTENT_TYPES.get(Path(name).suffix,
                                   "text/plain; charset=utf-8")
        return Response(content=data, media_type=media)

    @app.get("/runs/{run_id}/timing")
    def get_timing(run_id: str, role: str = Depends(role_of)):
        handle = registry.get(run_id)
        return timing_from_events(handle.orch.log.events).to_payload()

    @app.get("/runs/{run_id}/audit")
    def get_audit(run_id: str, role: str = Depends(role_of)):
        handle = registry.get(run_id)
        with handle.lock:
            return audit(handle.orch.bundle_dir).to_payload()

    @app.get("/runs/{run_id}/replay")
    def get_replay(run_id: str, role: str = Depends(role_of)):
        handle = registry.get(run_id)
        with handle.lock:
            return replay_strict(handle.orch.bundle_dir).to_payload()

    @app.get("/runs/{run_id}/manifest")
    def get_manifest(run_id: str, role: str = Depends(role_of)):
        handle = registry.get(run_id)
        try:
            return read_manifest(handle.orch.bundle_dir)
        except ValueError as exc:
            raise HTTPException(404, str(exc)) from None

    return app
