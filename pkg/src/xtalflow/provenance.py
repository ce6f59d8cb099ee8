"""Bundle manifests, after-the-fact audit, strict replay, and timing.

A finished run leaves a bundle: the event log, the artifact store, and
a manifest binding both to one content hash. Everything here works from
those files alone, so a bundle can be audited and replayed on a machine
that never ran the workflow.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from pathlib import Path

from .canonical import canonical_bytes, find_credentials, parse_canonical, \
    sha256_hex
from .events import ProvenanceEvent, read_event_log, verify_chain
from .gates import GATE_CATALOG_VERSION
from .model import FoldError, WorkflowState, apply_event, fold, state_hash
from .tools import TOOLBOX, TOOL_CATALOG_VERSION
from .workspace import ArtifactStore

MANIFEST_NAME = "manifest.json"
HASH_ALGORITHM = "sha256"


class BundleError(ValueError):
    """The bundle on disk is not usable as a record."""


# -- manifest ----------------------------------------------------------------

def build_manifest(events: list[ProvenanceEvent], store: ArtifactStore,
                   run_id: str, script_text: str,
                   release_version: str) -> dict:
    if not events:
        raise BundleError("cannot build a manifest for an empty run")
    final = fold(events)
    return {
        "run_id": run_id,
        "hash_algorithm": HASH_ALGORITHM,
        "created_at": events[0].ts,
        "finished_at": events[-1].ts,
        "event_count": len(events),
        "tail_hash": events[-1].hash,
        "final_state_hash": state_hash(final),
        "script_sha256": sha256_hex(script_text.encode("utf-8")),
        "release_version": release_version,
        "tool_catalog_version": TOOL_CATALOG_VERSION,
        "gate_catalog_version": GATE_CATALOG_VERSION,
        "artifacts": {name: sha256_hex(store.read(name))
                      for name in store.names()},
    }


def write_manifest(bundle_dir: Path, manifest: dict) -> Path:
    path = Path(bundle_dir) / MANIFEST_NAME
    path.write_bytes(canonical_bytes(manifest))
    return path


def read_manifest(bundle_dir: Path) -> dict:
    path = Path(bundle_dir) / MANIFEST_NAME
    if not path.is_file():
        raise BundleError(f"no {MANIFEST_NAME} in {bundle_dir}")
    return parse_canonical(path.read_bytes())


def finalize_run(orch) -> dict:
    """Build and write the manifest for an orchestrator's bundle."""
    manifest = build_manifest(orch.log.events, orch.env.artifacts,
                              orch.run_id, orch.script_text,
                              orch.release.version)
    write_manifest(orch.bundle_dir, manifest)
    return manifest


# -- audit -------------------------------------------------------------------

@dataclass(frozen=True)
class Finding:
    check: str
    detail: str
    seq: int | None = None

    def to_payload(self) -> dict:
        return {"check": self.check, "detail": self.detail,
                "seq": self.seq}


@dataclass
class AuditReport:
    bundle: str
    checks_run: list[str] = field(default_factory=list)
    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def to_payload(self) -> dict:
        return {"bundle": self.bundle, "ok": self.ok,
                "checks_run": self.checks_run,
                "findings": [f.to_payload() for f in self.findings]}


def _audit_pairing(events, report) -> None:
    report.checks_run.append("call_result_pairing")
    call_seq: dict[str, int] = {}
    answered: set[str] = set()
    for e in events:
        if e.kind == "tool_call":
            cid = e.payload["call_id"]
            if cid in call_seq:
                report.findings.append(Finding(
                    "call_result_pairing", f"duplicate call id {cid}",
                    e.seq))
            call_seq[cid] = e.seq
        elif e.kind == "tool_result":
            cid = e.payload["call_id"]
            if cid not in call_seq:
                report.findings.append(Finding(
                    "call_result_pairing",
                    f"result for unknown call {cid}", e.seq))
            elif cid in answered:
                report.findings.append(Finding(
                    "call_result_pairing",
                    f"second result for call {cid}", e.seq))
            answered.add(cid)
    for cid, seq in call_seq.items():
        if cid not in answered:
            report.findings.append(Finding(
                "call_result_pairing", f"call {cid} has no result", seq))


def _audit_authorization(events, report) -> None:
    report.checks_run.append("authorization_discipline")
    requested: dict[str, int] = {}
    resolution: dict[str, tuple[str, int]] = {}
    for e in events:
        if e.kind == "authorization_requested":
            requested[e.payload["request_id"]] = e.seq
        elif e.kind == "authorization_resolved":
            rid = e.payload["request_id"]
            if rid not in requested:
                report.findings.append(Finding(
                    "authorization_discipline",
                    f"resolution for unknown request {rid}", e.seq))
            if rid in resolution:
                report.findings.append(Finding(
                    "authorization_discipline",
                    f"request {rid} resolved twice", e.seq))
            resolution[rid] = (e.payload["decision"], e.seq)

    def require_approval(label: str, auth_id, seq: int) -> None:
        if not auth_id:
            report.findings.append(Finding(
                "authorization_discipline",
                f"{label} carries no authorization", seq))
            return
        entry = resolution.get(auth_id)
        if entry is None:
            report.findings.append(Finding(
                "authorization_discipline",
                f"{label} cites unresolved request {auth_id}", seq))
        elif entry[0] != "approved":
            report.findings.append(Finding(
                "authorization_discipline",
                f"{label} cites a rejected request {auth_id}", seq))
        elif entry[1] > seq:
            report.findings.append(Finding(
                "authorization_discipline",
                f"{label} precedes its approval {auth_id}", seq))

    for e in events:
        if e.kind == "tool_call":
            tool = e.payload["tool"]
            spec = TOOLBOX.get(tool)
            if spec is None:
                report.findings.append(Finding(
                    "authorization_discipline",
                    f"call to unlisted tool {tool!r}", e.seq))
            elif spec.requires_authorization:
                require_approval(f"side-effecting call to {tool}",
                                 e.payload.get("authorization_id"), e.seq)
        elif e.kind == "intervention":
            require_approval(
                f"intervention on {e.payload.get('gate_id', '?')}",
                e.payload.get("authorization_id"), e.seq)
        elif e.kind == "cif_patch":
            require_approval("model patch",
                             e.payload.get("authorization_id"), e.seq)


def _audit_gate_clearing(events, report) -> None:
    report.checks_run.append("gate_clearing")
    pending_fail: dict[str, int] = {}
    interventions: dict[str, list[int]] = {}
    for e in events:
        if e.kind == "intervention":
            interventions.setdefault(
                e.payload.get("gate_id", "?"), []).append(e.seq)
        elif e.kind == "gate_check":
            gate = e.payload["gate_id"]
            if e.payload["verdict"] == "fail":
                pending_fail.setdefault(gate, e.seq)
            elif gate in pending_fail:
                start = pending_fail.pop(gate)
                if not any(start < s < e.seq
                           for s in interventions.get(gate, [])):
                    report.findings.append(Finding(
                        "gate_clearing",
                        f"{gate} failed at seq {start} and passed at seq "
                        f"{e.seq} with no intervention between", e.seq))


def _audit_patch_rationales(events, report) -> None:
    report.checks_run.append("patch_rationale")
    for e in events:
        if e.kind == "cif_patch" and not str(
                e.payload.get("rationale", "")).strip():
            report.findings.append(Finding(
                "patch_rationale",
                f"patch of {e.payload.get('tag')} has no rationale",
                e.seq))


def _audit_credentials(events, report) -> None:
    report.checks_run.append("credential_scan")
    for e in events:
        hits = find_credentials(
            canonical_bytes(e.payload).decode("utf-8"))
        for hit in hits:
            report.findings.append(Finding(
                "credential_scan",
                f"credential-like content {hit[:32]!r}", e.seq))


def _audit_manifest(bundle_dir, events, store, report) -> None:
    report.checks_run.append("manifest")
    try:
        manifest = read_manifest(bundle_dir)
    except (BundleError, ValueError) as exc:
        report.findings.append(Finding("manifest", str(exc)))
        return
    if manifest.get("event_count") != len(events):
        report.findings.append(Finding(
            "manifest",
            f"manifest says {manifest.get('event_count')} events, log "
            f"holds {len(events)}"))
    if events and manifest.get("tail_hash") != events[-1].hash:
        report.findings.append(Finding(
            "manifest", "tail hash does not match the log"))
    try:
        final = fold(events)
    except FoldError as exc:
        report.findings.append(Finding("manifest",
                                       f"history does not fold: {exc}"))
        return
    if manifest.get("final_state_hash") != state_hash(final):
        report.findings.append(Finding(
            "manifest", "final state hash does not match the folded log"))
    recorded = manifest.get("artifacts", {})
    on_disk = {name: sha256_hex(store.read(name))
               for name in store.names()}
    for name in sorted(set(recorded) - set(on_disk)):
        report.findings.append(Finding(
            "manifest", f"artifact {name} listed but missing on disk"))
    for name in sorted(set(on_disk) - set(recorded)):
        report.findings.append(Finding(
            "manifest", f"artifact {name} on disk but not listed"))
    for name in sorted(set(recorded) & set(on_disk)):
        if recorded[name] != on_disk[name]:
            report.findings.append(Finding(
                "manifest", f"artifact {name} content hash mismatch"))


def audit(bundle_dir: Path) -> AuditReport:
    """Re-derive every governance property from the stored record."""
    bundle_dir = Path(bundle_dir)
    report = AuditReport(bundle=str(bundle_dir))
    log_path = bundle_dir / "events.log"
    if not log_path.is_file():
        report.checks_run.append("hash_chain")
        report.findings.append(Finding("hash_chain",
                                       "events.log is missing"))
        return report
    events = read_event_log(log_path)
    report.checks_run.append("hash_chain")
    for violation in verify_chain(events):
        report.findings.append(Finding("hash_chain", violation))
    _audit_pairing(events, report)
    _audit_authorization(events, report)
    _audit_gate_clearing(events, report)
    _audit_patch_rationales(events, report)
    _audit_credentials(events, report)
    _audit_manifest(bundle_dir, events,
                    ArtifactStore(bundle_dir / "artifacts"), report)
    return report


# -- strict replay -----------------------------------------------------------

@dataclass
class ReplayReport:
    bundle: str
    events_checked: int = 0
    checkpoints: int = 0
    divergence: dict | None = None

    @property
    def ok(self) -> bool:
        return self.divergence is None

    def to_payload(self) -> dict:
        return {"bundle": self.bundle, "ok": self.ok,
                "events_checked": self.events_checked,
                "checkpoints": self.checkpoints,
                "divergence": self.divergence}


def replay_strict(bundle_dir: Path) -> ReplayReport:
    """Re-fold the recorded history and stop at the first divergence.

    Checkpoints are the state hashes the run recorded about itself:
    one per stage transition, one at completion, and the final hash in
    the manifest. Each is recomputed from scratch here.
    """
    bundle_dir = Path(bundle_dir)
    report = ReplayReport(bundle=str(bundle_dir))
    events = read_event_log(bundle_dir / "events.log")
    violations = verify_chain(events)
    if violations:
        report.divergence = {"seq": None, "field": "hash_chain",
                             "detail": violations[0]}
        return report
    state = WorkflowState()
    for event in events:
        # Recorded hashes describe the state before their own event.
        if event.kind in ("stage_transition", "run_completed"):
            recomputed = state_hash(state)
            recorded = event.payload.get("state_hash")
            report.checkpoints += 1
            if recorded != recomputed:
                report.divergence = {
                    "seq": event.seq, "field": "state_hash",
                    "kind": event.kind, "recorded": recorded,
                    "recomputed": recomputed}
                return report
        try:
            apply_event(state, event)
        except FoldError as exc:
            report.divergence = {"seq": event.seq, "field": "fold",
                                 "detail": str(exc)}
            return report
        report.events_checked += 1
    try:
        manifest = read_manifest(bundle_dir)
    except BundleError:
        manifest = None
    if manifest is not None:
        report.checkpoints += 1
        final = state_hash(state)
        if manifest.get("final_state_hash") != final:
            report.divergence = {
                "seq": len(events) - 1, "field": "final_state_hash",
                "recorded": manifest.get("final_state_hash"),
                "recomputed": final}
    return report


# -- timing ------------------------------------------------------------------

@dataclass
class TimingBreakdown:
    wall_minutes: float
    machine_minutes: float
    user_minutes: float
    tool_minutes: dict[str, float]
    tool_calls: int

    def to_payload(self) -> dict:
        return {"wall_minutes": self.wall_minutes,
                "machine_minutes": self.machine_minutes,
                "user_minutes": self.user_minutes,
                "tool_minutes": self.tool_minutes,
                "tool_calls": self.tool_calls}


def timing_from_events(events: list[ProvenanceEvent]) -> TimingBreakdown:
    """Wall time split into machine (tool) time and everything else.

    The scripted policy itself answers instantly, so the remainder is
    time spent waiting on the human side of the loop.
    """
    wall = 0.0
    if len(events) > 1:
        wall = (events[-1].ts - events[0].ts) / 60.0
    call_tool = {e.payload["call_id"]: e.payload["tool"]
                 for e in events if e.kind == "tool_call"}
    per_tool: dict[str, float] = {}
    calls = 0
    for e in events:
        if e.kind != "tool_result":
            continue
        calls += 1
        tool = call_tool.get(e.payload["call_id"], "?")
        minutes = e.payload.get("duration_seconds", 0.0) / 60.0
        per_tool[tool] = per_tool.get(tool, 0.0) + minutes
    machine = sum(per_tool.values())
    return TimingBreakdown(
        wall_minutes=wall, machine_minutes=machine,
        user_minutes=max(wall - machine, 0.0),
        tool_minutes={k: per_tool[k] for k in sorted(per_tool)},
        tool_calls=calls)


def bundle_timing(bundle_dir: Path) -> TimingBreakdown:
    return timing_from_events(
        read_event_log(Path(bundle_dir) / "events.log"))


# -- aggregation across sessions ---------------------------------------------

def mean_std(samples: list[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (n - 1 in the denominator)."""
    if not samples:
        raise ValueError("no samples")
    mean = statistics.fmean(samples)
    std = statistics.stdev(samples) if len(samples) > 1 else 0.0
    return mean, std


def format_mean_std(samples: list[float]) -> str:
    mean, std = mean_std(samples)
    return f"{mean:.1f} ± {std:.1f}"


def aggregate_report(groups: dict[str, list[float]],
                     baseline_minutes: float) -> dict:
    """Per-cohort statistics plus the speedup band against a baseline."""
    if baseline_minutes <= 0:
        raise ValueError("baseline must be positive")
    out_groups: dict[str, dict] = {}
    speedups: list[float] = []
    for label, samples in groups.items():
        mean, std = mean_std(samples)
        speedup = round(baseline_minutes / mean, 1)
        speedups.append(speedup)
        out_groups[label] = {
            "n": len(samples),
            "mean_minutes": mean,
            "std_minutes": std,
            "formatted": f"{mean:.1f} ± {std:.1f}",
            "speedup": speedup,
            "formatted_speedup": f"{speedup:.1f}x",
        }
    lo, hi = min(speedups), max(speedups)
    return {
        "baseline_minutes": baseline_minutes,
        "groups": out_groups,
        "speedup_range": [lo, hi],
        "formatted_range": (f"{lo:.1f}x" if lo == hi
                            else f"{lo:.1f}-{hi:.1f}x"),
    }
