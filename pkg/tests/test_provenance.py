"""Manifest, audit, strict replay, timing, and session aggregation."""

import shutil

import pytest

from xtalflow.canonical import canonical_bytes, chain_hash, sha256_hex
from xtalflow.events import EventLog, ProvenanceEvent, read_event_log, \
    seal_event
from xtalflow.model import build_state_created_payload
from xtalflow.orchestrator import Orchestrator, packaged_script
from xtalflow.provenance import (
    aggregate_report,
    audit,
    build_manifest,
    bundle_timing,
    finalize_run,
    format_mean_std,
    mean_std,
    read_manifest,
    replay_strict,
    write_manifest,
)
from xtalflow.synthetic import COHORTS, MANUAL_BASELINE_MINUTES, \
    TimingCohort, cohort, symmetric_samples
from xtalflow.workspace import stage_placeholder_inputs


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    ws = tmp_path_factory.mktemp("bench")
    stage_placeholder_inputs(ws, [1001, 1002, 1003],
                             "calibration/TOPAZ_2025A.DetCal")
    orch = Orchestrator(ws, packaged_script())
    orch.run_scripted()
    finalize_run(orch)
    return orch


@pytest.fixture
def bundle_copy(bench, tmp_path):
    dest = tmp_path / "bundle"
    shutil.copytree(bench.bundle_dir, dest)
    return dest


# -- manifest ----------------------------------------------------------------

def test_manifest_roundtrip(bench):
    manifest = read_manifest(bench.bundle_dir)
    assert manifest == build_manifest(
        bench.log.events, bench.env.artifacts, bench.run_id,
        bench.script_text, bench.release.version)
    assert manifest["run_id"] == bench.run_id
    assert manifest["hash_algorithm"] == "sha256"
    assert manifest["event_count"] == len(bench.log.events)
    assert manifest["tail_hash"] == bench.log.tail_hash
    assert manifest["script_sha256"] == sha256_hex(
        packaged_script().encode("utf-8"))
    assert manifest["release_version"] == "2025.1"
    assert manifest["tool_catalog_version"] == "1"
    assert manifest["gate_catalog_version"] == "1"
    assert set(manifest["artifacts"]) == set(bench.env.artifacts.names())


def test_manifest_artifact_hashes_match_content(bench):
    manifest = read_manifest(bench.bundle_dir)
    for name, digest in manifest["artifacts"].items():
        assert sha256_hex(bench.env.artifacts.read(name)) == digest


# -- audit -------------------------------------------------------------------

def test_audit_clean_bundle(bench):
    report = audit(bench.bundle_dir)
    assert report.ok, [f.to_payload() for f in report.findings]
    assert set(report.checks_run) == {
        "hash_chain", "call_result_pairing", "authorization_discipline",
        "gate_clearing", "patch_rationale", "credential_scan", "manifest"}


def test_audit_detects_log_tampering(bundle_copy):
    path = bundle_copy / "events.log"
    raw = path.read_bytes()
    assert b"moving from DataAccess" in raw
    path.write_bytes(raw.replace(b"moving from DataAccess",
                                 b"m0ving from DataAccess", 1))
    report = audit(bundle_copy)
    assert not report.ok
    assert any(f.check == "hash_chain" and "hash mismatch" in f.detail
               for f in report.findings)


def test_audit_detects_artifact_tampering(bundle_copy):
    target = bundle_copy / "artifacts" / "reduce.log"
    target.write_bytes(target.read_bytes() + b"padding\n")
    report = audit(bundle_copy)
    assert any(f.check == "manifest" and "reduce.log" in f.detail
               and "mismatch" in f.detail for f in report.findings)


def test_audit_detects_missing_and_stray_artifacts(bundle_copy):
    (bundle_copy / "artifacts" / "structure.png").unlink()
    (bundle_copy / "artifacts" / "extra.bin").write_bytes(b"x")
    details = [f.detail for f in audit(bundle_copy).findings
               if f.check == "manifest"]
    assert any("structure.png" in d and "missing" in d for d in details)
    assert any("extra.bin" in d and "not listed" in d for d in details)


def test_audit_detects_manifest_edits(bundle_copy):
    manifest = read_manifest(bundle_copy)
    manifest["event_count"] += 1
    write_manifest(bundle_copy, manifest)
    report = audit(bundle_copy)
    assert any(f.check == "manifest" and "events" in f.detail
               for f in report.findings)


def test_audit_missing_log(tmp_path):
    report = audit(tmp_path)
    assert not report.ok
    assert report.findings[0].detail == "events.log is missing"


def forged_log(tmp_path, payload_rows):
    """Seal a synthetic history so the chain itself verifies."""
    log = EventLog(tmp_path / "events.log")
    log.append(0.0, "state_created", build_state_created_payload(
        "P-1", "system", {}, []))
    for kind, payload in payload_rows:
        log.append(float(log.next_seq), kind, payload)
    return tmp_path


def test_audit_flags_unauthorized_side_effects(tmp_path):
    bundle = forged_log(tmp_path, [
        ("tool_call", {"call_id": "call-1", "tool": "reduce",
                       "arguments": {"runs": [1]},
                       "authorization_id": None}),
        ("tool_result", {"call_id": "call-1", "status": "ok",
                         "duration_seconds": 0.0,
                         "scripted_minutes": 12.0, "log_text": "",
                         "artifacts": [], "warnings": []}),
    ])
    report = audit(bundle)
    assert any(f.check == "authorization_discipline"
               and "no authorization" in f.detail
               for f in report.findings)


def test_audit_flags_result_without_call(tmp_path):
    bundle = forged_log(tmp_path, [
        ("tool_call", {"call_id": "call-1", "tool": "list_runs",
                       "arguments": {}, "authorization_id": None}),
        ("tool_result", {"call_id": "call-1", "status": "ok",
                         "duration_seconds": 0.0,
                         "scripted_minutes": 0.0, "log_text": "",
                         "artifacts": [], "warnings": []}),
        ("tool_call", {"call_id": "call-2", "tool": "list_runs",
                       "arguments": {}, "authorization_id": None}),
    ])
    report = audit(bundle)
    assert any(f.check == "call_result_pairing"
               and "call-2 has no result" in f.detail
               for f in report.findings)


def test_audit_flags_gate_cleared_without_intervention(tmp_path):
    outcome = {"gate_id": "G01", "gate_class": "HardBounds",
               "boundary": ["DataAccess", "Reduction"],
               "offending_inputs": [], "suggested_action": ""}
    bundle = forged_log(tmp_path, [
        ("gate_check", {**outcome, "verdict": "fail",
                        "reason": "volume implausible"}),
        ("gate_check", {**outcome, "verdict": "pass", "reason": ""}),
    ])
    report = audit(bundle)
    assert any(f.check == "gate_clearing" and "G01" in f.detail
               for f in report.findings)


def test_audit_scans_for_credentials(tmp_path):
    # The sealer refuses such payloads, so forge the line around it.
    log_path = tmp_path / "events.log"
    first = seal_event(0, 0.0, "state_created",
                       build_state_created_payload("P-1", "s", {}, []),
                       "0" * 64)
    payload = {"text": "api_key = hunter2hunter2", "category": "info"}
    body = canonical_bytes({"kind": "agent_message", "payload": payload,
                            "seq": 1, "ts": 1.0})
    second = ProvenanceEvent(
        seq=1, ts=1.0, kind="agent_message", payload=payload,
        prev_hash=first.hash, hash=chain_hash(first.hash, body))
    with open(log_path, "wb") as fh:
        fh.write(first.to_line())
        fh.write(second.to_line())
    report = audit(tmp_path)
    assert any(f.check == "credential_scan" for f in report.findings)
    assert not any(f.check == "hash_chain" for f in report.findings)


# -- strict replay -----------------------------------------------------------

def test_replay_clean_bundle(bench):
    report = replay_strict(bench.bundle_dir)
    assert report.ok
    assert report.events_checked == len(bench.log.events)
    # five stage transitions, one completion record, one manifest hash
    assert report.checkpoints == 7


def test_replay_detects_forged_checkpoint(bundle_copy):
    events = read_event_log(bundle_copy / "events.log")
    rebuilt = []
    prev = "0" * 64
    forged_seq = None
    for e in events:
        payload = e.payload
        if e.kind == "stage_transition" and forged_seq is None:
            payload = {**payload, "state_hash": "0" * 64}
            forged_seq = e.seq
        sealed = seal_event(e.seq, e.ts, e.kind, payload, prev)
        rebuilt.append(sealed)
        prev = sealed.hash
    with open(bundle_copy / "events.log", "wb") as fh:
        for e in rebuilt:
            fh.write(e.to_line())
    report = replay_strict(bundle_copy)
    assert not report.ok
    assert report.divergence["seq"] == forged_seq
    assert report.divergence["field"] == "state_hash"
    assert report.divergence["recomputed"] != "0" * 64


def test_replay_detects_manifest_divergence(bundle_copy):
    manifest = read_manifest(bundle_copy)
    manifest["final_state_hash"] = "f" * 64
    write_manifest(bundle_copy, manifest)
    report = replay_strict(bundle_copy)
    assert not report.ok
    assert report.divergence["field"] == "final_state_hash"


def test_replay_reports_chain_break_first(bundle_copy):
    path = bundle_copy / "events.log"
    raw = path.read_bytes()
    path.write_bytes(raw.replace(b"moving from DataAccess",
                                 b"m0ving from DataAccess", 1))
    report = replay_strict(bundle_copy)
    assert not report.ok
    assert report.divergence["field"] == "hash_chain"


# -- timing ------------------------------------------------------------------

def test_benchmark_timing_breakdown(bench):
    timing = bundle_timing(bench.bundle_dir)
    assert timing.tool_minutes == {
        "checkcif": 4.0, "integrate": 6.0, "list_runs": 0.0,
        "reduce": 24.0, "refine": 8.0, "visualize": 1.0}
    assert timing.machine_minutes == 43.0
    assert timing.tool_calls == 9
    assert timing.wall_minutes > timing.machine_minutes
    assert timing.user_minutes == pytest.approx(
        timing.wall_minutes - timing.machine_minutes)


def test_timing_of_empty_history():
    from xtalflow.provenance import timing_from_events
    timing = timing_from_events([])
    assert timing.wall_minutes == 0.0
    assert timing.machine_minutes == 0.0
    assert timing.tool_calls == 0


# -- synthetic cohorts and aggregation ---------------------------------------

def test_symmetric_samples_hit_targets_exactly():
    import statistics
    for c in COHORTS:
        samples = c.samples()
        assert len(samples) == 5
        assert statistics.fmean(samples) == pytest.approx(c.mean,
                                                          abs=1e-9)
        assert statistics.stdev(samples) == pytest.approx(c.std,
                                                          abs=1e-9)


def test_symmetric_samples_rejects_bad_construction():
    with pytest.raises(ValueError, match="n=5"):
        symmetric_samples(10.0, 1.0, 0.5, n=4)
    with pytest.raises(ValueError, match="too wide"):
        symmetric_samples(10.0, 1.0, 5.0)
    with pytest.raises(ValueError, match="positive"):
        symmetric_samples(10.0, 0.0, 1.0)


def test_cohort_lookup():
    assert cohort("primary").mean == 86.5
    assert cohort("replication").std == 3.5
    with pytest.raises(KeyError):
        cohort("nope")


def test_mean_std_conventions():
    assert mean_std([5.0]) == (5.0, 0.0)
    with pytest.raises(ValueError):
        mean_std([])
    assert format_mean_std([1.0, 2.0, 3.0]) == "2.0 ± 1.0"


def test_aggregate_report_reproduces_the_published_comparison():
    groups = {c.label: c.samples() for c in COHORTS}
    report = aggregate_report(groups, MANUAL_BASELINE_MINUTES)
    primary = report["groups"]["primary"]
    replication = report["groups"]["replication"]
    assert primary["formatted"] == "86.5 ± 4.7"
    assert replication["formatted"] == "94.4 ± 3.5"
    assert primary["speedup"] == 5.0
    assert replication["speedup"] == 4.6
    assert report["speedup_range"] == [4.6, 5.0]
    assert report["formatted_range"] == "4.6-5.0x"


def test_aggregate_report_single_group_range():
    report = aggregate_report(
        {"only": TimingCohort("only", 87.0, 4.0, 5.0).samples()}, 435.0)
    assert report["formatted_range"] == "5.0x"
    with pytest.raises(ValueError):
        aggregate_report({"g": [10.0]}, 0.0)
