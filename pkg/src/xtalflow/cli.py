"""Command line entry points.

Exit codes: 0 success, 1 a check failed (audit finding, replay
divergence, gate-style validation failure), 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .formats import CifParseError, missing_required_tags, parse_cif
from .gates import catalog
from .orchestrator import Orchestrator, ScriptRunError, packaged_script
from .policy import ScriptError, parse_script
from .provenance import aggregate_report, audit, bundle_timing, \
    finalize_run, replay_strict
from .retrieval import KnowledgeRelease, ReleaseError, build_manifest, \
    default_release_root
from .synthetic import COHORTS, MANUAL_BASELINE_MINUTES
from .workspace import stage_placeholder_inputs


def _load_script(args) -> str:
    if args.script:
        return Path(args.script).read_text(encoding="utf-8")
    return packaged_script()


def cmd_run(args) -> int:
    workspace = Path(args.workspace)
    try:
        script = _load_script(args)
        entries = parse_script(script)
    except (OSError, ScriptError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.stage_inputs:
        values = {e.name: e.value for e in entries if e.kind == "value"}
        stage_placeholder_inputs(workspace, values.get("runs", []),
                                 values.get("calibration_file"))
    orch = Orchestrator(workspace, script)
    if orch.state.completed:
        print(f"run {orch.run_id} is already complete "
              f"({len(orch.log.events)} events)")
        return 0
    try:
        state = orch.run_scripted()
    except ScriptRunError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    manifest = finalize_run(orch)
    print(f"run {orch.run_id}: stage {state.stage}, "
          f"{len(orch.log.events)} events, "
          f"{state.intervention_count} interventions, "
          f"{manifest['event_count']} sealed")
    print(f"bundle: {orch.bundle_dir}")
    return 0


def cmd_replay(args) -> int:
    report = replay_strict(Path(args.bundle))
    print(json.dumps(report.to_payload(), indent=2))
    return 0 if report.ok else 1


def cmd_audit(args) -> int:
    report = audit(Path(args.bundle))
    print(json.dumps(report.to_payload(), indent=2))
    return 0 if report.ok else 1


def cmd_timing(args) -> int:
    timing = bundle_timing(Path(args.bundle))
    print(json.dumps(timing.to_payload(), indent=2))
    return 0


def cmd_report(args) -> int:
    groups = {c.label: c.samples() for c in COHORTS}
    report = aggregate_report(groups, args.baseline)
    if args.json:
        print(json.dumps(report, indent=2))
        return 0
    print(f"manual baseline: {report['baseline_minutes']:g} minutes")
    for label, g in report["groups"].items():
        print(f"{label}: {g['formatted']} minutes over {g['n']} "
              f"sessions, speedup {g['formatted_speedup']}")
    print(f"speedup range: {report['formatted_range']}")
    return 0


def cmd_gates(args) -> int:
    specs = catalog()
    if args.json:
        print(json.dumps([{
            "id": s.id, "gate_class": s.gate_class,
            "boundary": list(s.boundary),
            "required_inputs": list(s.required_inputs),
            "description": s.description} for s in specs], indent=2))
        return 0
    for s in specs:
        frm, to = s.boundary
        print(f"{s.id}  {s.gate_class:<21} {frm} -> {to}")
        print(f"      {s.description}")
    return 0


def cmd_validate_cif(args) -> int:
    try:
        doc = parse_cif(Path(args.file).read_bytes())
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CifParseError as exc:
        print(f"error: {args.file} does not parse: {exc}",
              file=sys.stderr)
        return 1
    missing = missing_required_tags(doc)
    if missing:
        for tag in missing:
            print(f"missing required tag: {tag}")
        return 1
    print(f"{args.file}: all required tags present")
    return 0


def cmd_kb(args) -> int:
    if args.kb_command == "build":
        root = Path(args.root)
        sources = None
        if args.sources:
            sources = json.loads(Path(args.sources).read_text("utf-8"))
        manifest = build_manifest(root, args.release_version,
                                  args.timestamp, sources=sources)
        print(f"wrote manifest for {len(manifest['documents'])} "
              f"documents under {root}")
        return 0
    root = Path(args.root) if args.root else default_release_root()
    try:
        release = KnowledgeRelease.load(root)
    except ReleaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    result = release.query(args.query, budget=args.budget)
    for sc in result.chunks:
        print(f"[{sc.chunk.chunk_id}] score {sc.score:.4f} "
              f"({sc.chunk.tokens} tokens)")
        print(sc.chunk.text)
        print()
    print(f"release {result.release_version}, budget used "
          f"{result.budget_used}/{result.budget}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    app = create_app(Path(args.workspace))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xtalflow",
        description="Governed crystallography workflow engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute an operator script")
    p.add_argument("--workspace", required=True)
    p.add_argument("--script", help="script file "
                   "(default: the packaged benchmark)")
    p.add_argument("--no-stage-inputs", dest="stage_inputs",
                   action="store_false",
                   help="do not stage placeholder run files")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="strictly re-fold a bundle")
    p.add_argument("bundle")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("audit", help="audit a bundle's record")
    p.add_argument("bundle")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("timing", help="timing breakdown of a bundle")
    p.add_argument("bundle")
    p.set_defaults(func=cmd_timing)

    p = sub.add_parser("report",
                       help="session aggregate and speedup band")
    p.add_argument("--baseline", type=float,
                   default=MANUAL_BASELINE_MINUTES)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gates", help="list the verification gates")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_gates)

    p = sub.add_parser("validate-cif",
                       help="check a structure file for required tags")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate_cif)

    p = sub.add_parser("kb", help="knowledge release utilities")
    kb_sub = p.add_subparsers(dest="kb_command", required=True)
    b = kb_sub.add_parser("build", help="hash documents into a manifest")
    b.add_argument("root")
    b.add_argument("--release-version", required=True)
    b.add_argument("--timestamp", required=True)
    b.add_argument("--sources", help="JSON file mapping doc names to "
                   "source ids and urls")
    q = kb_sub.add_parser("query", help="query a release")
    q.add_argument("query")
    q.add_argument("--root", help="release directory "
                   "(default: the packaged release)")
    q.add_argument("--budget", type=int, default=512)
    p.set_defaults(func=cmd_kb)

    p = sub.add_parser("serve", help="serve the HTTP API")
    p.add_argument("--workspace", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
