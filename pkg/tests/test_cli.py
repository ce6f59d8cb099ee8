"""Exit codes and output of the console entry point."""

import json
import shutil

import pytest

from xtalflow.cli import main


@pytest.fixture(scope="module")
def finished(tmp_path_factory):
    """Workspace holding one completed benchmark bundle."""
    ws = tmp_path_factory.mktemp("cliws")
    assert main(["run", "--workspace", str(ws)]) == 0
    bundles = list((ws / "bundle").iterdir())
    assert len(bundles) == 1
    return ws, bundles[0]


def test_run_reports_completion(finished, capsys):
    ws, bundle = finished
    # running again over the same bundle is a no-op, not an error
    assert main(["run", "--workspace", str(ws)]) == 0
    out = capsys.readouterr().out
    assert "already complete" in out
    assert (bundle / "events.log").is_file()
    assert (bundle / "manifest.json").is_file()


def test_run_rejects_missing_script(tmp_path, capsys):
    code = main(["run", "--workspace", str(tmp_path),
                 "--script", str(tmp_path / "absent.txt")])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_run_fails_on_stalled_script(tmp_path, capsys):
    script = tmp_path / "stall.txt"
    script.write_text(
        "say: start the data processing task\n"
        "value: runs = [1001]\n"
        "value: calibration_file = \"calibration/TOPAZ_2025A.DetCal\"\n"
        "value: wavelength_min = 0.4\n"
        "value: wavelength_max = 3.5\n"
        "value: d_min = 0.5\n"
        "value: theta_max = 80.0\n"
        "value: molecular_formula = \"Ca1 Al2 Si3 O13 H6\"\n"
        "value: z = 4\n"
        "value: space_group = \"C c\"\n"
        "value: cell = [18.508, 18.981, 6.527, 90.0, 90.64, 90.0]\n"
        "value: unit_cell_volume = 2292.9\n"
        "say: hello while a request is pending\n")
    code = main(["run", "--workspace", str(tmp_path),
                 "--script", str(script)])
    assert code == 1
    assert "awaiting" in capsys.readouterr().err


def test_replay_and_audit_exit_zero_on_clean_bundle(finished, capsys):
    _, bundle = finished
    assert main(["replay", str(bundle)]) == 0
    assert json.loads(capsys.readouterr().out)["ok"] is True
    assert main(["audit", str(bundle)]) == 0
    assert json.loads(capsys.readouterr().out)["ok"] is True


def test_audit_exit_one_on_tampered_bundle(finished, tmp_path, capsys):
    _, bundle = finished
    copy = tmp_path / "copy"
    shutil.copytree(bundle, copy)
    target = copy / "artifacts" / "merged.hkl"
    target.write_bytes(target.read_bytes() + b"tail\n")
    assert main(["audit", str(copy)]) == 1
    report = json.loads(capsys.readouterr().out)
    assert any("merged.hkl" in f["detail"] for f in report["findings"])


def test_timing_command(finished, capsys):
    _, bundle = finished
    assert main(["timing", str(bundle)]) == 0
    timing = json.loads(capsys.readouterr().out)
    assert timing["machine_minutes"] == 43.0


def test_report_text_and_json(capsys):
    assert main(["report"]) == 0
    out = capsys.readouterr().out
    assert "86.5 ± 4.7" in out
    assert "94.4 ± 3.5" in out
    assert "4.6-5.0x" in out
    assert main(["report", "--json", "--baseline", "435"]) == 0
    body = json.loads(capsys.readouterr().out)
    assert body["speedup_range"] == [4.6, 5.0]


def test_gates_listing(capsys):
    assert main(["gates"]) == 0
    out = capsys.readouterr().out
    assert "G01" in out and "G13" in out
    assert main(["gates", "--json"]) == 0
    body = json.loads(capsys.readouterr().out)
    assert len(body) == 13


def test_validate_cif(finished, tmp_path, capsys):
    _, bundle = finished
    good = bundle / "artifacts" / "model_3.cif"
    assert main(["validate-cif", str(good)]) == 0
    incomplete = bundle / "artifacts" / "model_2.cif"
    assert main(["validate-cif", str(incomplete)]) == 1
    assert "_exptl_crystal_description" in capsys.readouterr().out
    assert main(["validate-cif", str(tmp_path / "none.cif")]) == 2


def test_kb_query(capsys):
    assert main(["kb", "query", "where is the calibration file"]) == 0
    assert "/SNS/TOPAZ/IPTS-xxxxx/shared/calibration" \
        in capsys.readouterr().out


def test_kb_build(tmp_path, capsys):
    (tmp_path / "doc.md").write_text("# One\n\nA paragraph.\n")
    assert main(["kb", "build", str(tmp_path),
                 "--release-version", "9.9",
                 "--timestamp", "2026-01-01T00:00:00Z"]) == 0
    assert (tmp_path / "manifest.json").is_file()
    assert main(["kb", "query", "paragraph",
                 "--root", str(tmp_path)]) == 0


def test_usage_error_exits_two():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
