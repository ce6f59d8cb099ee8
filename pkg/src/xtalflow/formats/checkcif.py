"""Validation report format: coded alerts at severities A through G.

The alert level is parsed from the code's trailing letter, never from
surrounding prose, so message wording can change freely.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

ALERT_LEVELS = ("A", "B", "C", "G")

_CODE_LINE = re.compile(r"^([A-Z][A-Z0-9]*_ALERT_\d+_([ABCG]))\s*$")
_SUPPRESSED = re.compile(r"^\s*Suppressed test:\s*(\S+)\s*$")


@dataclass(frozen=True)
class CheckCifAlert:
    code: str
    level: str
    message: str
    suppressed_test: str | None = None


@dataclass
class CheckCifReport:
    alerts: list[CheckCifAlert] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def counts(self) -> dict[str, int]:
        out = {level: 0 for level in ALERT_LEVELS}
        for alert in self.alerts:
            out[alert.level] += 1
        return out

    @property
    def publication_clean(self) -> bool:
        counts = self.counts
        return counts["A"] == 0 and counts["B"] == 0


def parse_checkcif_report(data: bytes) -> CheckCifReport:
    text = data.decode("utf-8")
    report = CheckCifReport()

    code: str | None = None
    level = ""
    message_parts: list[str] = []
    suppressed: str | None = None

    def flush():
        nonlocal code, suppressed
        if code is not None:
            report.alerts.append(CheckCifAlert(
                code=code, level=level,
                message=" ".join(message_parts).strip(),
                suppressed_test=suppressed))
        code = None
        suppressed = None
        message_parts.clear()

    for line in text.splitlines():
        m = _CODE_LINE.match(line.strip())
        if m:
            flush()
            code, level = m.group(1), m.group(2)
            continue
        if "_ALERT_" in line and not line.strip().startswith("Summary"):
            flush()
            report.warnings.append(
                f"unrecognized alert line skipped: {line.strip()!r}")
            continue
        if code is not None:
            sm = _SUPPRESSED.match(line)
            if sm:
                suppressed = sm.group(1)
            elif line.strip():
                message_parts.append(line.strip())
            else:
                flush()
    flush()
    return report


def write_checkcif_report(alerts: list[CheckCifAlert],
                          subject: str = "") -> bytes:
    lines = ["Validation report (deterministic mock engine)"]
    if subject:
        lines.append(f"Checked file: {subject}")
    lines.append("")
    for alert in alerts:
        lines.append(alert.code)
        lines.append(f"  {alert.message}")
        if alert.suppressed_test:
            lines.append(f"  Suppressed test: {alert.suppressed_test}")
        lines.append("")
    counts = {level: 0 for level in ALERT_LEVELS}
    for alert in alerts:
        counts[alert.level] += 1
    lines.append("Summary: " + " ".join(
        f"{level}={counts[level]}" for level in ALERT_LEVELS))
    return ("\n".join(lines) + "\n").encode("utf-8")
