"""Mock refinement output: summary statistics plus failure signatures.

Writer and parser share one grammar so adapter fixtures and gate checks
cannot drift apart. Statistic values are kept exactly as printed; the
parser never re-rounds.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..crystal import RefinementStats

FAILURE_SIGNATURES = (
    "** REFINEMENT UNSTABLE **",
    "** NON POSITIVE DEFINITE **",
)

_STAT_LINE = re.compile(
    r"^\s*(R1|wR2|GOOF|CYCLES|UISO_MAX|UISO_MIN)\s*=\s*(\S+)\s*$")


class ShelxlParseError(ValueError):
    """Refinement output is missing a required statistic or is malformed."""


@dataclass
class ShelxlSummary:
    stats: RefinementStats
    # Statistic name -> value text exactly as printed.
    raw: dict[str, str] = field(default_factory=dict)
    warning_lines: list[str] = field(default_factory=list)
    converged: bool = True


def parse_shelxl_output(data: bytes) -> ShelxlSummary:
    text = data.decode("utf-8")
    raw: dict[str, str] = {}
    warning_lines: list[str] = []
    signature_hit = False

    for line in text.splitlines():
        stripped = line.strip()
        if stripped in FAILURE_SIGNATURES:
            signature_hit = True
            warning_lines.append(stripped)
            continue
        if stripped.startswith("**"):
            warning_lines.append(stripped)
            continue
        m = _STAT_LINE.match(line)
        if m:
            name, value = m.group(1), m.group(2)
            raw[name] = value

    for name in ("R1", "wR2", "GOOF"):
        if name not in raw:
            raise ShelxlParseError(f"statistic {name} not found in output")

    def as_float(name: str) -> float:
        try:
            return float(raw[name])
        except ValueError:
            raise ShelxlParseError(
                f"statistic {name} is not numeric: {raw[name]!r}") from None

    cycles = 0
    if "CYCLES" in raw:
        try:
            cycles = int(raw["CYCLES"])
        except ValueError:
            raise ShelxlParseError(
                f"statistic CYCLES is not an integer: {raw['CYCLES']!r}") from None

    converged = not signature_hit
    stats = RefinementStats(
        r1=as_float("R1"), wr2=as_float("wR2"), gof=as_float("GOOF"),
        cycles=cycles, converged=converged,
        max_uiso=as_float("UISO_MAX") if "UISO_MAX" in raw else None,
        min_uiso=as_float("UISO_MIN") if "UISO_MIN" in raw else None)
    return ShelxlSummary(stats=stats, raw=raw, warning_lines=warning_lines,
                         converged=converged)


def write_shelxl_output(r1: str, wr2: str, goof: str, cycles: int,
                        uiso_max: str | None = None,
                        uiso_min: str | None = None,
                        signatures: tuple[str, ...] = (),
                        header_lines: tuple[str, ...] = ()) -> bytes:
    """Render a summary; statistics are passed as text to stay bit-exact."""
    lines: list[str] = list(header_lines)
    if lines:
        lines.append("")
    for sig in signatures:
        lines.append(sig)
    if signatures:
        lines.append("")
    lines.append(f"CYCLES = {cycles}")
    lines.append(f"R1 = {r1}")
    lines.append(f"wR2 = {wr2}")
    lines.append(f"GOOF = {goof}")
    if uiso_max is not None:
        lines.append(f"UISO_MAX = {uiso_max}")
    if uiso_min is not None:
        lines.append(f"UISO_MIN = {uiso_min}")
    return ("\n".join(lines) + "\n").encode("utf-8")
