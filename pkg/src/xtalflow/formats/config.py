"""Reduction configuration files: `key = value` lines with `#` comments.

The parsed object keeps the original text so serialization round-trips
byte-identically; typed values live in a separate map. Missing required
keys are reported, not fatal, because the verification gates own that
judgment.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class ConfigParseError(ValueError):
    """Structurally malformed configuration text."""


class ConfigTypeError(ValueError):
    """A value failed typed coercion for its key."""


# key -> (kind, required). Kinds drive coercion in _coerce below.
CONFIG_SCHEMA: dict[str, tuple[str, bool]] = {
    "runs": ("runs", True),
    "wavelength_min": ("float", True),
    "wavelength_max": ("float", True),
    "d_min": ("float", True),
    "theta_max": ("float", True),
    "molecular_formula": ("str", True),
    "z": ("int", True),
    "unit_cell_volume": ("float", True),
    "space_group": ("str", True),
    "calibration_file": ("path", True),
    "ub_file": ("path", False),
    "background_file": ("path", False),
    "mask": ("str", False),
    # Declared cell, serialized alongside the reduction inputs so the
    # mock tools can fabricate orientation matrices consistent with it.
    "cell_a": ("float", False),
    "cell_b": ("float", False),
    "cell_c": ("float", False),
    "cell_alpha": ("float", False),
    "cell_beta": ("float", False),
    "cell_gamma": ("float", False),
}

ABSORPTION_PREFIX = "absorption_"

REQUIRED_KEYS = tuple(k for k, (_, req) in CONFIG_SCHEMA.items() if req)


def _parse_runs(text: str, key: str) -> list[int]:
    runs: list[int] = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part[1:]:
            lo_text, hi_text = part.split("-", 1)
            try:
                lo, hi = int(lo_text), int(hi_text)
            except ValueError:
                raise ConfigTypeError(
                    f"key {key!r}: bad run range {part!r}") from None
            if hi < lo:
                raise ConfigTypeError(f"key {key!r}: empty run range {part!r}")
            runs.extend(range(lo, hi + 1))
        else:
            try:
                runs.append(int(part))
            except ValueError:
                raise ConfigTypeError(
                    f"key {key!r}: bad run number {part!r}") from None
    if not runs:
        raise ConfigTypeError(f"key {key!r}: no run numbers given")
    if any(r <= 0 for r in runs):
        raise ConfigTypeError(f"key {key!r}: run numbers must be positive")
    return runs


def _coerce(key: str, kind: str, text: str):
    if kind == "runs":
        return _parse_runs(text, key)
    if kind == "float":
        try:
            return float(text)
        except ValueError:
            raise ConfigTypeError(
                f"key {key!r}: expected a number, got {text!r}") from None
    if kind == "int":
        try:
            return int(text)
        except ValueError:
            raise ConfigTypeError(
                f"key {key!r}: expected an integer, got {text!r}") from None
    return text


def _format_value(key: str, value) -> str:
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ReductionConfig:
    values: dict[str, object] = field(default_factory=dict)
    unknown: dict[str, str] = field(default_factory=dict)
    # Original text for byte-exact round-trips; None when built in code.
    source_text: str | None = field(default=None, compare=False)

    @property
    def warnings(self) -> list[str]:
        return [f"unknown key {k!r} preserved verbatim" for k in self.unknown]

    @property
    def missing_required(self) -> list[str]:
        return [k for k in REQUIRED_KEYS if k not in self.values]

    @property
    def absorption(self) -> dict[str, float]:
        return {k[len(ABSORPTION_PREFIX):]: v
                for k, v in self.values.items()
                if k.startswith(ABSORPTION_PREFIX)}

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def cell_parameters(self) -> tuple[float, ...] | None:
        names = ("cell_a", "cell_b", "cell_c",
                 "cell_alpha", "cell_beta", "cell_gamma")
        if all(n in self.values for n in names):
            return tuple(float(self.values[n]) for n in names)
        return None

    @classmethod
    def from_values(cls, mapping: dict[str, object]) -> "ReductionConfig":
        cfg = cls()
        for key, value in mapping.items():
            if key in CONFIG_SCHEMA or key.startswith(ABSORPTION_PREFIX):
                cfg.values[key] = value
            else:
                cfg.unknown[key] = str(value)
        return cfg


def parse_config(data: bytes) -> ReductionConfig:
    text = data.decode("utf-8")
    cfg = ReductionConfig(source_text=text)
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigParseError(
                f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if not key:
            raise ConfigParseError(f"line {lineno}: empty key")
        if key in CONFIG_SCHEMA:
            kind, _ = CONFIG_SCHEMA[key]
            cfg.values[key] = _coerce(key, kind, raw)
        elif key.startswith(ABSORPTION_PREFIX):
            cfg.values[key] = _coerce(key, "float", raw)
        else:
            cfg.unknown[key] = raw
    return cfg


def serialize_config(cfg: ReductionConfig) -> bytes:
    if cfg.source_text is not None:
        return cfg.source_text.encode("utf-8")
    lines = ["# reduction configuration"]
    for key in CONFIG_SCHEMA:
        if key in cfg.values:
            lines.append(f"{key} = {_format_value(key, cfg.values[key])}")
    for key, value in cfg.values.items():
        if key.startswith(ABSORPTION_PREFIX):
            lines.append(f"{key} = {_format_value(key, value)}")
    for key, raw in cfg.unknown.items():
        lines.append(f"{key} = {raw}")
    return ("\n".join(lines) + "\n").encode("utf-8")
