"""Run workspace layout and path-contained artifact access.

Layout under one workspace root:

    data/run_<n>.dat          staged measurement placeholders
    calibration/...           instrument calibration inputs
    bundle/<run-id>/          per-run provenance bundle
        events.log
        manifest
        artifacts/...         everything the tools write

Every path recorded in events is relative to the workspace root, and
every write goes through the artifact store, which only accepts flat,
separator-free names. Reads resolve symlinks and refuse anything that
lands outside the allowed roots.
"""

from __future__ import annotations

import re
from pathlib import Path

DATA_DIR = "data"
CALIBRATION_DIR = "calibration"
BUNDLE_DIR = "bundle"

_ARTIFACT_NAME = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


class PathViolation(ValueError):
    """A path escapes the allowed roots or is not a legal artifact name."""


def run_data_file(workspace_root: Path, run_number: int) -> Path:
    return Path(workspace_root) / DATA_DIR / f"run_{run_number}.dat"


def stage_placeholder_inputs(workspace_root: Path, run_numbers,
                             calibration_file: str | None = None) -> None:
    """Create deterministic stand-ins for the measured inputs so a demo
    workspace satisfies the staging checks."""
    root = Path(workspace_root)
    for n in run_numbers:
        path = run_data_file(root, int(n))
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(
            f"placeholder neutron event data for run {int(n)}\n".encode())
    if calibration_file:
        calib = root / calibration_file
        calib.parent.mkdir(parents=True, exist_ok=True)
        calib.write_bytes(b"placeholder detector calibration table\n")


class ArtifactStore:
    """Flat, name-addressed file store under one directory."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, name: str) -> Path:
        if not _ARTIFACT_NAME.match(name) or ".." in name:
            raise PathViolation(f"illegal artifact name {name!r}")
        return self.root / name

    def exists(self, name: str) -> bool:
        try:
            return self._path(name).is_file()
        except PathViolation:
            return False

    def read(self, name: str) -> bytes | None:
        path = self._path(name)
        return path.read_bytes() if path.is_file() else None

    def write(self, name: str, data: bytes) -> str:
        self._path(name).write_bytes(data)
        return name

    def names(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if p.is_file())

    def numbered(self, prefix: str, suffix: str) -> list[tuple[int, str]]:
        """Artifacts named <prefix><k><suffix>, ordered by k."""
        out: list[tuple[int, str]] = []
        for name in self.names():
            if name.startswith(prefix) and name.endswith(suffix):
                middle = name[len(prefix):len(name) - len(suffix)]
                if middle.isdigit():
                    out.append((int(middle), name))
        out.sort()
        return out

    def latest(self, prefix: str, suffix: str) -> str | None:
        entries = self.numbered(prefix, suffix)
        return entries[-1][1] if entries else None

    def next_index(self, prefix: str, suffix: str) -> int:
        entries = self.numbered(prefix, suffix)
        return entries[-1][0] + 1 if entries else 1


class RunEnvironment:
    """What a gate or tool may see: the workspace, its artifact store,
    and any extra read-only roots (shared facility areas)."""

    def __init__(self, workspace_root: Path, artifacts: ArtifactStore,
                 allowed_read_roots: tuple[Path, ...] = ()):
        self.workspace_root = Path(workspace_root).resolve()
        self.artifacts = artifacts
        self.allowed_read_roots = tuple(
            Path(p).resolve() for p in allowed_read_roots)

    def roots(self) -> tuple[Path, ...]:
        return (self.workspace_root,) + self.allowed_read_roots

    def resolve_read_path(self, path_text: str) -> Path | None:
        """Resolve a (usually workspace-relative) path; None if it
        escapes every allowed root or does not exist."""
        candidate = Path(path_text)
        if not candidate.is_absolute():
            candidate = self.workspace_root / candidate
        try:
            resolved = candidate.resolve()
        except OSError:
            return None
        for root in self.roots():
            try:
                resolved.relative_to(root)
            except ValueError:
                continue
            return resolved if resolved.is_file() else None
        return None

    def path_allowed(self, path_text: str) -> bool:
        candidate = Path(path_text)
        if not candidate.is_absolute():
            candidate = self.workspace_root / candidate
        try:
            resolved = candidate.resolve()
        except OSError:
            return False
        for root in self.roots():
            try:
                resolved.relative_to(root)
                return True
            except ValueError:
                continue
        return False

    def run_file_exists(self, run_number: int) -> bool:
        return run_data_file(self.workspace_root, run_number).is_file()
