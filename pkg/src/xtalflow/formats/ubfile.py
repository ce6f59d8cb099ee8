"""Orientation-matrix files: three rows of three decimals, then an
optional cell line (a b c alpha beta gamma volume)."""

from __future__ import annotations

import numpy as np

from ..crystal import UnitCell


class UbFileError(ValueError):
    """Orientation-matrix file is malformed."""


def read_ub(data: bytes) -> tuple[np.ndarray, UnitCell | None]:
    rows: list[list[float]] = []
    cell: UnitCell | None = None
    for lineno, line in enumerate(data.decode("utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            numbers = [float(tok) for tok in stripped.split()]
        except ValueError:
            raise UbFileError(f"line {lineno}: non-numeric content") from None
        if len(rows) < 3:
            if len(numbers) != 3:
                raise UbFileError(
                    f"line {lineno}: expected 3 matrix entries, "
                    f"got {len(numbers)}")
            rows.append(numbers)
        elif cell is None:
            if len(numbers) < 6:
                raise UbFileError(
                    f"line {lineno}: cell line needs at least 6 values")
            cell = UnitCell(*numbers[:6])
        else:
            raise UbFileError(f"line {lineno}: trailing content")
    if len(rows) != 3:
        raise UbFileError(f"expected 3 matrix rows, found {len(rows)}")
    return np.array(rows), cell


def write_ub(ub: np.ndarray, cell: UnitCell | None = None,
             volume: float | None = None) -> bytes:
    ub = np.asarray(ub, dtype=float)
    if ub.shape != (3, 3):
        raise UbFileError(f"expected a 3x3 matrix, got shape {ub.shape}")
    lines = [" ".join(f"{v: .9f}" for v in row) for row in ub]
    if cell is not None:
        parts = [f"{v:.4f}" for v in cell.parameters()]
        if volume is not None:
            parts.append(f"{volume:.4f}")
        lines.append(" ".join(parts))
    return ("\n".join(lines) + "\n").encode("utf-8")
