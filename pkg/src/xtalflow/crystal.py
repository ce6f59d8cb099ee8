"""Crystallographic values and checks consumed by the verification gates.

Covers chemical formula arithmetic, cell metrics and volume, the
Busing-Levy reciprocal basis, orientation-matrix consistency, lattice
system constraints, Bragg resolution, density, and the minimum-volume
plausibility heuristic. Everything here is a pure function of its
arguments.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .elements import ATOMIC_WEIGHTS, AVOGADRO
from .spacegroups import (SPACE_GROUP_SYMBOLS, normalize_symbol,
                          symbol_to_number, system_for_number)

# Defaults used by the gates; looser than instrument precision, tighter
# than typical indexing errors.
DEFAULT_TOL_LEN = 0.01      # relative, on cell lengths
DEFAULT_TOL_ANG = 0.1       # degrees, on cell angles
ORTHOGONALITY_TOL = 1e-6    # Frobenius norm of U^T U - I
DENSITY_PLAUSIBLE = (0.5, 25.0)   # g/cm^3, covers all known crystalline solids
MIN_VOLUME_PER_ATOM = 15.0        # A^3 per atom per formula unit

LATTICE_SYSTEMS = (
    "Triclinic", "Monoclinic", "Orthorhombic", "Tetragonal",
    "Trigonal", "Hexagonal", "Cubic",
)


class FormulaError(ValueError):
    """Chemical formula text could not be parsed."""


class CellGeometryError(ValueError):
    """Cell parameters do not describe a realizable lattice."""


class DegenerateOrientationError(ValueError):
    """Orientation matrix is singular or otherwise unusable."""


class SpaceGroupError(ValueError):
    """Space group symbol or number was not recognized."""


@dataclass(frozen=True)
class UnitCell:
    """Direct cell: lengths in Angstrom, angles in degrees."""

    a: float
    b: float
    c: float
    alpha: float
    beta: float
    gamma: float

    def parameters(self) -> tuple[float, float, float, float, float, float]:
        return (self.a, self.b, self.c, self.alpha, self.beta, self.gamma)

    def discriminant(self) -> float:
        """Metric discriminant; positive iff the cell is realizable."""
        ca, cb, cg = (math.cos(math.radians(x))
                      for x in (self.alpha, self.beta, self.gamma))
        return 1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg

    def is_realizable(self) -> bool:
        if min(self.a, self.b, self.c) <= 0.0:
            return False
        for ang in (self.alpha, self.beta, self.gamma):
            if not 0.0 < ang < 180.0:
                return False
        return self.discriminant() > 0.0


@dataclass(frozen=True)
class ChemicalFormula:
    counts: dict[str, int]
    atom_total: int
    molar_mass: float

    def text(self) -> str:
        return " ".join(f"{el}{n}" for el, n in self.counts.items())


@dataclass(frozen=True)
class RefinementStats:
    """Summary statistics of one least-squares refinement run."""

    r1: float
    wr2: float
    gof: float
    cycles: int
    converged: bool
    max_uiso: float | None = None
    min_uiso: float | None = None


@dataclass(frozen=True)
class Reflection:
    h: int
    k: int
    l: int
    f_squared: float
    sigma_f_squared: float
    batch: int
    wavelength: float


_FORMULA_TOKEN = re.compile(r"^([A-Z][a-z]?)(\d*)$")


def parse_formula(text: str) -> ChemicalFormula:
    """Parse whitespace-separated element+count tokens.

    A missing count means 1; repeated elements accumulate.
    """
    if not text or not text.strip():
        raise FormulaError("empty formula text")
    counts: dict[str, int] = {}
    for token in text.split():
        m = _FORMULA_TOKEN.match(token)
        if not m:
            raise FormulaError(f"unrecognized formula token: {token!r}")
        element, digits = m.group(1), m.group(2)
        if element not in ATOMIC_WEIGHTS:
            raise FormulaError(f"unknown element symbol in token {token!r}")
        n = int(digits) if digits else 1
        if n <= 0:
            raise FormulaError(f"non-positive count in token {token!r}")
        counts[element] = counts.get(element, 0) + n
    atom_total = sum(counts.values())
    molar_mass = sum(ATOMIC_WEIGHTS[el] * n for el, n in counts.items())
    return ChemicalFormula(counts=counts, atom_total=atom_total,
                           molar_mass=molar_mass)


def metric_tensor(cell: UnitCell) -> np.ndarray:
    """Direct metric tensor G, in A^2."""
    a, b, c = cell.a, cell.b, cell.c
    ca, cb, cg = (math.cos(math.radians(x))
                  for x in (cell.alpha, cell.beta, cell.gamma))
    return np.array([
        [a * a, a * b * cg, a * c * cb],
        [a * b * cg, b * b, b * c * ca],
        [a * c * cb, b * c * ca, c * c],
    ])


def cell_volume(cell: UnitCell) -> float:
    """Analytic cell volume a*b*c*sqrt(discriminant), in A^3."""
    if min(cell.a, cell.b, cell.c) <= 0.0:
        raise CellGeometryError(f"non-positive cell length in {cell}")
    for ang in (cell.alpha, cell.beta, cell.gamma):
        if not 0.0 < ang < 180.0:
            raise CellGeometryError(f"cell angle outside (0, 180): {ang}")
    disc = cell.discriminant()
    if disc <= 0.0:
        raise CellGeometryError(
            f"cell is not geometrically realizable (discriminant {disc:.3e})")
    return cell.a * cell.b * cell.c * math.sqrt(disc)


def reciprocal_parameters(cell: UnitCell):
    """Reciprocal constants (a*, b*, c*, alpha*, beta*, gamma*), A^-1 / deg."""
    g = metric_tensor(cell)
    det = np.linalg.det(g)
    if det <= 0.0:
        raise CellGeometryError("metric tensor is not positive definite")
    gstar = np.linalg.inv(g)
    astar, bstar, cstar = np.sqrt(np.diag(gstar))
    alphastar = math.degrees(math.acos(gstar[1, 2] / (bstar * cstar)))
    betastar = math.degrees(math.acos(gstar[0, 2] / (astar * cstar)))
    gammastar = math.degrees(math.acos(gstar[0, 1] / (astar * bstar)))
    return astar, bstar, cstar, alphastar, betastar, gammastar


def b_matrix(cell: UnitCell) -> np.ndarray:
    """Upper-triangular reciprocal basis in the Busing-Levy convention.

    Maps integer reflection indices to reciprocal-space vectors in A^-1;
    satisfies B^T B = G* for the cell it was built from.
    """
    astar, bstar, cstar, alphastar, betastar, gammastar = \
        reciprocal_parameters(cell)
    ra = math.radians(alphastar)
    rb = math.radians(betastar)
    rg = math.radians(gammastar)
    return np.array([
        [astar, bstar * math.cos(rg), cstar * math.cos(rb)],
        [0.0, bstar * math.sin(rg),
         -cstar * math.sin(rb) * math.cos(math.radians(cell.alpha))],
        [0.0, 0.0, 1.0 / cell.c],
    ])


def cell_from_ub(ub: np.ndarray) -> UnitCell:
    """Recover the direct cell from an orientation matrix.

    G = ((UB)^T (UB))^-1; lengths are sqrt of the diagonal, angles come
    from the off-diagonal cosines.
    """
    ub = np.asarray(ub, dtype=float)
    if ub.shape != (3, 3):
        raise DegenerateOrientationError(f"expected 3x3 matrix, got {ub.shape}")
    det = np.linalg.det(ub)
    if abs(det) < 1e-12:
        raise DegenerateOrientationError(
            f"orientation matrix is singular (det {det:.3e})")
    g = np.linalg.inv(ub.T @ ub)
    a, b, c = np.sqrt(np.diag(g))
    alpha = math.degrees(math.acos(g[1, 2] / (b * c)))
    beta = math.degrees(math.acos(g[0, 2] / (a * c)))
    gamma = math.degrees(math.acos(g[0, 1] / (a * b)))
    return UnitCell(a, b, c, alpha, beta, gamma)


@dataclass
class UbConsistencyReport:
    derived_cell: UnitCell
    deviations: dict[str, dict[str, float]]
    failed_parameters: list[str]
    orthogonality_residual: float
    handedness_positive: bool
    passed: bool


def ub_consistency(ub: np.ndarray, declared: UnitCell,
                   tol_len: float = DEFAULT_TOL_LEN,
                   tol_ang: float = DEFAULT_TOL_ANG) -> UbConsistencyReport:
    """Compare an orientation matrix against a declared cell.

    Derives the cell from UB, reports per-parameter deviations, the
    orthogonality residual of U = UB * B(derived)^-1, and the handedness
    of the matrix. Passes only when every deviation is inside tolerance,
    the residual is below ORTHOGONALITY_TOL, and det(UB) > 0.
    """
    ub = np.asarray(ub, dtype=float)
    derived = cell_from_ub(ub)
    u = ub @ np.linalg.inv(b_matrix(derived))
    residual = float(np.linalg.norm(u.T @ u - np.eye(3)))
    handedness = bool(np.linalg.det(ub) > 0.0)

    deviations: dict[str, dict[str, float]] = {}
    failed: list[str] = []
    for name in ("a", "b", "c"):
        want = getattr(declared, name)
        got = getattr(derived, name)
        delta = abs(got - want) / want
        deviations[name] = {"declared": want, "derived": got,
                            "relative_delta": delta}
        if delta > tol_len:
            failed.append(name)
    for name in ("alpha", "beta", "gamma"):
        want = getattr(declared, name)
        got = getattr(derived, name)
        delta = abs(got - want)
        deviations[name] = {"declared": want, "derived": got,
                            "delta_degrees": delta}
        if delta > tol_ang:
            failed.append(name)

    passed = (not failed) and residual < ORTHOGONALITY_TOL and handedness
    return UbConsistencyReport(
        derived_cell=derived, deviations=deviations,
        failed_parameters=failed, orthogonality_residual=residual,
        handedness_positive=handedness, passed=passed)


@dataclass(frozen=True)
class LatticeSystem:
    name: str
    centering: str
    number: int | None = None


def lattice_system(space_group) -> LatticeSystem:
    """Classify a space group (H-M symbol or number 1-230)."""
    if isinstance(space_group, bool):
        raise SpaceGroupError(f"not a space group: {space_group!r}")
    if isinstance(space_group, int):
        if not 1 <= space_group <= 230:
            raise SpaceGroupError(
                f"space group number out of range 1-230: {space_group}")
        symbol = normalize_symbol(SPACE_GROUP_SYMBOLS[space_group])
        return LatticeSystem(name=system_for_number(space_group),
                             centering=symbol[0].upper(), number=space_group)
    if not isinstance(space_group, str) or not space_group.strip():
        raise SpaceGroupError(f"not a space group: {space_group!r}")

    number = symbol_to_number(space_group)
    if number is not None:
        return LatticeSystem(name=system_for_number(number),
                             centering=normalize_symbol(space_group)[0].upper(),
                             number=number)
    return _classify_symbol_heuristically(space_group)


def _classify_symbol_heuristically(symbol: str) -> LatticeSystem:
    # Variant settings (e.g. "P 1 21/c 1") miss the curated table; fall
    # back to reading the symmetry directions of the symbol itself.
    tokens = symbol.split()
    if len(tokens) < 2:
        compact = normalize_symbol(symbol)
        if len(compact) >= 2:
            tokens = [compact[0], compact[1:]]
        else:
            raise SpaceGroupError(f"unrecognized space group symbol: {symbol!r}")
    centering = tokens[0].upper()
    if centering not in ("P", "A", "B", "C", "I", "F", "R"):
        raise SpaceGroupError(f"unrecognized centering letter in {symbol!r}")
    parts = [t for t in tokens[1:] if t not in ("1", "-1")]
    axis_tokens = tokens[1:]

    def has_digit(tok: str, digit: str) -> bool:
        return digit in tok

    if centering == "R":
        name = "Trigonal"
    elif len(parts) >= 2 and has_digit(parts[1], "3"):
        name = "Cubic"
    elif parts and has_digit(parts[0], "6"):
        name = "Hexagonal"
    elif parts and has_digit(parts[0], "3"):
        name = "Trigonal"
    elif parts and has_digit(parts[0], "4"):
        name = "Tetragonal"
    elif len(parts) >= 3:
        name = "Orthorhombic"
    elif len(parts) == 1:
        name = "Monoclinic"
    elif axis_tokens and all(t in ("1", "-1") for t in axis_tokens):
        name = "Triclinic"
    else:
        raise SpaceGroupError(f"unrecognized space group symbol: {symbol!r}")
    return LatticeSystem(name=name, centering=centering, number=None)


@dataclass
class SymmetryVerdict:
    passed: bool
    violations: list[dict]


def check_cell_symmetry(cell: UnitCell, system: LatticeSystem,
                        tol_len: float = DEFAULT_TOL_LEN,
                        tol_ang: float = DEFAULT_TOL_ANG) -> SymmetryVerdict:
    """Evaluate the lattice system's constraint set on a cell.

    Monoclinic uses the b-unique convention (alpha = gamma = 90).
    Trigonal accepts either the hexagonal or the rhombohedral setting.
    """
    violations: list[dict] = []

    def want_angle(name: str, target: float):
        have = getattr(cell, name)
        if abs(have - target) > tol_ang:
            violations.append({
                "constraint": f"{name} = {target:g}",
                "value": have, "delta": abs(have - target)})

    def want_equal_lengths(n1: str, n2: str):
        v1, v2 = getattr(cell, n1), getattr(cell, n2)
        delta = abs(v1 - v2)
        if delta / max(v1, v2) > tol_len:
            violations.append({
                "constraint": f"{n2} = {n1}",
                "value": v2, "delta": delta})

    name = system.name
    if name == "Triclinic":
        pass
    elif name == "Monoclinic":
        want_angle("alpha", 90.0)
        want_angle("gamma", 90.0)
    elif name == "Orthorhombic":
        for ang in ("alpha", "beta", "gamma"):
            want_angle(ang, 90.0)
    elif name == "Tetragonal":
        want_equal_lengths("a", "b")
        for ang in ("alpha", "beta", "gamma"):
            want_angle(ang, 90.0)
    elif name in ("Trigonal", "Hexagonal"):
        hexagonal_setting = abs(cell.gamma - 120.0) <= max(tol_ang, 1.0)
        if name == "Trigonal" and not hexagonal_setting:
            want_equal_lengths("a", "b")
            want_equal_lengths("a", "c")
            for ang in ("beta", "gamma"):
                have = getattr(cell, ang)
                if abs(have - cell.alpha) > tol_ang:
                    violations.append({
                        "constraint": f"{ang} = alpha",
                        "value": have, "delta": abs(have - cell.alpha)})
        else:
            want_equal_lengths("a", "b")
            want_angle("alpha", 90.0)
            want_angle("beta", 90.0)
            want_angle("gamma", 120.0)
    elif name == "Cubic":
        want_equal_lengths("a", "b")
        want_equal_lengths("a", "c")
        for ang in ("alpha", "beta", "gamma"):
            want_angle(ang, 90.0)
    else:
        raise SpaceGroupError(f"unknown lattice system {name!r}")

    return SymmetryVerdict(passed=not violations, violations=violations)


def bragg_d(wavelength: float, theta: float) -> float:
    """d-spacing from Bragg's law, d = lambda / (2 sin theta)."""
    if wavelength <= 0.0:
        raise CellGeometryError(f"wavelength must be positive: {wavelength}")
    if not 0.0 < theta < 90.0:
        raise CellGeometryError(f"theta outside (0, 90) degrees: {theta}")
    return wavelength / (2.0 * math.sin(math.radians(theta)))


@dataclass
class ResolutionVerdict:
    passed: bool
    achievable_d_min: float
    configured_d_min: float
    message: str


def resolution_consistency(lambda_min: float, lambda_max: float,
                           d_min: float, theta_max: float,
                           tol: float = 1e-9) -> ResolutionVerdict:
    """Check that the configured d_min is reachable inside the wavelength
    window: d_min must be at least lambda_min / (2 sin theta_max)."""
    if lambda_min <= 0.0 or lambda_max <= 0.0:
        raise CellGeometryError("wavelength bounds must be positive")
    if lambda_min >= lambda_max:
        raise CellGeometryError(
            f"wavelength window is empty: [{lambda_min}, {lambda_max}]")
    if not 0.0 < theta_max <= 90.0:
        raise CellGeometryError(f"theta_max outside (0, 90] degrees: {theta_max}")
    achievable = lambda_min / (2.0 * math.sin(math.radians(theta_max)))
    passed = d_min >= achievable - tol
    if passed:
        message = (f"d_min {d_min:g} A is reachable "
                   f"(limit {achievable:.4g} A at theta {theta_max:g} deg)")
    else:
        message = (f"d_min {d_min:g} A is below the reachable limit "
                   f"{achievable:.4g} A; raise d_min to at least "
                   f"{achievable:.4g} A or lower lambda_min")
    return ResolutionVerdict(passed=passed, achievable_d_min=achievable,
                             configured_d_min=d_min, message=message)


@dataclass
class DensityResult:
    grams_per_cm3: float
    plausible: bool


def density(formula: ChemicalFormula, z: int, volume: float) -> DensityResult:
    """Crystal density rho = Z * M / (N_A * V), with V in A^3."""
    if z < 1:
        raise CellGeometryError(f"Z must be a positive integer: {z}")
    if volume <= 0.0:
        raise CellGeometryError(f"volume must be positive: {volume}")
    rho = z * formula.molar_mass / (AVOGADRO * volume * 1e-24)
    lo, hi = DENSITY_PLAUSIBLE
    return DensityResult(grams_per_cm3=rho, plausible=lo <= rho <= hi)


def min_volume_heuristic(formula: ChemicalFormula, z: int) -> float:
    """Minimum plausible cell volume: atom count x Z x 15 A^3."""
    if z < 1:
        raise CellGeometryError(f"Z must be a positive integer: {z}")
    return formula.atom_total * z * MIN_VOLUME_PER_ATOM


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix from a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_realizable_cell(rng: np.random.Generator) -> UnitCell:
    """Random cell guaranteed realizable (rejection sampling on angles)."""
    while True:
        a, b, c = rng.uniform(2.0, 40.0, size=3)
        alpha, beta, gamma = rng.uniform(50.0, 130.0, size=3)
        cell = UnitCell(float(a), float(b), float(c),
                        float(alpha), float(beta), float(gamma))
        if cell.discriminant() > 1e-4:
            return cell
