"""Domain types, validation and canonical form of a 3x3 BMV problem.

A problem is a pair (A, B) with A real symmetric and B = diag(b1, b2, b3)
nonnegative.  Its trace function z -> tr exp(A - zB) is the Laplace
transform of a signed measure made of atoms exp(a_i) at b_i plus a density.

The canonical form moves the smallest b to slot 1 and shifts it to zero,
puts the largest b in slot 2 and the middle one in slot 3, so that
0 = b1 < b3 < b2.  Every density routine works in that frame.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


# --------------------------------------------------------------------------
# errors

class BMVError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(BMVError, ValueError):
    """Bad or unsupported input (CLI exit status 2)."""


class NumericalError(BMVError, ArithmeticError):
    """A numerical routine could not reach its accuracy target (exit status 3)."""


class AsymmetricInput(ValidationError):
    pass


class NegativeB(ValidationError):
    pass


class NonFiniteInput(ValidationError):
    pass


class SizeLimit(ValidationError):
    pass


class Infeasible(ValidationError):
    pass


class PoleInC(ValidationError):
    pass


class DegenerateD(ValidationError):
    pass


class Breakpoint(ValidationError):
    pass


class DegenerateB(ValidationError):
    pass


class InsufficientGrid(ValidationError):
    pass


class DegenerateDirection(NumericalError):
    pass


class TruncationFailure(NumericalError):
    pass


class TailBoundExceeded(NumericalError):
    pass


# --------------------------------------------------------------------------
# types

def _frozen_array(values, shape) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SymmetricMatrix3:
    """Real symmetric 3x3 matrix, stored as a read-only array."""

    entries: np.ndarray
    symmetrization_delta: float = 0.0

    def __post_init__(self):
        arr = _frozen_array(self.entries, (3, 3))
        if not np.array_equal(arr, arr.T):
            raise AsymmetricInput("matrix is not exactly symmetric; use ingest()")
        object.__setattr__(self, "entries", arr)

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.entries).copy()

    @property
    def a1(self) -> float:
        return float(self.entries[0, 0])

    @property
    def a2(self) -> float:
        return float(self.entries[1, 1])

    @property
    def a3(self) -> float:
        return float(self.entries[2, 2])

    def array(self) -> np.ndarray:
        return np.array(self.entries)


@dataclass(frozen=True)
class DiagonalMatrix3:
    """Nonnegative diagonal matrix diag(b1, b2, b3)."""

    b: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.b, (3,))
        if np.any(arr < 0):
            raise NegativeB(f"B must be nonnegative, got {arr.tolist()}")
        object.__setattr__(self, "b", arr)

    @property
    def b1(self) -> float:
        return float(self.b[0])

    @property
    def b2(self) -> float:
        return float(self.b[1])

    @property
    def b3(self) -> float:
        return float(self.b[2])

    def array(self) -> np.ndarray:
        return np.diag(self.b)


@dataclass(frozen=True)
class BMVProblem:
    A: SymmetricMatrix3
    B: DiagonalMatrix3

    @property
    def a(self) -> np.ndarray:
        """Matrix A as a fresh float array."""
        return self.A.array()

    @property
    def b(self) -> np.ndarray:
        """Diagonal of B as a fresh float array."""
        return np.array(self.B.b)

    def to_dict(self) -> dict:
        return {"A": self.A.entries.tolist(), "B": self.B.b.tolist()}

    @classmethod
    def from_arrays(cls, A, b, sym_tol: float = 1e-12) -> "BMVProblem":
        return ingest(A, b, sym_tol=sym_tol)


@dataclass(frozen=True)
class CanonicalForm:
    """A problem in the frame 0 = b1 < b3 < b2, plus the way back.

    ``permutation[i]`` is the original (0-based) index sitting in canonical
    slot ``i``.  The original trace equals
    ``mass_scale * exp(-z * b_shift) * trace(canonical)``.
    """

    problem: BMVProblem
    permutation: tuple
    b_shift: float
    a_shift: float
    mass_scale: float
    degenerate: bool
    tie_tol: float
    original: BMVProblem | None = None

    @property
    def b2(self) -> float:
        return self.problem.B.b2

    @property
    def b3(self) -> float:
        return self.problem.B.b3

    def to_original_x(self, x):
        return np.asarray(x, dtype=float) + self.b_shift

    def to_canonical_x(self, x):
        return np.asarray(x, dtype=float) - self.b_shift


@dataclass(frozen=True)
class SignedMeasure:
    """Atoms plus a sampled density.

    ``density_weights`` are quadrature weights attached to the samples so that
    integrals against the density can be done without knowing the grid.
    ``interval`` labels each sample 'lower' (between the two smallest b's) or
    'upper'.
    """

    atoms: tuple
    density_x: np.ndarray
    density_psi: np.ndarray
    density_weights: np.ndarray
    interval: tuple
    support_lo: float
    support_hi: float
    breakpoints: tuple
    skipped: tuple = ()
    tail_bound: float = 0.0
    layout: str = "gauss"
    info: dict = field(default_factory=dict)

    @property
    def density_samples(self):
        return list(zip(self.density_x.tolist(), self.density_psi.tolist()))

    def total_mass(self) -> float:
        atoms = math.fsum(w for _, w in self.atoms)
        return atoms + math.fsum((self.density_weights * self.density_psi).tolist())


# --------------------------------------------------------------------------
# ingestion

def ingest(raw_A, raw_B, sym_tol: float = 1e-12) -> BMVProblem:
    """Validate raw input and return a symmetrized problem.

    A is replaced by (A + A^T)/2; the largest entry of |A - A^T| is kept on
    the matrix as ``symmetrization_delta``.
    """
    A = np.asarray(raw_A, dtype=float)
    b = np.asarray(raw_B, dtype=float)
    if b.shape == (3, 3):
        off = b - np.diag(np.diag(b))
        if np.any(off != 0):
            raise ValidationError("B must be diagonal")
        b = np.diag(b)
    if A.shape != (3, 3):
        raise ValidationError(f"A must be 3x3, got shape {A.shape}")
    if b.shape != (3,):
        raise ValidationError(f"B must have 3 diagonal entries, got shape {b.shape}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise NonFiniteInput("A and B must be finite")
    if np.any(b < 0):
        raise NegativeB(f"B must be nonnegative, got {b.tolist()}")
    delta = float(np.max(np.abs(A - A.T)))
    if delta > sym_tol:
        raise AsymmetricInput(f"max |A - A^T| = {delta:.3g} exceeds sym_tol = {sym_tol:.3g}")
    sym = 0.5 * (A + A.T)
    return BMVProblem(SymmetricMatrix3(sym, delta), DiagonalMatrix3(b))


def _reject_constant(name):
    raise NonFiniteInput(f"non-finite number {name!r} in problem file")


def parse_problem(text: str, sym_tol: float = 1e-12) -> BMVProblem:
    """Parse the JSON problem format {"A": [[...]x3], "B": [b1, b2, b3]}."""
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"problem file is not valid JSON: {exc}") from None
    if not isinstance(data, dict) or "A" not in data or "B" not in data:
        raise ValidationError('problem JSON needs keys "A" and "B"')
    try:
        return ingest(data["A"], data["B"], sym_tol=sym_tol)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"bad matrix data: {exc}") from None


def load_problem(path, sym_tol: float = 1e-12) -> BMVProblem:
    with open(path) as fh:
        return parse_problem(fh.read(), sym_tol=sym_tol)


# --------------------------------------------------------------------------
# canonical form

def default_tie_tol(b) -> float:
    return 1e-9 * (1.0 + float(np.max(b)))


def permute_problem(p: BMVProblem, perm: Sequence[int]) -> BMVProblem:
    """Relabel states: new index i holds old index perm[i]."""
    perm = list(perm)
    A = p.a[np.ix_(perm, perm)]
    return BMVProblem(SymmetricMatrix3(A), DiagonalMatrix3(p.b[perm]))


def shift_problem(p: BMVProblem, a_shift: float = 0.0, b_shift: float = 0.0) -> BMVProblem:
    """Return (A + a_shift I, B + b_shift I)."""
    A = p.a + a_shift * np.eye(3)
    return BMVProblem(SymmetricMatrix3(A), DiagonalMatrix3(p.b + b_shift))


def canonicalize(p: BMVProblem, tie_tol: float | None = None, a_shift: str | float = 0.0) -> CanonicalForm:
    """Bring ``p`` to the frame 0 = b1 < b3 < b2.

    ``a_shift`` is either a number, or the string "max" to subtract the
    largest diagonal entry of A (keeps exp(a_i) from overflowing).
    """
    b = p.b
    if tie_tol is None:
        tie_tol = default_tie_tol(b)
    order = np.argsort(b, kind="stable")
    lo, mid, hi = (int(i) for i in order)
    perm = (lo, hi, mid)
    b_shift = float(b[lo])
    if isinstance(a_shift, str):
        if a_shift != "max":
            raise ValidationError(f"unknown a_shift mode {a_shift!r}")
        a_shift = float(np.max(np.diag(p.a)))
    a_shift = float(a_shift)

    A = p.a[np.ix_(perm, perm)] - a_shift * np.eye(3)
    bc = b[list(perm)] - b_shift
    bc[0] = 0.0
    gaps = (bc[2] - bc[0], bc[1] - bc[2])
    degenerate = bool(min(gaps) <= tie_tol)
    problem = BMVProblem(SymmetricMatrix3(A), DiagonalMatrix3(bc))
    return CanonicalForm(
        problem=problem,
        permutation=perm,
        b_shift=b_shift,
        a_shift=a_shift,
        mass_scale=math.exp(a_shift),
        degenerate=degenerate,
        tie_tol=float(tie_tol),
        original=p,
    )


def decanonicalize(cf: CanonicalForm) -> BMVProblem:
    """Undo :func:`canonicalize` and return the original problem."""
    inv = np.argsort(cf.permutation)
    A = cf.problem.a[np.ix_(inv, inv)] + cf.a_shift * np.eye(3)
    b = cf.problem.b[inv] + cf.b_shift
    return BMVProblem(SymmetricMatrix3(A), DiagonalMatrix3(b))
