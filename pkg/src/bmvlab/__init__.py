"""Numerical toolkit for BMV measures of 3x3 real symmetric problems.

For A symmetric and B = diag(b) with b >= 0, the function
z -> tr exp(A - zB) is the Laplace transform of a signed measure made of
atoms exp(a_ii) at b_i plus a density between the smallest and largest b.
This package computes that density from loop expansions, checks it against
exact traces and Monte Carlo, and evaluates known positivity certificates.
"""

__version__ = "0.1.0"

from .core import (BMVError, BMVProblem, CanonicalForm, DiagonalMatrix3, NumericalError, SignedMeasure,
                   SymmetricMatrix3, ValidationError, canonicalize, decanonicalize, ingest, load_problem,
                   parse_problem)
from .density import TruncationPolicy, build_measure, psi_bruteforce, psi_le12, psi_le13, select_policy
from .verify import certificate, counterexample, laplace_of_measure, trace_exp

__all__ = [
    "BMVError", "BMVProblem", "CanonicalForm", "DiagonalMatrix3", "NumericalError", "SignedMeasure",
    "SymmetricMatrix3", "ValidationError", "canonicalize", "decanonicalize", "ingest", "load_problem",
    "parse_problem", "TruncationPolicy", "build_measure", "psi_bruteforce", "psi_le12", "psi_le13",
    "select_policy", "certificate", "counterexample", "laplace_of_measure", "trace_exp",
]
