import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bmvlab import verify as V
from bmvlab.core import InsufficientGrid, SignedMeasure, ValidationError, canonicalize, ingest
from bmvlab.density import TruncationPolicy, build_measure


def test_trace_exp_simple_cases():
    assert V.trace_exp(ingest(np.zeros((3, 3)), [0, 0, 0]), 1.7) == pytest.approx(3.0)
    p = ingest(np.diag([0.3, -1.0, 2.0]), [0, 1, 2])
    assert V.trace_exp(p, 0.8) == pytest.approx(sum(math.exp(a - 0.8 * b) for a, b in zip([0.3, -1, 2], [0, 1, 2])))


def test_trace_exp_matches_series(random_problem):
    for z in (0.0, 1.0, 3.0):
        assert V.trace_exp(random_problem, z) == pytest.approx(V.trace_exp_series(random_problem, z), rel=1e-13)


def test_laplace_atoms_only_and_grid_check():
    m = SignedMeasure(atoms=((0.0, 2.0), (1.0, 0.5)), density_x=np.zeros(0), density_psi=np.zeros(0),
                      density_weights=np.zeros(0), interval=(), support_lo=0, support_hi=1, breakpoints=(0, 1),
                      layout="explicit")
    assert V.laplace_of_measure(m, 1.0) == pytest.approx(2 + 0.5 * math.exp(-1))
    p = ingest([[0, 1, 1], [1, 0, 1], [1, 1, 0]], [0, 2, 1])
    with pytest.raises(InsufficientGrid):
        V.laplace_of_measure(build_measure(p, 16, TruncationPolicy(10)), 0.0)


def test_bernstein(random_problem):
    rep = V.bernstein_checks(random_problem)
    assert rep["signs_ok"]
    assert rep["dphi_fd_rel_error"] <= 1e-6
    assert rep["d2phi_quad_rel_error"] <= 1e-10
    zero_b = ingest([[0, 1, 1], [1, 0, 1], [1, 1, 0]], [0, 0, 0])
    assert all(r["dphi"] == 0 for r in V.bernstein_checks(zero_b, [0, 1])["rows"])


@pytest.mark.parametrize("A,b,reason", [
    ([[0, 1, 1], [1, 0, 1], [1, 1, 0]], [0, 2, 1], "NonnegProduct"),
    ([[0, 1, -1], [1, 0, 1], [-1, 1, 0]], [0, 1, 1], "TwoEigenvalues"),
    ([[0, 1, 0], [1, 0, 0], [0, 0, 0]], [0, 2, 1], "DimLE2"),
    ([[1, 2, 1], [2, 0, -1], [1, -1, 0]], [0, 2, 1], "TheoremTH"),
    ([[0, 1, -1], [1, 0, 1], [-1, 1, 0]], [0, 1, 1 + 1e-12], "DegenerateTie"),
])
def test_certificate_reasons(A, b, reason):
    c = V.certificate(ingest(A, b))
    assert reason in c.reasons and c.verdict == "ProvenPositive"


def test_certificate_unknown_and_commuting():
    c = V.certificate(ingest([[0, 0.1, -1], [0.1, 0, 1], [-1, 1, 0]], [0, 2, 1]))
    assert c.verdict == "Unknown" and c.reasons == ()
    assert "Commuting" in V.certificate(ingest(np.diag([1.0, 2, 3]), [0, 1, 2])).reasons


def test_condition_values_both_forms(example_problem):
    vals = V.certificate(example_problem).condition_values
    assert vals["cond2"] == pytest.approx(vals["cond2_b1_zero"])
    assert vals["cond1_lower"] == pytest.approx(2 / math.sqrt(2) - 1)


def test_polynomial_limit_endpoints():
    assert V.polynomial_limit(0.0) == pytest.approx(-1.0)
    assert V.polynomial_limit(1.0) == pytest.approx(0.0)


def test_counterexample():
    r = V.counterexample(0.1, [0.02, 0.05, 0.5, 0.9])
    assert r["max_abs_diff"] <= 0.5 and r["negative_near_zero"]
    with pytest.raises(ValidationError):
        V.counterexample(0.5)
    with pytest.raises(ValidationError):
        V.counterexample(0.1, [0.0, 0.5])


def test_component_density_laplace():
    # (exp(A - zB))_11 = (exp of A on {1, 3})_11 + int_0^1 e^{-zx} psi_1(x) dx for B = diag(0, 1, 0)
    from bmvlab.hyperfun import gauss_legendre
    eps = 0.2
    A = V.counterexample_matrix(eps)
    sub = A[np.ix_([0, 2], [0, 2])]
    vals, vecs = np.linalg.eigh(sub)
    atom = float((vecs * np.exp(vals)) @ vecs.T[:, 0] @ [1, 0])
    xs, w = gauss_legendre(40)
    dens = [V.component_density(A, x, n_max=12) for x in xs]
    for z in (0.0, 1.0, 3.0):
        M = A - z * np.diag([0, 1, 0])
        ev, U = np.linalg.eigh(M)
        exact = float((U[0] ** 2) @ np.exp(ev))
        got = atom + float(np.dot(w, np.exp(-z * xs) * dens))
        assert got == pytest.approx(exact, rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_invariance_property(seed):
    p = V.random_problems(1, seed=seed)[0]
    rep = V.invariance_checks(p)
    assert rep["max_error"] <= 1e-12


def test_generators():
    for p in V.certified_problems(10):
        c = V.certificate(p)
        assert "TheoremTH" in c.reasons and p.a[0, 1] * p.a[0, 2] * p.a[1, 2] < 0
    for p in V.d2_embedded_problems(5):
        off = [p.a[0, 1], p.a[0, 2], p.a[1, 2]]
        assert sum(1 for v in off if v == 0) >= 2
    ps = V.random_problems(5, seed=1)
    assert all(np.max(np.abs(p.a)) <= 2 for p in ps)
    assert [p.a.tolist() for p in ps] == [p.a.tolist() for p in V.random_problems(5, seed=1)]
