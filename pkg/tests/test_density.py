import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bmvlab import density as D
from bmvlab.core import Breakpoint, DegenerateB, TailBoundExceeded, ValidationError, canonicalize, ingest
from bmvlab.hyperfun import gauss_legendre
from bmvlab.verify import laplace_of_measure, trace_exp


def _problem(seed):
    rng = np.random.default_rng(seed)
    A = rng.uniform(-2, 2, (3, 3))
    A = np.triu(A) + np.triu(A, 1).T
    b3 = rng.uniform(0.2, 2.6)
    return ingest(A, [0, rng.uniform(b3 + 0.2, 3.0), b3])


def test_simplex_density_normalized():
    # beta(k) normalizes against d xi1 d xi2 on the projected simplex
    k, a = (2, 3, 1), (0.0, 0.0, 0.0)
    s, w = gauss_legendre(40)
    total = 0.0
    for si, wi in zip(s, w):
        for ti, vi in zip(s, w):
            x1, x2 = si, (1 - si) * ti
            total += wi * vi * (1 - si) * D.simplex_f((x1, x2, 1 - x1 - x2), k, a)
    assert total == pytest.approx(1.0, rel=1e-10)


def test_phi_is_a_probability_density():
    # with a = 0 a loop of n jumps carries mass 1/n!, the volume of the time simplex
    b2, b3 = 2.0, 0.8
    for k, s in (((2, 1, 1), 1), ((1, 2, 3), 3), ((3, 0, 1), 1), ((2, 2, 0), 2)):
        tot = 0.0
        xs, w = gauss_legendre(48, 0, b3)
        tot += sum(wi * D.phi_frame(k, s, x, (0, 0, 0), b2, b3) for x, wi in zip(xs, w))
        cf = canonicalize(ingest(np.zeros((3, 3)), [0, b2, b3]))
        xs, w = gauss_legendre(48, b3, b2)
        tot += sum(wi * D.phi(k, s, x, cf) for x, wi in zip(xs, w))
        assert tot * math.factorial(sum(k)) == pytest.approx(1.0, abs=1e-8), k


def test_chi_series_matches_quadrature():
    cf = canonicalize(_problem(3))
    for k in ((1, 1, 1), (2, 3, 1), (3, 1, 4), (2, 0, 2), (3, 3, 0)):
        for x in (0.3 * cf.b3, 0.8 * cf.b3, cf.b3 + 0.5 * (cf.b2 - cf.b3)):
            q = D.chi(k, x, cf, method="quadrature")
            s = D.chi(k, x, cf, method="series")
            assert abs(q - s) <= 1e-10 * max(1.0, abs(q))


def test_routes_agree():
    for seed in range(4):
        cf = canonicalize(_problem(seed))
        tp = D.TruncationPolicy(10)
        for x in np.concatenate([np.linspace(0, cf.b3, 6)[1:-1], np.linspace(cf.b3, cf.b2, 6)[1:-1]]):
            pb = D.psi_bruteforce(x, cf, tp)
            assert D.psi_le12(x, cf, tp) == pytest.approx(pb, rel=1e-10, abs=1e-14)
            assert D.psi_le13(x, cf, tp) == pytest.approx(pb, rel=1e-8, abs=1e-12)
            assert D.psi_bruteforce(x, cf, tp, multiplicity="enumerate") == pytest.approx(pb, rel=1e-12)


def test_breakpoints_and_degenerate():
    cf = canonicalize(_problem(1))
    with pytest.raises(Breakpoint):
        D.psi_le12(cf.b3, cf)
    with pytest.raises(ValidationError):
        D.psi_le12(cf.b2 + 0.1, cf)
    with pytest.raises(DegenerateB):
        D.build_measure(ingest(np.ones((3, 3)), [0, 1, 1]))


def test_tail_bound_decreases_and_policy():
    cf = canonicalize(_problem(2))
    bounds = [D.tail_bound(cf, n) for n in (10, 15, 20, 25)]
    assert all(a > b for a, b in zip(bounds, bounds[1:]))
    tp = D.select_policy(cf, 1e-10)
    assert D.tail_bound(cf, tp.n_max) <= 1e-10
    assert tp.n_max == 2 or D.tail_bound(cf, tp.n_max - 1) > 1e-10
    with pytest.raises(TailBoundExceeded):
        D.build_measure(_problem(2), 8, D.TruncationPolicy(4, tol=1e-12))


def test_tail_bound_dominates_truncation_error():
    p = _problem(5)
    cf = canonicalize(p)
    x = 0.5 * cf.b3
    ref = D.psi_le12(x, cf, D.TruncationPolicy(34))
    for n in (8, 12, 16):
        assert abs(D.psi_le12(x, cf, D.TruncationPolicy(n)) - ref) <= D.tail_bound(cf, n)


def test_measure_laplace_round_trip():
    for seed in (0, 7):
        p = _problem(seed)
        tp = D.select_policy(canonicalize(p), 1e-10)
        m = D.build_measure(p, 64, tp)
        for z in (0.0, 1.0, 5.0):
            assert laplace_of_measure(m, z) == pytest.approx(trace_exp(p, z), rel=1e-9)


def test_measure_in_original_frame():
    p0 = _problem(4)
    perm = [2, 0, 1]
    p = ingest(p0.a[np.ix_(perm, perm)], p0.b[perm] + 0.75)
    tp = D.select_policy(canonicalize(p), 1e-10)
    m = D.build_measure(p, 64, tp)
    assert m.support_lo == pytest.approx(0.75) and m.support_hi == pytest.approx(max(p.b))
    assert sorted(w for _, w in m.atoms) == pytest.approx(sorted(np.exp(np.diag(p.a))))
    assert m.total_mass() == pytest.approx(trace_exp(p, 0), rel=1e-9)
    assert laplace_of_measure(m, 2.0) == pytest.approx(trace_exp(p, 2.0), rel=1e-9)


def test_explicit_grid_skips_breakpoints():
    p = _problem(6)
    cf = canonicalize(p)
    xs = [0.0, 0.5 * cf.b3, cf.b3, 0.5 * (cf.b3 + cf.b2), cf.b2]
    m = D.build_measure(p, xs, D.TruncationPolicy(12))
    assert len(m.density_x) == 2 and len(m.skipped) == 3
    assert m.layout == "explicit"


def test_d2_embedded_terms_nonnegative():
    # with a13 = a23 = 0 only loops on {1, 2} survive and every term is >= 0
    p = ingest([[0.3, -1.5, 0], [-1.5, -0.2, 0], [0, 0, 1.0]], [0, 2.0, 0.7])
    cf = canonicalize(p)
    for x in (0.2, 0.6, 1.2, 1.8):
        terms, _ = D.psi_terms(x, cf, D.TruncationPolicy(12))
        assert np.min(terms) >= 0


@settings(max_examples=15, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(0.05, 0.95))
def test_nonneg_product_gives_nonneg_density(a12, a13, a23, frac):
    sign = 1 if a12 * a13 * a23 >= 0 else -1
    A = np.array([[0.1, a12, a13], [a12, -0.3, a23 * sign], [a13, a23 * sign, 0.2]])
    cf = canonicalize(ingest(A, [0, 2.0, 1.0]))
    x = frac * 2.0
    if abs(x - 1.0) < 1e-6:
        return
    assert D.psi_le12(x, cf, D.TruncationPolicy(14)) >= -1e-12


def test_tail_bound_tiny_coupling():
    A = np.array([[0, 0, 0], [0, 0, 1e-117], [0, 1e-117, 0]])
    cf = canonicalize(ingest(A, [0, 2.0, 1.0]))
    assert D.tail_bound(cf, 10) == 0.0
    assert D.select_policy(cf, 1e-10).n_max == 2
