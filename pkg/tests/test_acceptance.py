"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line with the measured quantity; the lines are
printed in the terminal summary (and to stdout for ``-s`` runs).
"""

import time
from collections import Counter

import numpy as np
import pytest

from bmvlab import density as D, hyperfun as H, mcsim as M, paths as P, verify as V
from bmvlab.core import canonicalize, decanonicalize, permute_problem, shift_problem
from bmvlab.hyperfun import gauss_legendre

from conftest import ACCEPTANCE_LINES

MASTER_SEED = 20240601


def report(num, ok, text):
    line = f"{'PASS' if ok else 'FAIL'} criterion {num:2d}: {text}"
    ACCEPTANCE_LINES[num] = line
    print(line)
    assert ok, line


def _grid(cf, per_interval):
    lo = np.linspace(0, cf.b3, per_interval + 2)[1:-1]
    hi = np.linspace(cf.b3, cf.b2, per_interval + 2)[1:-1]
    return np.concatenate([lo, hi])


def test_criterion_01_path_count_table():
    t0 = time.perf_counter()
    table = {(1, 0, 0): 1, (1, 1, 1): 2, (1, 2, 2): 1, (2, 4, 0): 1}
    got = {key: P.count_paths(*key)[0] for key in table}
    dt = time.perf_counter() - t0
    report(1, got == table and dt < 1.0, f"P1 table {got} in {dt:.3f} s")


def test_criterion_02_counts_vs_enumeration():
    t0 = time.perf_counter()
    mismatches = []
    sums_ok = True
    checked = 0
    for n in range(2, 13):
        p1 = Counter()
        total = Counter()
        k1_zero = 0
        for gamma in P.iter_paths(3, n):
            k, l, s = P.path_stats(gamma)
            if k.k1 == 0:
                k1_zero += 1
                continue
            key = (k.k1, l.l13, l.l23)
            total[key] += 1
            if s == 1:
                p1[key] += 1
        for k in range(1, n // 2 + 1):
            m = n - 2 * k
            for l in range(0, n + 1):
                c1, c = P.count_paths(k, l, m)
                checked += 1
                if (c1, c) != (p1[(k, l, m)], total[(k, l, m)]):
                    mismatches.append((k, l, m))
        groups = [g for g in P.path_groups(n, include_k1_zero=True) if g.k.n == n]
        sums_ok &= sum(g.count for g in groups) == P.cycle_count(3, n)
        sums_ok &= k1_zero == (2 if n % 2 == 0 else 0)
    dt = time.perf_counter() - t0
    report(2, not mismatches and sums_ok and dt < 60,
           f"{checked} (k,l,m) with n <= 12 exact, sum P = |C_n| {sums_ok}, {dt:.1f} s")


def test_criterion_03_hypergeometric_suite():
    t0 = time.perf_counter()
    reps = {name: fn() for name, fn in H.SUITES.items()}
    limits = {"gauss": 1e-12, "pfaff": 1e-12, "lemma5": 1e-10, "lebasic": 1e-8}
    ok = all(reps[k]["max_error"] <= v for k, v in limits.items())
    lr = reps["lereps"]
    ok &= lr["route_error"] <= 1e-9 and lr["reconstruction_error"] <= 1e-9
    tilde_min = min(lr["minima"]["S_tilde"], lr["minima"]["T_tilde"], reps["lebasic"]["min_A_tilde"])
    ok &= tilde_min >= -1e-12
    dt = time.perf_counter() - t0
    ok &= dt < 120
    errs = ", ".join(f"{k} {reps[k]['max_error']:.1e}" for k in limits)
    report(3, ok, f"{errs}, routes {lr['route_error']:.1e}, reconstruction {lr['reconstruction_error']:.1e}, "
                  f"min tilde kernels {tilde_min:.1e}, {dt:.1f} s")


def test_criterion_04_route_equivalence():
    t0 = time.perf_counter()
    tp = D.TruncationPolicy(10)
    worst12 = worst13 = 0.0
    for p in V.random_problems(50, seed=MASTER_SEED + 4):
        cf = canonicalize(p)
        for x in _grid(cf, 20):
            pb = D.psi_bruteforce(x, cf, tp)
            denom = abs(pb) if pb != 0 else 1.0
            worst12 = max(worst12, abs(D.psi_le12(x, cf, tp) - pb) / denom)
            worst13 = max(worst13, abs(D.psi_le13(x, cf, tp) - pb) / denom)
    dt = time.perf_counter() - t0
    report(4, worst12 <= 1e-10 and worst13 <= 1e-8 and dt < 600,
           f"le12 rel {worst12:.1e}, le13 rel {worst13:.1e} on 50 x 40 points, {dt:.1f} s")


def test_criterion_05_laplace_round_trip():
    t0 = time.perf_counter()
    worst = 0.0
    n_used = []
    for p in V.random_problems(20, seed=MASTER_SEED + 5):
        r = V.laplace_roundtrip(p, tol=1e-10, n_cap=30)
        worst = max(worst, r["max_error"])
        n_used.append(r["n_max"])
    dt = time.perf_counter() - t0
    report(5, worst <= 1e-5 and max(n_used) <= 30 and dt < 600,
           f"max relative error {worst:.1e} over 20 problems, n_max {min(n_used)}-{max(n_used)}, {dt:.1f} s")


def test_criterion_06_certified_positivity():
    t0 = time.perf_counter()
    worst = np.inf
    for p in V.certified_problems(100, seed=MASTER_SEED + 6):
        cf = canonicalize(p)
        tp = D.select_policy(cf, 1e-10)
        vals = D.psi_values(_grid(cf, 20), cf, tp)
        worst = min(worst, float(np.min(vals)) / (1 + float(np.max(np.abs(vals)))))
    terms_min = np.inf
    for p in V.d2_embedded_problems(20, seed=MASTER_SEED + 7):
        cf = canonicalize(p)
        for x in _grid(cf, 10):
            terms, _ = D.psi_terms(x, cf, D.TruncationPolicy(16))
            terms_min = min(terms_min, float(np.min(terms)))
    dt = time.perf_counter() - t0
    report(6, worst >= -1e-9 and terms_min >= 0,
           f"min psi/(1+max|psi|) {worst:.2e} on 100 problems, min embedded term {terms_min:.1e}, {dt:.1f} s")


def test_criterion_07_bernstein_signs():
    t0 = time.perf_counter()
    signs = True
    fd = 0.0
    for p in V.random_problems(20, seed=MASTER_SEED + 8):
        rep = V.bernstein_checks(p, np.linspace(0, 10, 101))
        signs &= rep["signs_ok"]
        fd = max(fd, rep["dphi_fd_rel_error"])
    dt = time.perf_counter() - t0
    report(7, signs and fd <= 1e-6, f"signs hold on [0, 10] for 20 problems, phi' fd rel {fd:.1e}, {dt:.1f} s")


def test_criterion_08_counterexample():
    t0 = time.perf_counter()
    eps = 0.1
    xs = np.linspace(0.01, 0.99, 99)
    r = V.counterexample(eps, xs, n_max=8)
    near = xs <= 0.05
    neg = bool(np.all(r["scaled"][near] < 0))
    dt = time.perf_counter() - t0
    report(8, r["max_abs_diff"] <= 5 * eps and neg,
           f"max |12 psi_1/eps^4 - poly| {r['max_abs_diff']:.2e} <= {5 * eps}, negative for x <= 0.05 {neg}, "
           f"value at 0.01 {r['scaled'][0]:.4f}, {dt:.1f} s")


def test_criterion_09_monte_carlo():
    t0 = time.perf_counter()
    cfg = M.MCConfig(samples=1_000_000, seed=42)
    problems = V.random_problems(10, seed=MASTER_SEED + 9)
    worst_fk = 0.0
    for p in problems:
        for z in (0.0, 0.7):
            est, se = M.fk_trace_estimate(p, z, cfg)
            worst_fk = max(worst_fk, abs(est - V.trace_exp(p, z)) / se)
    worst_h = 0.0
    for p in problems[:3]:
        cf = canonicalize(p)
        tp = D.select_policy(cf, 1e-10)
        h = M.density_histogram(p, 8, cfg)
        for lo, hi, e, s in zip(h.edges[:-1], h.edges[1:], h.estimate, h.std_error):
            x, w = gauss_legendre(16, lo - cf.b_shift, hi - cf.b_shift)
            avg = float(np.dot(w, D.psi_values(x, cf, tp))) / (hi - lo)
            worst_h = max(worst_h, abs(e - avg) / s)
    dt = time.perf_counter() - t0
    report(9, worst_fk <= 3 and worst_h <= 3 and dt < 300,
           f"trace max {worst_fk:.2f} se (10 problems x 2 z), histogram max {worst_h:.2f} se (3 x 8 bins), {dt:.1f} s")


def test_criterion_10_invariance():
    t0 = time.perf_counter()
    worst = 0.0
    rt = 0.0
    rng = np.random.default_rng(MASTER_SEED + 10)
    for p in V.random_problems(30, seed=MASTER_SEED + 10):
        worst = max(worst, V.invariance_checks(p)["max_error"])
        q = shift_problem(permute_problem(p, rng.permutation(3)), b_shift=float(rng.uniform(0, 2)))
        for shift in (0.0, "max"):
            back = decanonicalize(canonicalize(q, a_shift=shift))
            rt = max(rt, float(np.max(np.abs(back.a - q.a))), float(np.max(np.abs(back.b - q.b))))
    dt = time.perf_counter() - t0
    report(10, worst <= 1e-12 and rt <= 1e-12, f"trace-level invariance {worst:.1e}, round trip {rt:.1e}, {dt:.1f} s")
