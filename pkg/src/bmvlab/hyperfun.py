"""Rising factorials, terminating Gauss series and the A / T / S kernels.

The kernels are double power series in (v, xi),

    A_r(k; v, xi) = sum_m sum_j C(k, j) 2^(k+r-1) ((m-j+2)/2)_(k+r-1)
                    / (m+1)_(k+2r-1) v^j xi^m / m!

    T(k, r, rho; v, xi) = sum_m sum_j C(k, j) 2^(k+r-rho-1) ((m-j+2)/2)_(k+r-rho-1)
                    / (m+1)_(k+r-1) (k-j)!/(k-j-rho)! v^j xi^m / m!

and S is the binomial inverse of T in the rho index.  A also has an
integral form in s on [0, 1], used as an independent cross-check.  The
"tilde" versions are the even parts under (v, xi) -> (-v, -xi); on the
series they keep only terms with j = m (mod 2).
"""

from __future__ import annotations

import math
from functools import lru_cache
from fractions import Fraction
from math import comb, factorial, fsum

import numpy as np

from .core import DegenerateD, PoleInC, TruncationFailure, ValidationError

M_CAP = 400
SERIES_TOL = 1e-12


def rising(x: float, n: int) -> float:
    """Pochhammer symbol (x)_n = x (x+1) ... (x+n-1) for integer n >= 0."""
    if n < 0:
        raise ValidationError("rising() needs n >= 0")
    out = 1.0
    for i in range(n):
        out *= x + i
    return out


def falling_int(a: int, b: int) -> int:
    """a! / (a-b)!, zero when b > a."""
    if b < 0:
        raise ValidationError("falling_int needs b >= 0")
    if b > a:
        return 0
    return math.perm(a, b)


def gamma_value(x: float) -> float:
    """Gamma function; half-integers go through the sqrt(pi) recursion."""
    two_x = 2.0 * x
    if two_x == round(two_x):
        n2 = int(round(two_x))
        if n2 <= 0 and n2 % 2 == 0:
            raise PoleInC(f"Gamma has a pole at {x}")
        if n2 % 2 == 0:
            return float(factorial(n2 // 2 - 1))
        # Gamma(1/2) = sqrt(pi), Gamma(y+1) = y Gamma(y)
        g = math.sqrt(math.pi)
        y = 0.5
        if x >= 0.5:
            while y < x:
                g *= y
                y += 1.0
        else:
            while y > x:
                y -= 1.0
                g /= y
        return g
    return math.gamma(x)


def _is_nonpos_int(x: float) -> bool:
    return x <= 0 and float(x) == math.floor(x)


def hyp2f1_terminating(a: int, b: float, c: float, z: float, exact: bool = False) -> float:
    """2F1(a, b; c; z) for a nonpositive integer a, as a finite sum.

    The default sums in double precision with fsum.  ``exact=True`` converts
    the (binary) inputs to rationals and sums without rounding, which is
    useful when the terms cancel heavily.
    """
    if not _is_nonpos_int(a):
        raise ValidationError(f"a must be a nonpositive integer, got {a}")
    n_terms = -int(a)
    if _is_nonpos_int(b):
        n_terms = min(n_terms, -int(b))
    if exact:
        a, b, c, z = (Fraction(x) for x in (a, b, c, z))
        t = Fraction(1)
    else:
        t = 1.0
    terms = [t]
    for n in range(n_terms):
        if c + n == 0:
            raise PoleInC(f"(c)_{n + 1} vanishes for c = {c}")
        t = t * (a + n) * (b + n) / ((c + n) * (n + 1)) * z
        terms.append(t)
    if exact:
        return float(sum(terms))
    return fsum(terms)


def gauss_sum(a: int, b: float, c: float) -> float:
    """Gamma(c) Gamma(c-a-b) / (Gamma(c-a) Gamma(c-b)), the value of 2F1 at z = 1.

    For a = -n the ratio equals (c-b)_n / (c)_n, which is used when c - b
    sits on a pole of Gamma.
    """
    try:
        return gamma_value(c) * gamma_value(c - a - b) / (gamma_value(c - a) * gamma_value(c - b))
    except PoleInC:
        if not _is_nonpos_int(a) or _is_nonpos_int(c):
            raise
        n = int(-a)
        return rising(c - b, n) / rising(c, n)


def pfaff_check(a: int, b: float, c: float, z: float) -> tuple:
    """Both sides of F(a,b;c;z) = (1-z)^(-a) F(a, c-b; c; z/(z-1))."""
    if z >= 1:
        raise ValidationError("Pfaff transformation needs z < 1")
    lhs = hyp2f1_terminating(a, b, c, z)
    rhs = (1.0 - z) ** (-a) * hyp2f1_terminating(a, c - b, c, z / (z - 1.0))
    return lhs, rhs


# --------------------------------------------------------------------------
# double series

def _signed_rising(x: float, n: int) -> float:
    if n >= 0:
        return rising(x, n)
    out = 1.0
    for i in range(1, -n + 1):
        out /= x - i
    return out


@lru_cache(maxsize=200_000)
def _coeff(k: int, p: int, q: int, rho: int, j: int, m: int) -> float:
    """C(k,j) 2^p ((m-j+2)/2)_p / (m+1)_q * (k-j)!/(k-j-rho)! / m!."""
    ff = falling_int(k - j, rho)
    if ff == 0:
        return 0.0
    if p == -1 and q == -1:
        # A_0(0) and T(0,0,0): the ratio tends to 1 for every m
        return 1.0 / factorial(m)
    num = comb(k, j) * 2.0 ** p * _signed_rising((m - j + 2) / 2, p) * ff
    return num / (_signed_rising(m + 1, q) * factorial(m))


def _double_series(k, p, q, rho, v, xi, parity, tol, m_cap):
    v = float(v)
    xi = float(xi)
    js = range(k + 1)
    vpow = [v ** j for j in js]
    deg = k + 2 * max(p, q, 0)
    m_min = int(math.ceil(2.0 * abs(xi))) + deg + 2
    terms = []
    abs_total = 0.0
    prev_block = math.inf
    xm = 1.0
    for m in range(m_cap + 1):
        if m > 0:
            xm *= xi
        block = []
        for j in js:
            if parity and (j - m) % 2:
                continue
            c = _coeff(k, p, q, rho, j, m)
            if c:
                block.append(c * vpow[j] * xm)
        terms.extend(block)
        size = fsum(abs(t) for t in block)
        abs_total += size
        if m >= m_min:
            partial = abs(fsum(terms))
            scale = max(partial, 1e-16 * abs_total)
            if 10.0 * (size + prev_block) <= tol * scale or abs_total == 0.0:
                return fsum(terms)
        prev_block = size
    raise TruncationFailure(f"series for (k={k}, p={p}, q={q}, rho={rho}, xi={xi}) did not converge by m={m_cap}")


def _check_kr(k, r):
    if k < 0 or r < 0 or int(k) != k or int(r) != r:
        raise ValidationError("k and r must be nonnegative integers")


def A_series(k: int, r: int, v: float, xi: float, tilde: bool = False, tol=SERIES_TOL, m_cap=M_CAP) -> float:
    _check_kr(k, r)
    return _double_series(k, k + r - 1, k + 2 * r - 1, 0, v, xi, tilde, tol, m_cap)


# --------------------------------------------------------------------------
# integral forms

@lru_cache(maxsize=16)
def gauss_legendre(order: int, lo: float = 0.0, hi: float = 1.0) -> tuple:
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (hi - lo)
    nodes = lo + half * (x + 1.0)
    weights = half * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _integrand_poly(k, r, v, s):
    """Polynomial part of the integral form of A_r(k), as a function of s."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    g = (1.0 - v * v) / 2.0
    h = (1.0 - s * s) / 2.0
    base = 1.0 + s * v
    if r >= 1:
        for ell in range(k // 2 + 1):
            c = factorial(k) / (factorial(ell) * factorial(ell + r - 1) * factorial(k - 2 * ell))
            out += c * base ** (k - 2 * ell) * g ** ell * h ** (ell + r - 1)
    else:
        for ell in range(max(k - 2, -1) // 2 + 1):
            if k - 2 * ell - 2 < 0:
                break
            c = factorial(k) / (factorial(ell) * factorial(ell + 1) * factorial(k - 2 * ell - 2))
            out += c * base ** (k - 2 * ell - 2) * g ** (ell + 1) * h ** ell
    return out


def A_integral(k: int, r: int, v: float, xi: float, tilde: bool = False, order: int = 64) -> float:
    """A_r(k) from its integral representation in s.

    For r >= 1 the integrand is sum_l k!/(l!(l+r-1)!(k-2l)!) (1+sv)^(k-2l)
    ((1-v^2)/2)^l ((1-s^2)/2)^(l+r-1) e^(s xi) on [0, 1].  For r = 0 there is
    an extra boundary term (1+v)^k e^xi.  The tilde version integrates over
    [-1, 1] with a factor 1/2, since the integrand is invariant under
    (s, v) -> (-s, -v).
    """
    _check_kr(k, r)
    lo = -1.0 if tilde else 0.0
    s, w = gauss_legendre(order, lo, 1.0)
    vals = _integrand_poly(k, r, v, s) * np.exp(s * xi)
    total = fsum((w * vals).tolist())
    if r == 0:
        if tilde:
            total += (1.0 + v) ** k * math.exp(xi) + (1.0 - v) ** k * math.exp(-xi)
        else:
            total += (1.0 + v) ** k * math.exp(xi)
    return 0.5 * total if tilde else total


def A_kernel(k: int, r: int, v: float, xi: float, method: str = "series", **kw) -> float:
    if method == "series":
        return A_series(k, r, v, xi, **kw)
    if method == "integral":
        return A_integral(k, r, v, xi, **kw)
    raise ValidationError(f"unknown method {method!r}")


def A_tilde(k: int, r: int, v: float, xi: float, method: str = "series", **kw) -> float:
    """Even part (A_r(k; v, xi) + A_r(k; -v, -xi)) / 2."""
    return A_kernel(k, r, v, xi, method=method, tilde=True, **kw)


# --------------------------------------------------------------------------
# T and S

def _check_rho(k, r, rho):
    _check_kr(k, r)
    if not 0 <= rho <= r:
        raise ValidationError(f"need 0 <= rho <= r, got rho={rho}, r={r}")


def T_kernel(k: int, r: int, rho: int, v: float, xi: float, tilde: bool = False, tol=SERIES_TOL, m_cap=M_CAP) -> float:
    _check_rho(k, r, rho)
    if rho > k:
        return 0.0
    return _double_series(k, k + r - rho - 1, k + r - 1, rho, v, xi, tilde, tol, m_cap)


def T_tilde(k, r, rho, v, xi, **kw) -> float:
    return T_kernel(k, r, rho, v, xi, tilde=True, **kw)


def involution_weight(n: int, a: int) -> int:
    """C(n, 2a) (2a)! / (2^a a!): ways to pick a disjoint pairs out of n."""
    if 2 * a > n:
        return 0
    return comb(n, 2 * a) * factorial(2 * a) // (2 ** a * factorial(a))


def S_kernel(k: int, r: int, rho: int, v: float, xi: float, route: str = "kernel",
             tilde: bool = False, method: str = "series", **kw) -> float:
    """S(k, r, rho; v, xi) by one of two routes.

    route="alternating": sum_tau (-1)^tau C(r-rho, tau) T(k, r, rho+tau), the
        binomial inverse of T(rho) = sum_tau C(r-rho, tau) S(rho+tau).
    route="kernel": k!/(k-rho)! sum_a C(r-rho, 2a) (2a)!/(2^a a!) A_(a+rho)(k-rho),
        which has only nonnegative weights.
    """
    _check_rho(k, r, rho)
    if rho > k:
        return 0.0
    if route == "alternating":
        terms = [(-1) ** tau * comb(r - rho, tau) * T_kernel(k, r, rho + tau, v, xi, tilde=tilde, **kw)
                 for tau in range(r - rho + 1)]
        return fsum(terms)
    if route == "kernel":
        ff = falling_int(k, rho)
        terms = [involution_weight(r - rho, a) * A_kernel(k - rho, a + rho, v, xi, method=method, tilde=tilde, **kw)
                 for a in range((r - rho) // 2 + 1)]
        return ff * fsum(terms)
    raise ValidationError(f"unknown route {route!r}")


def S_tilde(k, r, rho, v, xi, **kw) -> float:
    return S_kernel(k, r, rho, v, xi, tilde=True, **kw)


def T_from_S(k, r, rho, v, xi, tilde: bool = False, **kw) -> float:
    """T rebuilt as sum_tau C(r-rho, tau) S(k, r, rho+tau)."""
    return fsum(comb(r - rho, tau) * S_kernel(k, r, rho + tau, v, xi, tilde=tilde, **kw)
                for tau in range(r - rho + 1))


def resummation_identity(j: int, k: int, m: int, r: int, C: float, D: float) -> tuple:
    """Both sides of the resummation identity behind the triple sum.

    lhs = 2^j sum_{l >= j, l = j mod 2} C(k-j, (l-j)/2) ((2k+m-l)/2)_r C^l D^(2k-l)
    rhs = (C^2+D^2)^k v^j sum_rho (-1)^rho C(r, rho) ((2k+m-j)/2)_(r-rho)
          (k-j)!/(k-j-rho)! (C v / (2D))^rho,   v = 2CD/(C^2+D^2)
    """
    if (j - m) % 2:
        raise ValidationError("need j = m (mod 2)")
    if not 0 <= j <= k:
        raise ValidationError("need 0 <= j <= k")
    lhs_terms = []
    for l in range(j, 2 * k - j + 1, 2):
        lhs_terms.append(comb(k - j, (l - j) // 2) * rising((2 * k + m - l) / 2, r) * C ** l * D ** (2 * k - l))
    lhs = 2.0 ** j * fsum(lhs_terms)
    if D == 0:
        raise DegenerateD(f"rhs undefined for D = 0 (lhs = {lhs!r})")
    ss = C * C + D * D
    if ss == 0:
        raise DegenerateD("C^2 + D^2 must be positive")
    v = 2.0 * C * D / ss
    rhs_terms = [(-1) ** rho * comb(r, rho) * rising((2 * k + m - j) / 2, r - rho) * falling_int(k - j, rho)
                 * (C * v / (2.0 * D)) ** rho for rho in range(r + 1)]
    rhs = ss ** k * v ** j * fsum(rhs_terms)
    return lhs, rhs


# --------------------------------------------------------------------------
# identity suites (used by the CLI and the acceptance tests)

V_GRID = (-1.0, -0.5, 0.0, 0.5, 1.0)
XI_GRID = (-2.0, -0.5, 0.0, 0.5, 2.0)


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def suite_gauss() -> dict:
    """Terminating series at z = 1 against the Gamma ratio.

    ``max_error`` uses exact rational summation; ``max_error_double`` is the
    plain double-precision sum, which loses digits to cancellation on part
    of the grid.
    """
    Fr = Fraction
    b_vals = [Fr(1, 2), Fr(1), Fr(3, 2), Fr(7, 3), Fr(3), Fr(-1, 2)]
    c_vals = [Fr(1, 3), Fr(5, 2), Fr(4), Fr(13, 2), Fr(10), Fr(-7, 2)]
    worst, worst_double, cases = 0.0, 0.0, 0
    for a in range(-1, -7, -1):
        for b in b_vals:
            for c in c_vals:
                if c - a - b <= 0:
                    continue
                bad = [c, c - a, c - b, c - a - b]
                if any(x <= 0 and x.denominator == 1 for x in bad):
                    continue
                ref = gauss_sum(a, float(b), float(c))
                series = hyp2f1_terminating(a, float(b), float(c), 1.0, exact=True)
                worst = max(worst, _rel(series, ref))
                series = hyp2f1_terminating(a, float(b), float(c), 1.0)
                worst_double = max(worst_double, _rel(series, ref))
                cases += 1
    return {"suite": "gauss", "cases": cases, "max_error": worst, "max_error_double": worst_double,
            "tolerance": 1e-12}


PFAFF_GRID = [(0, 2.0, 3.0, 0.5), (-1, 2.0, 5.0, 0.5), (-3, 1.5, 4.0, -2.0), (-2, 0.5, 2.5, 0.3),
              (-4, -1.5, 3.5, -0.75), (-5, 2.25, 6.0, 0.9), (-6, 1.0, 7.5, -3.0)]


def suite_pfaff() -> dict:
    worst = 0.0
    for a, b, c, z in PFAFF_GRID:
        lhs, rhs = pfaff_check(a, b, c, z)
        worst = max(worst, _rel(lhs, rhs))
    return {"suite": "pfaff", "cases": len(PFAFF_GRID), "max_error": worst, "tolerance": 1e-12}


def suite_lemma5() -> dict:
    worst, cases = 0.0, 0
    for k in range(0, 6):
        for j in range(0, k + 1):
            for m in range(j % 2, 6, 2):
                for r in range(0, 4):
                    for C, D in ((0.7, 1.3), (-0.4, 0.9), (1.5, -0.6)):
                        lhs, rhs = resummation_identity(j, k, m, r, C, D)
                        worst = max(worst, abs(lhs - rhs) / (1.0 + abs(lhs)))
                        cases += 1
    return {"suite": "lemma5", "cases": cases, "max_error": worst, "tolerance": 1e-10}


def suite_lebasic(k_max: int = 8, r_max: int = 4) -> dict:
    worst, cases, min_tilde = 0.0, 0, math.inf
    for k in range(k_max + 1):
        for r in range(r_max + 1):
            for v in V_GRID:
                for xi in XI_GRID:
                    s = A_series(k, r, v, xi)
                    i = A_integral(k, r, v, xi)
                    worst = max(worst, abs(s - i) / (1.0 + abs(s)))
                    st = A_series(k, r, v, xi, tilde=True)
                    it = A_integral(k, r, v, xi, tilde=True)
                    worst = max(worst, abs(st - it) / (1.0 + abs(st)))
                    min_tilde = min(min_tilde, st)
                    cases += 2
    return {"suite": "lebasic", "cases": cases, "max_error": worst, "tolerance": 1e-8,
            "min_A_tilde": min_tilde}


def suite_lereps(k_max: int = 6, r_max: int = 3) -> dict:
    route_err, recon_err, cases = 0.0, 0.0, 0
    minima = {"S": math.inf, "T": math.inf, "S_tilde": math.inf, "T_tilde": math.inf}
    for k in range(1, k_max + 1):
        for r in range(r_max + 1):
            for rho in range(r + 1):
                for v in V_GRID:
                    for xi in XI_GRID:
                        for tilde in (False, True):
                            s_alt = S_kernel(k, r, rho, v, xi, route="alternating", tilde=tilde)
                            s_ker = S_kernel(k, r, rho, v, xi, route="kernel", tilde=tilde)
                            t = T_kernel(k, r, rho, v, xi, tilde=tilde)
                            t_rec = T_from_S(k, r, rho, v, xi, tilde=tilde)
                            route_err = max(route_err, abs(s_alt - s_ker) / (1.0 + abs(s_ker)))
                            recon_err = max(recon_err, abs(t - t_rec) / (1.0 + abs(t)))
                            sfx = "_tilde" if tilde else ""
                            minima["S" + sfx] = min(minima["S" + sfx], s_ker)
                            minima["T" + sfx] = min(minima["T" + sfx], t)
                            cases += 1
    return {"suite": "lereps", "cases": cases, "max_error": max(route_err, recon_err),
            "route_error": route_err, "reconstruction_error": recon_err, "tolerance": 1e-9,
            "minima": minima}


SUITES = {
    "gauss": suite_gauss,
    "pfaff": suite_pfaff,
    "lemma5": suite_lemma5,
    "lebasic": suite_lebasic,
    "lereps": suite_lereps,
}
