"""Absolutely continuous part psi of the BMV measure for d = 3.

All routines work on a canonical problem (0 = b1 < b3 < b2).  The density
lives on the two open intervals (0, b3) ("lower") and (b3, b2) ("upper").
The upper interval is reduced to the lower one of a reflected problem:
swap labels 1 and 2, replace b by (0, b2, b2 - b3) and x by b2 - x.
A ``_Frame`` holds the problem data in whichever orientation is in use.

Three independent routes are provided:

* ``psi_bruteforce``: sum over loops of the per-loop density, grouped by
  (characteristic, start), with the per-loop density done by quadrature
  on the segment of the occupation simplex that maps to x.
* ``psi_le12``: the same sum with the start-averaged density written as a
  double series in (L, r); no quadrature.
* ``psi_le13``: a resummation over the a23 power and the a12/a13 split,
  in terms of the tilde S kernels; its summands are nonnegative when
  omega >= 0 and lambda <= 0.

Truncation is by total loop length n <= n_max for every route, so the three
agree to rounding at equal n_max.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, factorial, lgamma
from typing import NamedTuple, Sequence

import numpy as np

from . import paths
from .core import (Breakpoint, BMVProblem, CanonicalForm, DegenerateB, DegenerateDirection, SignedMeasure,
                   TailBoundExceeded, TruncationFailure, ValidationError, canonicalize)
from .hyperfun import gauss_legendre, involution_weight

METHODS = ("bruteforce", "le12", "le13")


@dataclass(frozen=True)
class TruncationPolicy:
    """Loop-length cap and optional tolerance on the tail bound.

    With ``tol=None`` the tail bound is computed and reported but never
    enforced.
    """

    n_max: int = 20
    tol: float | None = None
    breakpoint_tol: float | None = None
    quad_order: int = 64

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 2:
            raise ValidationError(f"n_max must be an integer >= 2, got {self.n_max}")
        if self.tol is not None and not self.tol > 0:
            raise ValidationError("tol must be positive")

    def order_for(self, n_max: int | None = None) -> int:
        n = self.n_max if n_max is None else n_max
        return max(self.quad_order, 128) if n > 40 else self.quad_order


class _Frame(NamedTuple):
    a: tuple       # diagonal (a1, a2, a3)
    a12: float
    a13: float
    a23: float
    b2: float
    b3: float


def _lower_frame(cf: CanonicalForm) -> _Frame:
    A = cf.problem.a
    return _Frame(tuple(np.diag(A)), A[0, 1], A[0, 2], A[1, 2], cf.b2, cf.b3)


def _upper_frame(cf: CanonicalForm) -> _Frame:
    A = cf.problem.a
    a = np.diag(A)
    return _Frame((a[1], a[0], a[2]), A[0, 1], A[1, 2], A[0, 2], cf.b2, cf.b2 - cf.b3)


def _swap12(k):
    return (k[1], k[0], k[2])


@dataclass(frozen=True)
class GeometryParams:
    """Per-x quantities in the lower-interval frame in use.

    On the upper interval the fields describe the reflected problem, with
    ``x_local = b2 - x``; ``y1`` and ``y3`` alias ``x2`` and ``x3`` there.
    """

    interval: str
    x: float
    x_local: float
    x2: float
    x3: float
    lam: float
    mu: float
    A12: float
    A13: float
    v: float
    xi: float
    w1: float
    w2: float
    omega: float
    frame: _Frame = field(repr=False)

    @property
    def y1(self) -> float:
        return self.x2

    @property
    def y3(self) -> float:
        return self.x3


def _params(frame: _Frame, xl: float, interval: str = "lower", x: float | None = None) -> GeometryParams:
    a1, a2, a3 = frame.a
    x2 = xl / frame.b2
    x3 = xl / frame.b3
    lam = a1 * (x2 - x3) - a2 * x2 + a3 * x3
    mu = a1 * (1.0 - x2) + a2 * x2
    A12 = frame.a12 * math.sqrt(x2)
    A13 = frame.a13 * math.sqrt(x3)
    ss = A12 * A12 + A13 * A13
    v = 2.0 * A12 * A13 / ss if ss > 0 else math.nan
    omega = (A12 * A12 - A13 * A13) / ss if ss > 0 else math.nan
    return GeometryParams(
        interval=interval, x=xl if x is None else x, x_local=xl, x2=x2, x3=x3, lam=lam, mu=mu,
        A12=A12, A13=A13, v=v, xi=frame.a23 * math.sqrt(x2 * x3),
        w1=(1.0 - x3) / 2.0 * ss, w2=(x3 - x2) / (2.0 * (1.0 - x3)), omega=omega, frame=frame)


def _breakpoint_tol(cf, tp):
    if tp is not None and tp.breakpoint_tol is not None:
        return tp.breakpoint_tol
    return 1e-9 * cf.b2


def locate(x: float, cf: CanonicalForm, breakpoint_tol: float | None = None) -> tuple:
    """Return (interval, local x, frame) for canonical coordinate x."""
    if cf.degenerate:
        raise DegenerateB("two entries of B coincide; the density is not defined (see the certificate)")
    b2, b3 = cf.b2, cf.b3
    tol = 1e-9 * b2 if breakpoint_tol is None else breakpoint_tol
    x = float(x)
    if not (0.0 < x < b2):
        raise Breakpoint(f"x = {x!r} is outside the open support (0, {b2!r})")
    for bp in (0.0, b3, b2):
        if abs(x - bp) <= tol:
            raise Breakpoint(f"x = {x!r} is within {tol:.3g} of the breakpoint {bp!r}")
    if x < b3:
        return "lower", x, _lower_frame(cf)
    return "upper", b2 - x, _upper_frame(cf)


def geometry(x: float, cf: CanonicalForm, breakpoint_tol: float | None = None) -> GeometryParams:
    interval, xl, frame = locate(x, cf, breakpoint_tol)
    return _params(frame, xl, interval, x)


# --------------------------------------------------------------------------
# single-characteristic densities

def simplex_f(xi, k, a) -> float:
    """beta(k) xi1^(k1-1) xi2^(k2-1) xi3^(k3-1) exp(a . xi) on the simplex.

    beta(k) = (n-1)! / prod (k_i - 1)!, which makes the density integrate to 1
    against d xi1 d xi2 on the projected simplex.
    """
    k1, k2, k3 = (int(v) for v in k)
    if min(k1, k2, k3) < 1:
        raise ValidationError("simplex_f needs every k_i >= 1")
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0) or abs(xi.sum() - 1.0) > 1e-12:
        raise ValidationError("xi must be a point of the simplex")
    beta = factorial(k1 + k2 + k3 - 1) / (factorial(k1 - 1) * factorial(k2 - 1) * factorial(k3 - 1))
    return float(beta * xi[0] ** (k1 - 1) * xi[1] ** (k2 - 1) * xi[2] ** (k3 - 1) * math.exp(float(np.dot(a, xi))))


def phi_frame(k, start: int, x: float, a, b2: float, b3: float, order: int = 64) -> float:
    """Density at x of the occupation functional for loops of type (k, start).

    Works in a lower-interval frame with 0 < x < b3 <= b2 (b3 = b2 allowed).
    The occupation fractions of a loop with characteristic k and first
    state ``start`` are Dirichlet(k + e_start); the density of b . xi at x is
    the integral over the segment t -> (1 - x2 + t(x2 - x3), x2(1-t), x3 t).
    """
    k1, k2, k3 = (int(v) for v in k)
    s = int(start) - 1
    kk = [k1, k2, k3]
    if kk[s] < 1:
        raise ValidationError(f"start state {start} is not visited by characteristic {tuple(k)}")
    if k1 == 0:
        return 0.0
    a1, a2, a3 = (float(v) for v in a)
    x2, x3 = x / b2, x / b3
    kp = list(kk)
    kp[s] += 1
    if k2 == 0:
        return (math.exp(a1 * (1 - x3) + a3 * x3) * (1 - x3) ** (kp[0] - 1) * x3 ** (kp[2] - 1)
                / (factorial(kp[0] - 1) * factorial(kp[2] - 1) * b3))
    if k3 == 0:
        return (math.exp(a1 * (1 - x2) + a2 * x2) * (1 - x2) ** (kp[0] - 1) * x2 ** (kp[1] - 1)
                / (factorial(kp[0] - 1) * factorial(kp[1] - 1) * b2))
    t, w = gauss_legendre(order)
    xi = np.array([1 - x2 + t * (x2 - x3), x2 * (1 - t), x3 * t])
    logf = sum((kk[i] - 1) * np.log(xi[i]) - lgamma(kk[i]) for i in range(3)) + a1 * xi[0] + a2 * xi[1] + a3 * xi[2]
    jac = x / (b2 * b3)
    return float(jac * np.dot(w, xi[s] / kk[s] * np.exp(logf)))


def chi_frame_series(k, x: float, a, b2: float, b3: float, form: str = "auto") -> float:
    """Start-averaged density as a double series in (L, r), no quadrature."""
    k1, k2, k3 = (int(v) for v in k)
    if k1 == 0:
        return 0.0
    n = k1 + k2 + k3
    a1, a2, a3 = (float(v) for v in a)
    x2, x3 = x / b2, x / b3
    lam = a1 * (x2 - x3) - a2 * x2 + a3 * x3
    mu = a1 * (1 - x2) + a2 * x2
    if form == "auto":
        form = "alternate" if lam <= 0 else "first"
    l_max = _l_max(abs(lam)) + 2
    if form == "alternate":
        ratio, z, pre, kr = (x3 - x2) / (1 - x3), -lam, (1 - x3) ** (k1 - 1) * math.exp(mu + lam), k2
    elif form == "first":
        ratio, z, pre, kr = (x2 - x3) / (1 - x2), lam, (1 - x2) ** (k1 - 1) * math.exp(mu), k3
    else:
        raise ValidationError(f"unknown form {form!r}")
    terms = []
    for L in range(l_max + 1):
        for r in range(k1):
            sidx = L + r
            if kr == 0:
                g = 1.0 / math.gamma(k2 + k3) if sidx == 0 else 0.0
            else:
                g = math.exp(lgamma(kr + sidx) - lgamma(kr) - lgamma(k2 + k3 + sidx))
            terms.append(z ** L / factorial(L) * comb(k1 - 1, r) * ratio ** r * g)
    return pre * x2 ** k2 * x3 ** k3 / (n * x * factorial(k1 - 1)) * math.fsum(terms)


def _frame_for(x, cf, tp=None):
    interval, xl, frame = locate(x, cf, _breakpoint_tol(cf, tp) if tp is not None else None)
    return interval, xl, frame


def phi(k, start: int, x: float, cf: CanonicalForm, order: int = 64) -> float:
    """Per-loop density for loops with characteristic k starting in ``start``.

    On the upper interval the reflected problem is used, so k and start are
    relabelled 1 <-> 2 internally.
    """
    interval, xl, fr = _frame_for(x, cf)
    if interval == "upper":
        k = _swap12(k)
        start = {1: 2, 2: 1, 3: 3}[int(start)]
    return phi_frame(k, start, xl, fr.a, fr.b2, fr.b3, order)


def chi(k, x: float, cf: CanonicalForm, method: str = "quadrature", order: int = 64) -> float:
    """Start-averaged density sum_s (k_s / n) phi(k, s, x)."""
    interval, xl, fr = _frame_for(x, cf)
    if interval == "upper":
        k = _swap12(k)
    k = tuple(int(v) for v in k)
    if method == "quadrature":
        n = sum(k)
        return math.fsum(k[s] / n * phi_frame(k, s + 1, xl, fr.a, fr.b2, fr.b3, order) for s in range(3) if k[s] > 0)
    if method == "series":
        return chi_frame_series(k, xl, fr.a, fr.b2, fr.b3)
    raise ValidationError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# truncation and tail bound

def _l_max(z: float, eps: float = 1e-18) -> int:
    """Smallest L with z^L / L! <= eps * max(1, e^z), at least 4."""
    z = abs(z)
    scale = max(1.0, math.exp(min(z, 700.0)))
    L, term = 0, 1.0
    while L < 4 or term > eps * scale or L < z:
        L += 1
        term *= z / L
        if L > 5000:
            raise TruncationFailure(f"L series for |lambda| = {z} too long")
    return L


def tail_bound(cf: CanonicalForm, n_max: int) -> float:
    """Upper bound on |psi - psi_(n <= n_max)| on both intervals.

    Per characteristic the start-averaged density is at most
    e^(max a_i) * max(1/b3, 1/(b2-b3)) / (n (n-3)!); there are at most
    2^n + 2 loops of length n and each monomial is at most M^n with
    M = max |a_ij|, i != j.
    """
    A = cf.problem.a
    off = max(abs(A[0, 1]), abs(A[0, 2]), abs(A[1, 2]))
    if off == 0.0:
        return 0.0
    amax = float(np.max(np.diag(A)))
    c_geom = max(1.0 / cf.b3, 1.0 / (cf.b2 - cf.b3))
    log_off = math.log(off)
    total = 0.0
    n = n_max + 1
    prev = math.inf
    while True:
        log_count = n * math.log(2.0) + math.log1p(2.0 ** min(1 - n, 0))
        log_term = log_count + n * log_off - math.log(n) - lgamma(max(n - 3, 0) + 1)
        term = math.exp(min(log_term, 700.0))
        total += term
        if n > n_max + 5 and term < prev and (term <= 1e-17 * total or term == 0.0):
            break
        prev = term
        n += 1
        if n > n_max + 100000:
            break
    return math.exp(amax) * c_geom * total


def select_policy(cf: CanonicalForm, tol: float, n_cap: int = 30, **kw) -> TruncationPolicy:
    """Smallest n_max <= n_cap whose tail bound is <= tol."""
    for n in range(2, n_cap + 1):
        if tail_bound(cf, n) <= tol:
            return TruncationPolicy(n_max=n, tol=tol, **kw)
    raise TailBoundExceeded(f"tail bound {tail_bound(cf, n_cap):.3g} > tol {tol:.3g} even at n_max = {n_cap}")


def _check_tail(cf, tp) -> float:
    bound = tail_bound(cf, tp.n_max)
    if tp.tol is not None and bound > tp.tol:
        raise TailBoundExceeded(f"tail bound {bound:.3g} exceeds tol {tp.tol:.3g} at n_max = {tp.n_max}; "
                                f"raise n_max or let it be chosen from tol (--nmax auto)")
    return bound


# --------------------------------------------------------------------------
# grouped tables (x independent, cached per n_max)

class _Groups:
    def __init__(self, n_max: int):
        groups = paths.path_groups(n_max)
        self.n_max = n_max
        self.k = np.array([g.k for g in groups], dtype=np.int64).reshape(-1, 3)
        self.l = np.array([g.l for g in groups], dtype=np.int64).reshape(-1, 3)
        self.count = np.array([float(g.count) for g in groups])
        self.start_counts = np.array([[float(c) for c in g.start_counts] for g in groups]).reshape(-1, 3)
        self.n = self.k.sum(axis=1)
        k1, k2, k3 = self.k.T
        self.general = (k2 > 0) & (k3 > 0)
        self.no2 = k2 == 0
        self.no3 = k3 == 0
        self.lg = np.vectorize(lgamma)(np.maximum(self.k, 1).astype(float))
        self.lfact_n = np.vectorize(lgamma)(self.n + 1.0)
        self.by_k1 = {int(v): np.nonzero(k1 == v)[0] for v in np.unique(k1)}
        self._series = {}

    def order_weights(self, frame: _Frame) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            out = (frame.a12 ** self.l[:, 0].astype(float)) * (frame.a13 ** self.l[:, 1].astype(float)) \
                * (frame.a23 ** self.l[:, 2].astype(float))
        return out

    def series_table(self, s_max: int) -> dict:
        """x independent factors (k_r)_s / Gamma(k2 + k3 + s) for both forms."""
        size = 16 * ((s_max + 16) // 16)
        if size in self._series:
            return self._series[size]
        s = np.arange(size + 1, dtype=float)
        k1, k2, k3 = (c.astype(float) for c in self.k.T)
        base = k2 + k3
        lg = np.vectorize(lgamma)
        tabs = {}
        for name, kr in (("alternate", k2), ("first", k3)):
            G = np.zeros((len(kr), size + 1))
            pos = kr > 0
            if np.any(pos):
                G[pos] = np.exp(lg(kr[pos, None] + s[None, :]) - lg(kr[pos, None]) - lg(base[pos, None] + s[None, :]))
            zero = ~pos
            G[zero, 0] = np.exp(-lg(base[zero]))
            tabs[name] = G
        tabs["size"] = size
        self._series[size] = tabs
        return tabs


@lru_cache(maxsize=8)
def _groups(n_max: int) -> _Groups:
    return _Groups(n_max)


# --------------------------------------------------------------------------
# route 1: per-loop densities by quadrature

def _phi_table(frame: _Frame, xl: float, tab: _Groups, order: int) -> np.ndarray:
    """phi for every (group, start) at local x; zero for unvisited starts."""
    a1, a2, a3 = frame.a
    x2, x3 = xl / frame.b2, xl / frame.b3
    out = np.zeros((len(tab.count), 3))
    K = tab.k.astype(float)

    g = tab.general
    if np.any(g):
        t, w = gauss_legendre(order)
        xi = np.array([1 - x2 + t * (x2 - x3), x2 * (1 - t), x3 * t])
        logxi = np.log(xi)
        Kg = K[g]
        logf = (Kg - 1.0) @ logxi - tab.lg[g].sum(axis=1)[:, None] + (a1 * xi[0] + a2 * xi[1] + a3 * xi[2])[None, :]
        F = np.exp(logf)
        integrals = F @ (w[:, None] * xi.T)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[g] = np.where(Kg > 0, xl / (frame.b2 * frame.b3) * integrals / Kg, 0.0)

    for mask, j, xj, bj, aj in ((tab.no2, 2, x3, frame.b3, a3), (tab.no3, 1, x2, frame.b2, a2)):
        if not np.any(mask):
            continue
        Km = K[mask]
        e = math.exp(a1 * (1 - xj) + aj * xj)
        for s in (0, j):
            kp1 = Km[:, 0] + (s == 0)
            kpj = Km[:, j] + (s == j)
            val = e * np.exp((kp1 - 1) * math.log1p(-xj) + (kpj - 1) * math.log(xj)
                             - np.vectorize(lgamma)(kp1) - np.vectorize(lgamma)(kpj)) / bj
            out[np.nonzero(mask)[0], s] = np.where(Km[:, s] > 0, val, 0.0)
    return out


def _brute_terms(frame, xl, tab, order, multiplicity=None):
    ph = _phi_table(frame, xl, tab, order)
    counts = tab.start_counts if multiplicity is None else multiplicity
    return tab.order_weights(frame) * np.einsum("gs,gs->g", counts, ph)


# --------------------------------------------------------------------------
# route 2: triple sum with series in (L, r)

def _le12_value(frame: _Frame, xl: float, tab: _Groups) -> float:
    a1, a2, a3 = frame.a
    x2, x3 = xl / frame.b2, xl / frame.b3
    lam = a1 * (x2 - x3) - a2 * x2 + a3 * x3
    mu = a1 * (1 - x2) + a2 * x2
    if lam <= 0:
        form, ratio, z, log_pre1, expo = "alternate", (x3 - x2) / (1 - x3), -lam, math.log1p(-x3), mu + lam
    else:
        form, ratio, z, log_pre1, expo = "first", (x2 - x3) / (1 - x2), lam, math.log1p(-x2), mu
    k1max = int(tab.k[:, 0].max())
    l_max = _l_max(z)
    s_max = k1max + l_max
    G = tab.series_table(s_max)
    Gt = G[form]
    size = G["size"]
    e = np.ones(size + 1)
    for i in range(1, size + 1):
        e[i] = e[i - 1] * z / i
    series = np.zeros(len(tab.count))
    for k1, rows in tab.by_k1.items():
        b = np.array([comb(k1 - 1, r) * ratio ** r for r in range(k1)])
        conv = np.convolve(b, e)[: size + 1]
        series[rows] = Gt[rows] @ conv
    K = tab.k.astype(float)
    log_pref = (K[:, 0] - 1) * log_pre1 + K[:, 1] * math.log(x2) + K[:, 2] * math.log(x3) \
        - np.log(tab.n) - math.log(xl) - np.vectorize(lgamma)(K[:, 0])
    chi = np.exp(log_pref + expo) * series
    return math.fsum((tab.count * tab.order_weights(frame) * chi).tolist())


# --------------------------------------------------------------------------
# route 3: resummed series in tilde S kernels

@lru_cache(maxsize=16)
def _tilde_coeffs(k_max: int, r_max: int, m_max: int) -> np.ndarray:
    """Coefficients c[k', r', j, m] of the even-part A kernels, times 1/m!.

    c = C(k', j) 2^p ((m-j+2)/2)_p / Gamma(m+1+q),  p = k'+r'-1, q = k'+2r'-1,
    restricted to j <= k' and j = m (mod 2); c[0, 0, 0, m] = 1/m!.
    """
    J = np.arange(k_max + 1)[:, None]
    M = np.arange(m_max + 1)[None, :]
    y = (M - J + 2) / 2.0
    p_max = max(k_max + r_max - 1, 0)
    # running (y)_p as sign * exp(log|.|), with exact zeros tracked
    log_abs = np.zeros((p_max + 1,) + y.shape)
    sign = np.ones((p_max + 1,) + y.shape)
    for p in range(1, p_max + 1):
        f = y + (p - 1)
        with np.errstate(divide="ignore"):
            log_abs[p] = log_abs[p - 1] + np.log(np.abs(f))
        sign[p] = sign[p - 1] * np.sign(f)
    parity = ((J - M) % 2 == 0)
    lg = np.vectorize(lgamma)
    out = np.zeros((k_max + 1, r_max + 1, k_max + 1, m_max + 1))
    for kp in range(k_max + 1):
        binom = np.array([comb(kp, j) if j <= kp else 0 for j in range(k_max + 1)], dtype=float)[:, None]
        for rp in range(r_max + 1):
            if kp == 0 and rp == 0:
                out[0, 0, 0, :] = np.exp(-lg(np.arange(m_max + 1) + 1.0))
                out[0, 0, 0, 1::2] = 0.0
                continue
            p, q = kp + rp - 1, kp + 2 * rp - 1
            with np.errstate(invalid="ignore"):
                val = sign[p] * np.exp(log_abs[p] + p * math.log(2.0) - lg(M + 1.0 + q))
            val = np.where(np.isfinite(val), val, 0.0)
            out[kp, rp] = binom * val * parity
    out.setflags(write=False)
    return out


@lru_cache(maxsize=8)
def _pair_weights(n_max: int) -> np.ndarray:
    w = np.zeros((n_max + 1, n_max // 2 + 1))
    for n in range(n_max + 1):
        for a in range(n // 2 + 1):
            w[n, a] = float(involution_weight(n, a))
    return w


def _le13_value(frame: _Frame, xl: float, n_max: int) -> float:
    par = _params(frame, xl)
    ss = par.A12 ** 2 + par.A13 ** 2
    if ss == 0.0:
        raise DegenerateDirection("a12 = a13 = 0 in this frame: v and omega are undefined")
    K = n_max // 2
    if K < 1:
        return 0.0
    z = -par.lam / 2.0
    l_max = _l_max(3.0 * abs(z)) + 4
    r_max = K - 1 + l_max
    m_max = max(n_max - 2, 0)
    coef = _tilde_coeffs(K, r_max, m_max)
    vp = np.array([par.v ** j for j in range(K + 1)])
    xp = np.array([par.xi ** m for m in range(m_max + 1)])
    # cumulative in m so each outer k can use its own cap n_max - 2k
    at_cum = np.cumsum(np.einsum("krjm,j,m->krm", coef, vp, xp), axis=2)
    W = _pair_weights(r_max)
    e = np.ones(l_max + 1)
    for i in range(1, l_max + 1):
        e[i] = e[i - 1] * z / i
    total = []
    for k in range(1, K + 1):
        at = at_cum[:, :, n_max - 2 * k]
        inner = np.zeros(r_max + 1)
        for rho in range(0, k + 1):
            n_len = r_max - rho + 1
            a_len = (n_len - 1) // 2 + 1
            vec = at[k - rho, rho: rho + a_len]
            s_vec = W[:n_len, :a_len] @ vec * math.perm(k, rho)
            R = np.arange(rho, r_max + 1)
            inner[rho:] += np.array([comb(int(r), rho) for r in R], dtype=float) * par.omega ** rho * s_vec
        b = np.array([comb(k - 1, r) * par.w2 ** r for r in range(k)])
        h = np.convolve(b, e)
        total.append(par.w1 ** k / (factorial(k) * factorial(k - 1)) * float(np.dot(h, inner[: len(h)])))
    return 2.0 * math.exp(par.lam + par.mu) / (xl * (1.0 - par.x3)) * math.fsum(total)


# --------------------------------------------------------------------------
# public density routes

def _evaluate(x, cf, tp, method, multiplicity=None):
    interval, xl, frame = _frame_for(x, cf, tp)
    tab = _groups(tp.n_max)
    if method == "bruteforce":
        # loop counts per (characteristic, start) do not depend on labels,
        # so the same table serves the reflected frame
        return math.fsum(_brute_terms(frame, xl, tab, tp.order_for(), multiplicity).tolist())
    if method == "le12":
        return _le12_value(frame, xl, tab)
    if method == "le13":
        try:
            return _le13_value(frame, xl, tp.n_max)
        except DegenerateDirection:
            if frame.a23 == 0.0:
                return 0.0
            return _le12_value(frame, xl, tab)
    raise ValidationError(f"unknown method {method!r}; choose from {METHODS}")


def psi_bruteforce(x: float, cf: CanonicalForm, tp: TruncationPolicy | None = None,
                   multiplicity: str = "count") -> float:
    """Loop sum with per-(characteristic, start) densities by quadrature.

    ``multiplicity="enumerate"`` takes the group sizes from explicit path
    enumeration instead of the closed-form counts (n_max <= 14).
    """
    tp = tp or TruncationPolicy()
    _check_tail(cf, tp)
    mult = None
    if multiplicity == "enumerate":
        mult = _enumerated_start_counts(tp.n_max)
    elif multiplicity != "count":
        raise ValidationError(f"unknown multiplicity {multiplicity!r}")
    return _evaluate(x, cf, tp, "bruteforce", mult)


def psi_terms(x: float, cf: CanonicalForm, tp: TruncationPolicy | None = None) -> tuple:
    """Per-group contributions of the loop sum and the group characteristics."""
    tp = tp or TruncationPolicy()
    interval, xl, frame = _frame_for(x, cf, tp)
    tab = _groups(tp.n_max)
    k = tab.k if interval == "lower" else tab.k[:, [1, 0, 2]]
    return _brute_terms(frame, xl, tab, tp.order_for()), k


@lru_cache(maxsize=4)
def _enumerated_start_counts(n_max: int) -> np.ndarray:
    tab = _groups(n_max)
    index = {tuple(int(v) for v in row): i for i, row in enumerate(tab.k)}
    out = np.zeros((len(index), 3))
    for n in range(2, n_max + 1):
        for gamma in paths.iter_paths(3, n):
            k, _, start = paths.path_stats(gamma)
            if k.k1 == 0:
                continue
            out[index[tuple(k)], start - 1] += 1
    out.setflags(write=False)
    return out


def psi_le12(x: float, cf: CanonicalForm, tp: TruncationPolicy | None = None) -> float:
    tp = tp or TruncationPolicy()
    _check_tail(cf, tp)
    return _evaluate(x, cf, tp, "le12")


def psi_le13(x: float, cf: CanonicalForm, tp: TruncationPolicy | None = None, fallback: bool = True) -> float:
    """Resummed route.  Without ``fallback`` a vanishing (a12, a13) direction raises."""
    tp = tp or TruncationPolicy()
    _check_tail(cf, tp)
    if not fallback:
        interval, xl, frame = _frame_for(x, cf, tp)
        return _le13_value(frame, xl, tp.n_max)
    return _evaluate(x, cf, tp, "le13")


def psi_values(xs, cf: CanonicalForm, tp: TruncationPolicy | None = None, method: str = "le12",
               workers: int | None = None) -> np.ndarray:
    """psi at canonical points xs; results are in input order."""
    tp = tp or TruncationPolicy()
    _check_tail(cf, tp)
    xs = [float(x) for x in np.atleast_1d(xs)]
    if workers and workers > 1:
        _groups(tp.n_max)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(lambda x: _evaluate(x, cf, tp, method), xs))
    else:
        vals = [_evaluate(x, cf, tp, method) for x in xs]
    return np.array(vals)


# --------------------------------------------------------------------------
# measure assembly

def _interval_grid(lo, hi, n, layout):
    if layout == "gauss":
        nodes, w = gauss_legendre(int(n), lo, hi)
        return np.array(nodes), np.array(w)
    if layout == "uniform":
        h = (hi - lo) / n
        return lo + h * (np.arange(n) + 0.5), np.full(n, h)
    raise ValidationError(f"unknown grid layout {layout!r}")


def _trapezoid_weights(xs, lo, hi):
    xs = np.asarray(xs)
    if len(xs) == 0:
        return xs
    edges = np.concatenate([[lo], 0.5 * (xs[1:] + xs[:-1]), [hi]])
    return np.diff(edges)


def build_measure(p: BMVProblem, grid: int | Sequence[float] = 64, tp: TruncationPolicy | None = None,
                  method: str = "le12", layout: str = "gauss", tie_tol: float | None = None,
                  a_shift: str | float = 0.0, workers: int | None = None) -> SignedMeasure:
    """Atoms plus sampled density of the measure of ``p`` in original units.

    ``grid`` is either the number of points per interval (placed by
    ``layout``: Gauss-Legendre nodes or uniform cell midpoints) or explicit
    original-frame x values, which get piecewise-constant weights within
    each interval.
    """
    tp = tp or TruncationPolicy()
    cf = canonicalize(p, tie_tol=tie_tol, a_shift=a_shift)
    if cf.degenerate:
        raise DegenerateB(f"B = diag{tuple(p.b.tolist())} has tied entries; the density is undefined, "
                          f"the trace is trivially completely monotone (see certify)")
    bound = _check_tail(cf, tp)
    b2, b3 = cf.b2, cf.b3
    bp_tol = _breakpoint_tol(cf, tp)
    skipped = []
    xs, ws, labels = [], [], []
    if isinstance(grid, (int, np.integer)):
        if grid < 1:
            raise ValidationError("grid must be positive")
        for lo, hi, name in ((0.0, b3, "lower"), (b3, b2, "upper")):
            x, w = _interval_grid(lo, hi, int(grid), layout)
            xs.append(x)
            ws.append(w)
            labels += [name] * len(x)
        xs = np.concatenate(xs)
        ws = np.concatenate(ws)
        layout_used = layout
    else:
        raw = np.sort(cf.to_canonical_x(np.asarray(grid, dtype=float)))
        keep = []
        for x in raw:
            if not (0.0 < x < b2) or min(abs(x), abs(x - b3), abs(x - b2)) <= bp_tol:
                skipped.append(float(x + cf.b_shift))
            else:
                keep.append(x)
        keep = np.array(keep)
        lower = keep[keep < b3]
        upper = keep[keep > b3]
        xs = np.concatenate([lower, upper])
        ws = np.concatenate([_trapezoid_weights(lower, 0.0, b3), _trapezoid_weights(upper, b3, b2)])
        labels = ["lower"] * len(lower) + ["upper"] * len(upper)
        layout_used = "explicit"
    psi = psi_values(xs, cf, tp, method, workers) if len(xs) else np.zeros(0)
    A = p.a
    atoms = tuple((float(p.b[i]), math.exp(A[i, i])) for i in range(3))
    bks = tuple(sorted(float(v) for v in p.b))
    return SignedMeasure(
        atoms=atoms,
        density_x=cf.to_original_x(xs),
        density_psi=cf.mass_scale * psi,
        density_weights=np.asarray(ws, dtype=float),
        interval=tuple(labels),
        support_lo=bks[0],
        support_hi=bks[-1],
        breakpoints=bks,
        skipped=tuple(skipped),
        tail_bound=cf.mass_scale * bound,
        layout=layout_used,
        info={"method": method, "n_max": tp.n_max, "permutation": list(cf.permutation),
              "b_shift": cf.b_shift, "a_shift": cf.a_shift},
    )
