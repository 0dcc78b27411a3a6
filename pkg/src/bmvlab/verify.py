"""Exact oracles and checks: traces, Laplace round trips, derivative signs,
the positivity certificate, the negative-density example and seeded test
problems."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import density, paths
from .core import (BMVProblem, DiagonalMatrix3, InsufficientGrid, SignedMeasure, SymmetricMatrix3,
                   ValidationError, canonicalize, decanonicalize, default_tie_tol, ingest, permute_problem,
                   shift_problem)
from .hyperfun import gauss_legendre

Z_GRID = (0.0, 0.5, 1.0, 2.0, 5.0)


# --------------------------------------------------------------------------
# traces

def _matrix(p: BMVProblem, z: float) -> np.ndarray:
    return p.a - z * np.diag(p.b)


def trace_exp(p: BMVProblem, z: float) -> float:
    """tr exp(A - zB) from the symmetric eigenvalues."""
    return math.fsum(np.exp(np.linalg.eigvalsh(_matrix(p, z))).tolist())


def expm_taylor(M: np.ndarray, terms: int = 30) -> np.ndarray:
    """exp(M) by scaling and squaring with a Taylor polynomial."""
    M = np.asarray(M, dtype=float)
    norm = np.linalg.norm(M, 1)
    s = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0 else 0
    X = M / 2.0 ** s
    out = np.eye(len(M))
    term = np.eye(len(M))
    for i in range(1, terms + 1):
        term = term @ X / i
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def trace_exp_series(p: BMVProblem, z: float) -> float:
    return float(np.trace(expm_taylor(_matrix(p, z))))


def laplace_of_measure(m: SignedMeasure, z: float, min_per_interval: int = 64) -> float:
    """Integral of e^{-zx} against the measure, using the attached weights."""
    if m.layout != "explicit":
        for name in ("lower", "upper"):
            n = sum(1 for lab in m.interval if lab == name)
            if n < min_per_interval:
                raise InsufficientGrid(f"{n} density samples on the {name} interval, need >= {min_per_interval}")
    atoms = math.fsum(w * math.exp(-z * loc) for loc, w in m.atoms)
    dens = math.fsum((m.density_weights * np.exp(-z * m.density_x) * m.density_psi).tolist())
    return atoms + dens


# --------------------------------------------------------------------------
# derivative signs

def _eig(p, z):
    vals, vecs = np.linalg.eigh(_matrix(p, z))
    C = vecs.T @ np.diag(p.b) @ vecs
    return vals, C


def dphi(p: BMVProblem, z: float) -> float:
    """d/dz tr exp(A - zB) = -tr(exp(A - zB) B)."""
    vals, C = _eig(p, z)
    return -math.fsum((np.exp(vals) * np.diag(C)).tolist())


def d2phi(p: BMVProblem, z: float) -> float:
    """Second derivative via divided differences of exp on the spectrum."""
    vals, C = _eig(p, z)
    ev = np.exp(vals)
    diff = vals[:, None] - vals[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        dd = np.where(np.abs(diff) > 1e-8 * (1 + np.abs(vals[:, None])),
                      (ev[:, None] - ev[None, :]) / diff,
                      np.exp(0.5 * (vals[:, None] + vals[None, :])) * (1 + diff ** 2 / 24))
    return math.fsum((C ** 2 * dd).ravel().tolist())


def d2phi_quadrature(p: BMVProblem, z: float, order: int = 32) -> float:
    """tr( int_0^1 exp(-sM) B exp(sM) B ds exp(M) ), M = A - zB, by Gauss-Legendre."""
    vals, C = _eig(p, z)
    s, w = gauss_legendre(order)
    total = 0.0
    lk = vals[:, None]
    ll = vals[None, :]
    for si, wi in zip(s, w):
        total += wi * np.sum(C ** 2 * np.exp(lk + si * (ll - lk)))
    return float(total)


def _fd(p, z, h, second):
    f = lambda t: trace_exp(p, t)
    if second:
        return (f(z + h) - 2 * f(z) + f(z - h)) / (h * h)
    return (f(z + h) - f(z - h)) / (2 * h)


def _richardson(p, z, second):
    h = 1e-4 * (1 + abs(z))
    return (4 * _fd(p, z, h / 2, second) - _fd(p, z, h, second)) / 3


def bernstein_checks(p: BMVProblem, z_grid: Sequence[float] = tuple(np.linspace(0, 10, 41))) -> dict:
    """phi >= 0, -phi' >= 0, phi'' >= 0 on the grid, plus cross-checks."""
    rows = []
    for z in z_grid:
        z = float(z)
        f = trace_exp(p, z)
        d1 = dphi(p, z)
        d1_fd = _richardson(p, z, False)
        d2 = d2phi(p, z)
        d2_q = d2phi_quadrature(p, z)
        d2_fd = _richardson(p, z, True)
        rows.append({"z": z, "phi": f, "dphi": d1, "dphi_fd": d1_fd, "d2phi": d2, "d2phi_quad": d2_q,
                     "d2phi_fd": d2_fd})
    scale = lambda r, key: max(abs(r[key]), 1e-12 * r["phi"])
    return {
        "rows": rows,
        "min_phi": min(r["phi"] for r in rows),
        "min_neg_dphi": min(-r["dphi"] for r in rows),
        "min_d2phi": min(r["d2phi"] for r in rows),
        "dphi_fd_rel_error": max(abs(r["dphi_fd"] - r["dphi"]) / scale(r, "dphi") for r in rows),
        "d2phi_quad_rel_error": max(abs(r["d2phi_quad"] - r["d2phi"]) / scale(r, "d2phi") for r in rows),
        "d2phi_fd_rel_error": max(abs(r["d2phi_fd"] - r["d2phi"]) / scale(r, "d2phi") for r in rows),
        "signs_ok": all(r["phi"] >= 0 and r["dphi"] <= 0 and r["d2phi"] >= 0 for r in rows),
    }


# --------------------------------------------------------------------------
# certificate

@dataclass(frozen=True)
class Certificate:
    verdict: str
    reasons: tuple
    condition_values: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "reasons": list(self.reasons), "condition_values": self.condition_values}


def sufficient_conditions(cf) -> dict:
    """The two sufficient conditions, evaluated on a canonical problem."""
    A = cf.problem.a
    b = cf.problem.b
    b1, b2, b3 = b
    a1, a2, a3 = np.diag(A)
    lead = abs(A[0, 1]) / math.sqrt(b2 - b1)
    return {
        "ratio_12": lead,
        "ratio_13": abs(A[0, 2]) / math.sqrt(b3 - b1),
        "ratio_23": abs(A[1, 2]) / math.sqrt(b2 - b3),
        "cond1_lower": lead - abs(A[0, 2]) / math.sqrt(b3 - b1),
        "cond1_upper": lead - abs(A[1, 2]) / math.sqrt(b2 - b3),
        "cond2": a1 * (b2 - b3) + a2 * (b3 - b1) + a3 * (b1 - b2),
        "cond2_b1_zero": a1 * (b2 - b3) + a2 * b3 - a3 * b2,
    }


def certificate(p: BMVProblem, tie_tol: float | None = None) -> Certificate:
    """Collect every known sufficient reason for complete monotonicity."""
    A, b = p.a, p.b
    tol = default_tie_tol(b) if tie_tol is None else tie_tol
    off = [(0, 1), (0, 2), (1, 2)]
    reasons = []
    if all(A[i, j] == 0 or b[i] == b[j] for i, j in off):
        reasons.append("Commuting")
    if sum(1 for i, j in off if A[i, j] == 0) >= 2:
        reasons.append("DimLE2")
    gaps = [abs(b[i] - b[j]) for i, j in off]
    if min(gaps) == 0:
        reasons.append("TwoEigenvalues")
    elif min(gaps) <= tol:
        reasons.append("DegenerateTie")
    if A[0, 1] * A[0, 2] * A[1, 2] >= 0:
        reasons.append("NonnegProduct")
    values = {}
    cf = canonicalize(p, tie_tol=tol)
    if not cf.degenerate:
        values = sufficient_conditions(cf)
        if values["cond1_lower"] >= 0 and values["cond1_upper"] >= 0 and values["cond2"] >= 0:
            reasons.append("TheoremTH")
    verdict = "ProvenPositive" if reasons else "Unknown"
    return Certificate(verdict, tuple(reasons), {k: float(v) for k, v in values.items()})


# --------------------------------------------------------------------------
# negative diagonal density

def counterexample_matrix(eps: float) -> np.ndarray:
    return np.array([[0.0, eps * eps / 2, eps], [eps * eps / 2, 0.0, -eps], [eps, -eps, 0.0]])


def polynomial_limit(x) -> np.ndarray:
    y = 1.0 - np.asarray(x, dtype=float)
    return 3 * y - 6 * y ** 2 + 2 * y ** 3


def component_density(A, x: float, n_max: int = 8, order: int = 64) -> float:
    """Density of the (1,1) entry of exp(A - zB) for B = diag(0, 1, 0).

    Loops starting in state 1 have occupation of state 2 equal to x.  After
    reflection (x -> 1 - x, labels 1 <-> 2) this is the per-loop density with
    b = (0, 1, 1) and start state 2.  Loops that never visit state 2 add an
    atom at 0 and are not part of the density.
    """
    A = np.asarray(A, dtype=float)
    a_ref = (A[1, 1], A[0, 0], A[2, 2])
    total = []
    for n in range(2, n_max + 1):
        for gamma in paths.iter_paths(3, n):
            if gamma[0] != 1:
                continue
            k, _, _ = paths.path_stats(gamma)
            k_ref = (k.k2, k.k1, k.k3)
            if k_ref[0] == 0:
                continue
            total.append(density.phi_frame(k_ref, 2, 1.0 - x, a_ref, 1.0, 1.0, order) * paths.path_order(gamma, A))
    return math.fsum(total)


def counterexample(eps: float = 0.1, x_grid: Sequence[float] | None = None, n_max: int = 8) -> dict:
    """12 psi_1 / eps^4 on a grid against 3(1-x) - 6(1-x)^2 + 2(1-x)^3."""
    if not 0 < eps <= 0.3:
        raise ValidationError("eps must lie in (0, 0.3]")
    if x_grid is None:
        x_grid = np.linspace(0.01, 0.99, 99)
    x_grid = np.asarray(x_grid, dtype=float)
    if np.any((x_grid <= 0) | (x_grid >= 1)):
        raise ValidationError("x_grid must lie in (0, 1)")
    A = counterexample_matrix(eps)
    scaled = np.array([12.0 * component_density(A, x, n_max) / eps ** 4 for x in x_grid])
    poly = polynomial_limit(x_grid)
    near = x_grid <= 0.05
    return {
        "eps": eps,
        "n_max": n_max,
        "x": x_grid,
        "scaled": scaled,
        "polynomial": poly,
        "max_abs_diff": float(np.max(np.abs(scaled - poly))),
        "negative_near_zero": bool(np.all(scaled[near] < 0)) if np.any(near) else None,
    }


# --------------------------------------------------------------------------
# invariance

def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def invariance_checks(p: BMVProblem, z_grid: Sequence[float] = Z_GRID, lam1: float = 1.0, lam2: float = 1.0) -> dict:
    out = {"shift_A": 0.0, "shift_B": 0.0, "permutation": 0.0, "canonical": 0.0, "roundtrip": 0.0}
    cf = canonicalize(p)
    cf_scaled = canonicalize(p, a_shift="max")
    back = decanonicalize(cf_scaled)
    out["roundtrip"] = float(max(np.max(np.abs(back.a - p.a)), np.max(np.abs(back.b - p.b))))
    pa = shift_problem(p, a_shift=lam1)
    pb = shift_problem(p, b_shift=lam2)
    for z in z_grid:
        base = trace_exp(p, z)
        out["shift_A"] = max(out["shift_A"], _rel(trace_exp(pa, z), math.exp(lam1) * base))
        out["shift_B"] = max(out["shift_B"], _rel(trace_exp(pb, z), math.exp(-z * lam2) * base))
        for perm in itertools.permutations(range(3)):
            out["permutation"] = max(out["permutation"], _rel(trace_exp(permute_problem(p, perm), z), base))
        for c in (cf, cf_scaled):
            rebuilt = c.mass_scale * math.exp(-z * c.b_shift) * trace_exp(c.problem, z)
            out["canonical"] = max(out["canonical"], _rel(rebuilt, base))
    out["max_error"] = max(out.values())
    out["z_grid"] = [float(z) for z in z_grid]
    return out


# --------------------------------------------------------------------------
# seeded problem families

def _make(A, b) -> BMVProblem:
    return BMVProblem(SymmetricMatrix3(A), DiagonalMatrix3(b))


def _canonical_b(rng, gap=0.2, b_max=3.0):
    b3 = rng.uniform(gap, b_max - gap)
    b2 = rng.uniform(b3 + gap, b_max)
    return np.array([0.0, b2, b3])


def _sym(rng, bound):
    M = rng.uniform(-bound, bound, (3, 3))
    return np.triu(M) + np.triu(M, 1).T


def random_problems(count: int, seed: int = 20240601, a_bound: float = 2.0, gap: float = 0.2,
                    b_max: float = 3.0) -> list:
    """Problems with entries of A uniform in [-a_bound, a_bound] and canonical B."""
    rng = np.random.default_rng(seed)
    return [_make(_sym(rng, a_bound), _canonical_b(rng, gap, b_max)) for _ in range(count)]


def certified_problems(count: int, seed: int = 20240602, a_bound: float = 2.0) -> list:
    """Canonical problems meeting both sufficient conditions with a12 a13 a23 < 0.

    Draws with an entry beyond ``a_bound`` are rejected, matching the range of
    ``random_problems``.
    """
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        b = _canonical_b(rng)
        b2, b3 = b[1], b[2]
        a13, a23 = rng.uniform(-1, 1, 2)
        lead = max(abs(a13) / math.sqrt(b3), abs(a23) / math.sqrt(b2 - b3)) * rng.uniform(1.0, 1.5)
        a12 = -np.sign(a13 * a23) * lead * math.sqrt(b2)
        a2, a3 = rng.uniform(-1, 1, 2)
        a1 = (a3 * b2 - a2 * b3) / (b2 - b3) + rng.uniform(0, 0.5)
        A = np.array([[a1, a12, a13], [a12, a2, a23], [a13, a23, a3]])
        if np.max(np.abs(A)) > a_bound:
            continue
        p = _make(A, b)
        c = certificate(p)
        if "TheoremTH" in c.reasons and "NonnegProduct" not in c.reasons:
            out.append(p)
    return out


def d2_embedded_problems(count: int, seed: int = 20240603, a_bound: float = 2.0) -> list:
    """Problems where one state is decoupled: two of the three off-diagonals vanish."""
    rng = np.random.default_rng(seed)
    out = []
    pairs = [(0, 1), (0, 2), (1, 2)]
    for _ in range(count):
        A = _sym(rng, a_bound)
        keep = pairs[int(rng.integers(0, 3))]
        for i, j in pairs:
            if (i, j) != keep:
                A[i, j] = A[j, i] = 0.0
        out.append(_make(A, _canonical_b(rng)))
    return out


def laplace_roundtrip(p: BMVProblem, z_grid: Sequence[float] = Z_GRID, tol: float = 1e-10, n_cap: int = 30,
                      per_interval: int = 64, method: str = "le12") -> dict:
    """Relative error of the Laplace transform of the built measure against the trace."""
    cf = canonicalize(p)
    tp = density.select_policy(cf, tol, n_cap)
    m = density.build_measure(p, per_interval, tp, method=method)
    errs = [abs(laplace_of_measure(m, z) - trace_exp(p, z)) / trace_exp(p, z) for z in z_grid]
    return {"n_max": tp.n_max, "tail_bound": m.tail_bound, "errors": errs, "max_error": max(errs)}
