"""Monte Carlo for the jump process behind the loop expansion.

The process X on {1, ..., d} jumps at the times of a Poisson clock of rate
d - 1, each time to one of the other d - 1 states uniformly; X_0 is uniform.
Multiplying the edge weights a_ij along the way gives Z_t, and

    E[ d e^{(d-1)t} 1{X_0 = X_t} Z_t exp(int_0^t (a - z b)(X_s) ds) ] = tr exp(t(A - zB)).

Every estimator draws from ``streams`` independent generators spawned from
one seed, processes fixed-size chunks per stream and merges the per-stream
sums in stream order, so results do not depend on the number of worker
threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import BMVProblem, ValidationError, canonicalize


@dataclass(frozen=True)
class Trajectory:
    d: int
    states: tuple          # 1-based states X_0, X_{T_1}, ..., X_{T_N}
    jump_times: tuple      # 0 < T_1 < ... < T_N <= horizon
    horizon: float = 1.0

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    def occupation(self) -> np.ndarray:
        """Time spent in each state over [0, horizon]."""
        edges = np.concatenate([[0.0], self.jump_times, [self.horizon]])
        occ = np.zeros(self.d)
        np.add.at(occ, np.array(self.states) - 1, np.diff(edges))
        return occ


@dataclass(frozen=True)
class MCConfig:
    samples: int = 1_000_000
    seed: int = 42
    streams: int = 8
    workers: int | None = None
    chunk: int = 1 << 16

    def __post_init__(self):
        if self.samples < 1:
            raise ValidationError("samples must be >= 1")
        if self.streams < 1:
            raise ValidationError("streams must be >= 1")
        if self.chunk < 1:
            raise ValidationError("chunk must be >= 1")


def sample_trajectory(d: int, rng: np.random.Generator, horizon: float = 1.0, start: int | None = None) -> Trajectory:
    """One path of the process on [0, horizon]."""
    if d < 2:
        raise ValidationError("need d >= 2")
    state = int(rng.integers(1, d + 1)) if start is None else int(start)
    states = [state]
    times = []
    t = 0.0
    while True:
        t += rng.exponential(1.0 / (d - 1))
        if t > horizon:
            break
        step = int(rng.integers(1, d))
        state = (state - 1 + step) % d + 1
        states.append(state)
        times.append(t)
    return Trajectory(d, tuple(states), tuple(times), horizon)


@dataclass
class TrajectoryBatch:
    """Many trajectories padded to the same number of segments.

    ``states[:, s]`` is the (0-based) state on segment s and ``durations[:, s]``
    its length; segments past the last jump have zero length and repeat the
    final state.
    """

    n_jumps: np.ndarray
    states: np.ndarray
    durations: np.ndarray

    @property
    def x0(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def final(self) -> np.ndarray:
        return self.states[:, -1]

    def occupation(self, d: int) -> np.ndarray:
        occ = np.zeros((len(self.n_jumps), d))
        for i in range(d):
            occ[:, i] = np.sum(np.where(self.states == i, self.durations, 0.0), axis=1)
        return occ

    def path_weight(self, A: np.ndarray) -> np.ndarray:
        """Z = product of A[X_{j-1}, X_j] over the jumps."""
        if self.states.shape[1] == 1:
            return np.ones(len(self.n_jumps))
        steps = A[self.states[:, :-1], self.states[:, 1:]]
        live = np.arange(1, self.states.shape[1])[None, :] <= self.n_jumps[:, None]
        return np.prod(np.where(live, steps, 1.0), axis=1)


def sample_batch(d: int, size: int, rng: np.random.Generator, horizon: float = 1.0,
                 start: int | None = None) -> TrajectoryBatch:
    """Vectorized sampler; given N jumps the jump times are sorted uniforms."""
    n = rng.poisson((d - 1) * horizon, size)
    K = int(n.max()) if size else 0
    u = rng.random((size, K))
    live = np.arange(K)[None, :] < n[:, None]
    times = np.sort(np.where(live, u, 1.0), axis=1) * horizon
    x0 = rng.integers(0, d, size) if start is None else np.full(size, int(start) - 1)
    steps = np.where(live, rng.integers(1, d, (size, K)), 0)
    states = (x0[:, None] + np.concatenate([np.zeros((size, 1), dtype=np.int64), np.cumsum(steps, axis=1)], axis=1)) % d
    edges = np.concatenate([np.zeros((size, 1)), times, np.full((size, 1), horizon)], axis=1)
    return TrajectoryBatch(n, states, np.diff(edges, axis=1))


def conditional_occupation(gamma, size: int, rng: np.random.Generator) -> np.ndarray:
    """Occupation fractions on [0, 1] given that the jump chain follows loop gamma.

    Given N = n jumps the n + 1 holding times are uniform on the simplex;
    the last segment returns to gamma[0].
    """
    gamma = [int(g) - 1 for g in gamma]
    d = max(max(gamma) + 1, 3)
    seg_states = gamma + [gamma[0]]
    w = rng.dirichlet(np.ones(len(seg_states)), size)
    occ = np.zeros((size, d))
    for j, s in enumerate(seg_states):
        occ[:, s] += w[:, j]
    return occ


# --------------------------------------------------------------------------
# stream bookkeeping

def _stream_sizes(cfg: MCConfig) -> list:
    base, extra = divmod(cfg.samples, cfg.streams)
    return [base + (1 if i < extra else 0) for i in range(cfg.streams)]


def _run(cfg: MCConfig, chunk_fn: Callable) -> list:
    """Apply chunk_fn(rng, size) over every stream; returns per-stream chunk lists."""
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.streams)
    sizes = _stream_sizes(cfg)

    def work(i):
        rng = np.random.default_rng(seeds[i])
        out = []
        left = sizes[i]
        while left > 0:
            m = min(cfg.chunk, left)
            out.append(chunk_fn(rng, m))
            left -= m
        return out

    if cfg.workers and cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(work, range(cfg.streams)))
    return [work(i) for i in range(cfg.streams)]


def _merge(per_stream: list, idx: int):
    parts = [c[idx] for chunks in per_stream for c in chunks]
    if np.ndim(parts[0]) == 0:
        return math.fsum(parts)
    return np.sum(np.array(parts), axis=0)


def _mean_se(s1, s2, n):
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0) if np.ndim(s1) == 0 else np.maximum(s2 / n - mean * mean, 0.0)
    return mean, np.sqrt(var * n / max(n - 1, 1) / n)


# --------------------------------------------------------------------------
# estimators

def _problem_arrays(p):
    A = p.a
    return A, np.diag(A).copy(), p.b


def fk_trace_estimate(p: BMVProblem, z: float, cfg: MCConfig, horizon: float = 1.0) -> tuple:
    """Estimate tr exp(horizon (A - zB)); returns (estimate, std_error)."""
    A, a, b = _problem_arrays(p)
    d = A.shape[0]
    scale = d * math.exp((d - 1) * horizon)
    rate = a - z * b

    def chunk(rng, m):
        tb = sample_batch(d, m, rng, horizon)
        w = scale * (tb.final == tb.x0) * tb.path_weight(A) * np.exp(tb.occupation(d) @ rate)
        return float(np.sum(w)), float(np.sum(w * w))

    res = _run(cfg, chunk)
    mean, se = _mean_se(_merge(res, 0), _merge(res, 1), cfg.samples)
    return float(mean), float(se)


def fk_semigroup_estimate(p: BMVProblem, z: float, t: float, i: int, r, cfg: MCConfig) -> tuple:
    """Estimate E_i[exp(int_0^t (a - zb)(X_s) ds) Z_t r_{X_t}].

    The exact value is e^{-t(d-1)} (exp(t(A - zB)) r)_i; returns
    (estimate, std_error, exact).
    """
    A, a, b = _problem_arrays(p)
    d = A.shape[0]
    r = np.asarray(r, dtype=float)
    rate = a - z * b

    def chunk(rng, m):
        tb = sample_batch(d, m, rng, t, start=i)
        w = tb.path_weight(A) * np.exp(tb.occupation(d) @ rate) * r[tb.final]
        return float(np.sum(w)), float(np.sum(w * w))

    res = _run(cfg, chunk)
    mean, se = _mean_se(_merge(res, 0), _merge(res, 1), cfg.samples)
    vals, vecs = np.linalg.eigh(t * (A - z * np.diag(b)))
    exact = math.exp(-t * (d - 1)) * float((vecs @ (np.exp(vals) * (vecs.T @ r)))[i - 1])
    return float(mean), float(se), exact


@dataclass(frozen=True)
class HistogramResult:
    edges: np.ndarray           # original-frame bin edges
    estimate: np.ndarray        # bin averages of the density
    std_error: np.ndarray
    atom_locations: np.ndarray
    atom_estimates: np.ndarray  # estimates of exp(a_i), original labels
    atom_std_errors: np.ndarray


def histogram_edges(b2: float, b3: float, bins: int) -> np.ndarray:
    """Edges on (0, b2) with b3 on an edge; widths are uniform on each side."""
    if bins < 2:
        raise ValidationError("need at least 2 bins")
    n_lo = min(max(int(round(bins * b3 / b2)), 1), bins - 1)
    lo = np.linspace(0.0, b3, n_lo + 1)
    hi = np.linspace(b3, b2, bins - n_lo + 1)
    return np.concatenate([lo, hi[1:]])


def density_histogram(p: BMVProblem, bins: int, cfg: MCConfig) -> HistogramResult:
    """Loop-weighted occupation histogram, an unbiased estimate of bin-averaged psi."""
    cf = canonicalize(p)
    if cf.degenerate:
        raise ValidationError("density_histogram needs distinct entries of B")
    cp = cf.problem
    A, a, b = _problem_arrays(cp)
    d = 3
    edges = histogram_edges(cf.b2, cf.b3, bins)
    widths = np.diff(edges)
    scale = d * math.exp(d - 1)

    def chunk(rng, m):
        tb = sample_batch(d, m, rng)
        loop = tb.final == tb.x0
        occ = tb.occupation(d)
        w = scale * loop * tb.path_weight(A) * np.exp(occ @ a)
        zero = tb.n_jumps == 0
        atom1 = np.zeros(d)
        atom2 = np.zeros(d)
        for s in range(d):
            ws = np.where(zero & (tb.x0 == s), w, 0.0)
            atom1[s] = ws.sum()
            atom2[s] = (ws * ws).sum()
        cont = ~zero & loop
        pos = occ[cont] @ b
        idx = np.clip(np.searchsorted(edges, pos, side="right") - 1, 0, bins - 1)
        wc = w[cont] / widths[idx]
        h1 = np.bincount(idx, weights=wc, minlength=bins)
        h2 = np.bincount(idx, weights=wc * wc, minlength=bins)
        return h1, h2, atom1, atom2

    res = _run(cfg, chunk)
    n = cfg.samples
    hist, hist_se = _mean_se(_merge(res, 0), _merge(res, 1), n)
    atoms, atoms_se = _mean_se(_merge(res, 2), _merge(res, 3), n)
    inv = np.argsort(cf.permutation)
    return HistogramResult(
        edges=edges + cf.b_shift,
        estimate=hist,
        std_error=hist_se,
        atom_locations=p.b,
        atom_estimates=atoms[inv],
        atom_std_errors=atoms_se[inv],
    )


def generator_check(A, f: Callable, t_small: float, cfg: MCConfig, zeta: float = 1.0, i: int = 1) -> tuple:
    """Compare (E f(Y_t) - f(zeta, i)) / t to the generator applied to f.

    Y = (zeta Z_t, X_t) started at (zeta, i); the generator is
    Af(zeta, i) = sum_{j != i} (f(zeta a_ij, j) - f(zeta, i)).  Only the
    off-diagonal entries of A enter.  Returns (empirical, exact, std_error).
    """
    A = np.asarray(getattr(A, "entries", A), dtype=float)
    d = A.shape[0]
    f0 = float(f(np.array([zeta]), np.array([i]))[0])
    others = [j for j in range(1, d + 1) if j != i]
    exact = math.fsum(float(f(np.array([zeta * A[i - 1, j - 1]]), np.array([j]))[0]) - f0 for j in others)

    def chunk(rng, m):
        tb = sample_batch(d, m, rng, t_small, start=i)
        val = (np.asarray(f(zeta * tb.path_weight(A), tb.final + 1), dtype=float) - f0) / t_small
        return float(np.sum(val)), float(np.sum(val * val))

    res = _run(cfg, chunk)
    mean, se = _mean_se(_merge(res, 0), _merge(res, 1), cfg.samples)
    return float(mean), exact, float(se)
