"""Favorable loops on {1, ..., d} and their exact counts for d = 3.

A favorable path of length n is a sequence of states with no two equal
neighbours and last state different from the first.  It stands for the
closed loop gamma_1 -> gamma_2 -> ... -> gamma_n -> gamma_1 and carries the
monomial a_{g1 g2} a_{g2 g3} ... a_{gn g1} in the off-diagonal entries of A.

For d = 3 the visit counts (k1, k2, k3) and the edge counts (l12, l13, l23)
determine each other, and the number of loops with a given signature has
a closed binomial form.  All counting here is exact integer arithmetic.
"""

from __future__ import annotations

import itertools
from collections import Counter
from math import comb
from typing import Iterator, NamedTuple

from .core import Infeasible, SizeLimit, ValidationError

MAX_ENUM_LENGTH = 14
MAX_ENUM_STATES = 4


class PathCharacteristic(NamedTuple):
    k1: int
    k2: int
    k3: int

    @property
    def n(self) -> int:
        return self.k1 + self.k2 + self.k3


class JumpCounts(NamedTuple):
    l12: int
    l13: int
    l23: int


class FavorablePath(tuple):
    """Tuple of 1-based states forming a favorable loop."""

    def __new__(cls, states):
        states = tuple(int(s) for s in states)
        if len(states) < 2:
            raise ValidationError("a favorable path has length >= 2")
        if any(s < 1 for s in states):
            raise ValidationError("states are 1-based")
        for i in range(len(states)):
            if states[i] == states[(i + 1) % len(states)]:
                raise ValidationError(f"not favorable: {states}")
        return super().__new__(cls, states)

    @property
    def start(self) -> int:
        return self[0]


def _binom(a: int, b: int) -> int:
    if a < 0 or b < 0 or b > a:
        return 0
    return comb(a, b)


def cycle_count(d: int, n: int) -> int:
    """|C_n| for d states: the number of closed walks of length n on K_d."""
    return (d - 1) ** n + (-1) ** n * (d - 1)


def iter_paths(d: int, n: int, cap: int | None = None) -> Iterator[FavorablePath]:
    """Yield every favorable path of length n in lexicographic order."""
    if d < 2 or n < 2:
        raise ValidationError("need d >= 2 and n >= 2")
    size = d * (d - 1) ** (n - 1)
    if cap is None:
        cap = MAX_ENUM_STATES * (MAX_ENUM_STATES - 1) ** (MAX_ENUM_LENGTH - 1)
        if d > MAX_ENUM_STATES or n > MAX_ENUM_LENGTH:
            raise SizeLimit(f"enumeration limited to d <= {MAX_ENUM_STATES}, n <= {MAX_ENUM_LENGTH}")
    if size > cap:
        raise SizeLimit(f"{size} candidate walks exceed the cap {cap}")

    path = [0] * n

    def extend(pos):
        if pos == n:
            if path[-1] != path[0]:
                yield FavorablePath(path)
            return
        for s in range(1, d + 1):
            if s != path[pos - 1]:
                path[pos] = s
                yield from extend(pos + 1)

    for s in range(1, d + 1):
        path[0] = s
        yield from extend(1)


def enumerate_paths(d: int, n: int, cap: int | None = None) -> list:
    return list(iter_paths(d, n, cap))


def path_stats(gamma) -> tuple:
    """Return (characteristic, jump counts, start) of a d = 3 loop."""
    gamma = FavorablePath(gamma)
    if max(gamma) > 3:
        raise ValidationError("path_stats is defined for d = 3")
    visits = Counter(gamma)
    k = PathCharacteristic(visits[1], visits[2], visits[3])
    edges = Counter()
    n = len(gamma)
    for i in range(n):
        edges[frozenset((gamma[i], gamma[(i + 1) % n]))] += 1
    l = JumpCounts(edges[frozenset((1, 2))], edges[frozenset((1, 3))], edges[frozenset((2, 3))])
    return k, l, gamma[0]


def path_order(gamma, A) -> float:
    """Loop monomial a_{g1 g2} ... a_{gn g1} for a 0-indexable matrix A."""
    out = 1.0
    n = len(gamma)
    for i in range(n):
        out *= A[gamma[i] - 1][gamma[(i + 1) % n] - 1]
    return out


def jumps_from_characteristic(k) -> JumpCounts:
    k1, k2, k3 = k
    l = JumpCounts(k1 + k2 - k3, k1 + k3 - k2, k2 + k3 - k1)
    if min(l) < 0:
        raise Infeasible(f"characteristic {tuple(k)} gives negative jump counts {tuple(l)}")
    if min(k) < 0 or sum(k) < 2:
        raise Infeasible(f"characteristic {tuple(k)} has no loops")
    return l


def characteristic_from_jumps(l) -> PathCharacteristic:
    l12, l13, l23 = l
    if min(l) < 0:
        raise Infeasible(f"negative jump counts {tuple(l)}")
    s = (l12 + l13, l12 + l23, l13 + l23)
    if any(v % 2 for v in s):
        raise Infeasible(f"jump counts {tuple(l)} fail the parity constraint")
    k = PathCharacteristic(s[0] // 2, s[1] // 2, s[2] // 2)
    if k.n < 2:
        raise Infeasible("a loop needs at least two steps")
    return k


def count_paths(k: int, l: int, m: int) -> tuple:
    """Number of loops with k1 = k, l13 = l, l23 = m.

    Returns (P1, P): P1 counts the loops starting in state 1, P all loops of
    that signature.  Rotating a loop of length n = 2k + m gives n starts, k of
    which are in state 1, so P = P1 * n / k.
    """
    if k < 1 or l < 0 or m < 0:
        raise ValidationError("need k >= 1, l >= 0, m >= 0")
    if (l - m) % 2:
        return 0, 0
    p1 = 0
    for j in range(m % 2, min(k, m, l) + 1, 2):
        p1 += comb(k, j) * _binom((m - j) // 2 + k - 1, k - 1) * _binom(k - j, (l - j) // 2) * 2 ** j
    n = 2 * k + m
    total, rem = divmod(p1 * n, k)
    assert rem == 0
    return p1, total


class PathGroup(NamedTuple):
    k: PathCharacteristic
    l: JumpCounts
    count: int
    start_counts: tuple


def path_groups(n_max: int, include_k1_zero: bool = False) -> list:
    """All d = 3 characteristics with 2 <= n <= n_max and their loop counts.

    ``start_counts[s]`` is the number of loops of that signature starting in
    state s + 1; it equals count * k_s / n.  Loops avoiding state 1 only
    exist as the two alternations 2323... and 3232...; they are added when
    ``include_k1_zero`` is set.
    """
    out = []
    for k1 in range(1, n_max // 2 + 1):
        for m in range(0, n_max - 2 * k1 + 1):
            n = 2 * k1 + m
            for l in range(m % 2, 2 * k1 + 1, 2):
                _, total = count_paths(k1, l, m)
                if total == 0:
                    continue
                kc = PathCharacteristic(k1, (2 * k1 - l + m) // 2, (l + m) // 2)
                jc = JumpCounts(2 * k1 - l, l, m)
                starts = tuple(total * ks // n for ks in kc)
                out.append(PathGroup(kc, jc, total, starts))
    if include_k1_zero:
        for n in range(2, n_max + 1, 2):
            h = n // 2
            out.append(PathGroup(PathCharacteristic(0, h, h), JumpCounts(0, 0, n), 2, (0, 1, 1)))
    return out


# --------------------------------------------------------------------------
# generating function check

def _poly_mul(p: dict, q: dict, max_degree: int) -> dict:
    out: dict = {}
    for (a1, b1, c1), u in p.items():
        for (a2, b2, c2), w in q.items():
            key = (a1 + a2, b1 + b2, c1 + c2)
            if sum(key) <= max_degree:
                out[key] = out.get(key, 0) + u * w
    return {k: v for k, v in out.items() if v}


def gf_coefficients(max_degree: int = 8, numerator: str = "1-a23^2") -> dict:
    """Expand N / (1 - a23^2 - x (2 a13 a23 + a13^2 + 1)) as a power series.

    Monomials x^k a13^l a23^m are keyed by (k, l, m) and truncated at total
    degree k + l + m <= max_degree.  With the default numerator the
    coefficient of x^k a13^l a23^m should be P1(k, l, m) for k >= 1.
    ``numerator`` may also be "1-a23" to test the alternative form.
    """
    if numerator == "1-a23^2":
        num = {(0, 0, 0): 1, (0, 0, 2): -1}
    elif numerator == "1-a23":
        num = {(0, 0, 0): 1, (0, 0, 1): -1}
    else:
        raise ValidationError(f"unknown numerator {numerator!r}")
    # 1 / (1 - u) with u = a23^2 + x (1 + 2 a13 a23 + a13^2)
    u = {(0, 0, 2): 1, (1, 0, 0): 1, (1, 1, 1): 2, (1, 2, 0): 1}
    series = {(0, 0, 0): 1}
    power = {(0, 0, 0): 1}
    for _ in range(max_degree):
        power = _poly_mul(power, u, max_degree)
        if not power:
            break
        for key, v in power.items():
            series[key] = series.get(key, 0) + v
    return _poly_mul(num, series, max_degree)
