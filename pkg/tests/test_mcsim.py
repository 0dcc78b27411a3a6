import numpy as np
import pytest
from scipy import stats

from bmvlab import mcsim as M
from bmvlab.core import ValidationError, ingest
from bmvlab.verify import trace_exp


@pytest.fixture
def problem():
    return ingest([[0.2, 0.8, -0.5], [0.8, -0.1, 0.6], [-0.5, 0.6, 0.3]], [0, 1.8, 0.7])


def test_trajectory_structure():
    rng = np.random.default_rng(0)
    tr = M.sample_trajectory(3, rng, 2.0)
    assert len(tr.states) == tr.n_jumps + 1
    assert np.all(np.diff(tr.jump_times) >= 0) and (tr.n_jumps == 0 or tr.jump_times[-1] <= 2.0)
    assert all(s != t for s, t in zip(tr.states, tr.states[1:]))
    assert tr.occupation().sum() == pytest.approx(2.0)


def test_jump_count_is_poisson():
    rng = np.random.default_rng(1)
    tb = M.sample_batch(3, 200_000, rng, 1.5)
    assert tb.n_jumps.mean() == pytest.approx(3.0, rel=0.01)
    assert tb.n_jumps.var() == pytest.approx(3.0, rel=0.02)
    assert np.allclose(tb.occupation(3).sum(axis=1), 1.5)


def test_conditional_occupation_is_dirichlet():
    # loop 1 -> 2 -> 3 -> 1: state 1 gets two of the four segments, Beta(2, 2)
    occ = M.conditional_occupation((1, 2, 3), 20_000, np.random.default_rng(2))
    assert stats.kstest(occ[:, 0], stats.beta(2, 2).cdf).pvalue > 1e-3
    assert stats.kstest(occ[:, 1], stats.beta(1, 3).cdf).pvalue > 1e-3


def test_deterministic_regardless_of_workers(problem):
    a = M.fk_trace_estimate(problem, 0.7, M.MCConfig(samples=50_000, seed=5, workers=1))
    b = M.fk_trace_estimate(problem, 0.7, M.MCConfig(samples=50_000, seed=5, workers=4))
    c = M.fk_trace_estimate(problem, 0.7, M.MCConfig(samples=50_000, seed=6, workers=4))
    assert a == b
    assert a != c


def test_trace_estimate_unbiased(problem):
    for z in (0.0, 1.0):
        est, se = M.fk_trace_estimate(problem, z, M.MCConfig(samples=200_000, seed=3))
        assert abs(est - trace_exp(problem, z)) <= 4 * se


@pytest.mark.parametrize("t", [0.25, 0.5, 1.0])
def test_semigroup_consistency(problem, t):
    est, se, exact = M.fk_semigroup_estimate(problem, 0.5, t, 2, [1.0, -0.5, 2.0], M.MCConfig(samples=200_000, seed=9))
    assert abs(est - exact) <= 4 * se


def test_generator_constant_and_linear(problem):
    cfg = M.MCConfig(samples=200_000, seed=4)
    emp, exact, se = M.generator_check(problem.a, lambda zeta, i: np.ones_like(zeta), 0.01, cfg)
    assert exact == 0 and emp == pytest.approx(0.0, abs=1e-12)
    r = np.array([1.0, 2.0, -1.0])
    emp, exact, se = M.generator_check(problem.a, lambda zeta, i: zeta * r[i - 1], 0.01, cfg)
    A = problem.a
    i = 0
    assert exact == pytest.approx(((A - np.diag(np.diag(A)) - 2 * np.eye(3)) @ r)[i])
    assert abs(emp - exact) <= 3 * se + 5 * 0.01


def test_histogram_edges():
    e = M.histogram_edges(2.0, 0.5, 8)
    assert len(e) == 9 and 0.5 in e and e[0] == 0 and e[-1] == 2.0
    with pytest.raises(ValidationError):
        M.histogram_edges(2.0, 0.5, 1)


def test_histogram_atoms(problem):
    h = M.density_histogram(problem, 6, M.MCConfig(samples=200_000, seed=8))
    assert np.all(np.abs(h.atom_estimates - np.exp(np.diag(problem.a))) <= 4 * h.atom_std_errors)
    assert np.allclose(h.atom_locations, problem.b)


def test_config_validation():
    with pytest.raises(ValidationError):
        M.MCConfig(samples=0)
