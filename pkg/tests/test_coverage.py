import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from safecoverage.coverage import (argmax_in, brute_force_optimal, coverage_value, effective_regions, greedy_ucb,
                                   make_assignment, marginal_gain)
from safecoverage.domain import GridDomain, InconsistentAssignmentError

from oracles import exhaustive_best, union_coverage

GREEDY = 1 - 1 / math.e


def test_empty_placements():
    d = GridDomain(5, 5)
    assert coverage_value(np.ones(d.n), d, [], 2) == 0.0


def test_interior_disk_uniform_30x30():
    d = GridDomain(30, 30)
    assert coverage_value(np.ones(d.n), d, [d.index(15, 15)], 5) == pytest.approx(61 / 900, abs=1e-15)


def test_duplicate_adds_nothing():
    d = GridDomain(10, 10)
    rho = np.random.default_rng(0).random(d.n)
    x = d.index(4, 4)
    assert coverage_value(rho, d, [x, x], 2) == coverage_value(rho, d, [x], 2)
    a = make_assignment(rho, d, [x, x], 2)
    assert a.duplicates == (1,)


def test_placement_outside_restriction():
    d = GridDomain(4, 4)
    with pytest.raises(InconsistentAssignmentError):
        coverage_value(np.ones(d.n), d, [0], 1, restrict=[5, 6])


def test_marginal_gain_examples():
    d = GridDomain(8, 8)
    rho = np.random.default_rng(1).random(d.n)
    assert marginal_gain(rho, d, [3, 20], 20, 2) == 0.0
    assert marginal_gain(rho, d, [], 20, 2) == pytest.approx(coverage_value(rho, d, [20], 2), abs=1e-15)


def test_strip_two_agents():
    d = GridDomain(20, 1)
    best = brute_force_optimal(np.ones(d.n), d, 2, 2)
    assert best.total_value == pytest.approx(10 / 20, abs=1e-15)
    assert not (best.effective_regions[0] & best.effective_regions[1]).any()


def test_greedy_uniform_picks_lowest_unclipped():
    d = GridDomain(30, 30)
    res = greedy_ucb(np.ones(d.n), np.ones(d.n), d, 1, 5)
    assert res.assignment.placements == (d.index(5, 5),)
    assert res.sum_max_width == 0.0


def test_greedy_goals_are_widest_in_region():
    d = GridDomain(7, 7)
    rng = np.random.default_rng(4)
    lo = rng.random(d.n)
    up = lo + rng.random(d.n)
    res = greedy_ucb(up, lo, d, 2, 1)
    w = up - lo
    for g, reg in zip(res.goals, res.assignment.effective_regions):
        assert reg[g] and w[g] == w[reg].max()
    assert res.sum_max_width == pytest.approx(sum(w[g] for g in res.goals), abs=1e-15)


def test_greedy_more_agents_than_cells():
    d = GridDomain(2, 1)
    res = greedy_ucb(np.ones(d.n), np.zeros(d.n), d, 3, 1)
    assert res.assignment.duplicates == (1, 2)
    assert res.assignment.total_value == 1.0


def test_greedy_empty_restriction():
    d = GridDomain(3, 3)
    with pytest.raises(ValueError):
        greedy_ucb(np.ones(d.n), np.ones(d.n), d, 1, 1, restrict=[])


def test_brute_force_guard():
    d = GridDomain(30, 30)
    with pytest.raises(ValueError, match="too large"):
        brute_force_optimal(np.ones(d.n), d, 3, 2)


def test_single_agent_brute_force_is_greedy():
    d = GridDomain(6, 6)
    rho = np.random.default_rng(2).random(d.n)
    assert brute_force_optimal(rho, d, 1, 1).total_value == pytest.approx(
        greedy_ucb(rho, rho, d, 1, 1).assignment.total_value, abs=1e-15)


def test_greedy_ratio_6x6_against_exhaustive():
    rng = np.random.default_rng(11)
    d = GridDomain(6, 6)
    for _ in range(10):
        rho = rng.random(d.n)
        r = int(rng.integers(1, 3))
        opt = exhaustive_best(rho, 6, 6, 2, r)
        assert brute_force_optimal(rho, d, 2, r).total_value == pytest.approx(opt, abs=1e-12)
        assert greedy_ucb(rho, rho, d, 2, r).assignment.total_value >= GREEDY * opt


def test_argmax_tie_break_and_empty():
    v = np.array([1.0, 3.0, 3.0, 0.0])
    assert argmax_in(v, np.array([True, True, True, True])) == 1
    assert argmax_in(v, np.zeros(4, dtype=bool)) is None


fields = st.integers(0, 2 ** 32 - 1)


@given(fields, st.integers(0, 2), st.data())
@settings(max_examples=80, deadline=None)
def test_submodular_and_monotone(seed, r, data):
    d = GridDomain(6, 6)
    rng = np.random.default_rng(seed)
    rho = rng.random(d.n) * (rng.random(d.n) < 0.7)
    a = data.draw(st.lists(st.integers(0, d.n - 1), max_size=3))
    b = a + data.draw(st.lists(st.integers(0, d.n - 1), max_size=3))
    e = data.draw(st.integers(0, d.n - 1))
    fa, fb = coverage_value(rho, d, a, r), coverage_value(rho, d, b, r)
    assert fa <= fb + 1e-15
    assert marginal_gain(rho, d, a, e, r) >= marginal_gain(rho, d, b, e, r) - 1e-15
    assert fb == pytest.approx(union_coverage(rho, 6, 6, b, r), abs=1e-12)


@given(fields, st.permutations(range(4)))
@settings(max_examples=40, deadline=None)
def test_permutation_invariance_and_disjoint_regions(seed, perm):
    d = GridDomain(7, 6)
    rng = np.random.default_rng(seed)
    rho = rng.random(d.n)
    allowed = rng.random(d.n) < 0.8
    xs = list(rng.choice(np.flatnonzero(allowed), 4))
    regs = effective_regions(d, xs, 2, allowed)
    total = sum(r.astype(int) for r in regs)
    assert total.max() <= 1
    shuffled = [xs[i] for i in perm]
    assert coverage_value(rho, d, shuffled, 2, allowed) == pytest.approx(
        coverage_value(rho, d, xs, 2, allowed), abs=1e-13)
