"""
Tests for the weighted set packing solver
"""

import numpy as np
import pytest

from set_packing import PackingProblem, is_packing, packing_value, solve_packing
from testing_support import enumerate_packing


def random_problem(rng, max_items=15, grid=False):
    n = int(rng.integers(1, max_items + 1))
    if grid:
        scores = [float(rng.choice([-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0])) for _ in range(n)]
    else:
        scores = [float(rng.normal(-0.5, 1.0)) for _ in range(n)]
    conflicts = []
    for _ in range(int(rng.integers(0, n + 1))):
        size = int(rng.integers(2, min(n, 5) + 1)) if n >= 2 else 0
        if size:
            conflicts.append(sorted(int(i) for i in rng.choice(n, size=size, replace=False)))
    return PackingProblem.of(scores, conflicts)


def test_more_negative_of_two_exclusive_items_wins():
    mu = solve_packing(PackingProblem.of([-3.0, -2.0], [[0, 1]]))
    assert list(mu) == [1, 0]
    assert packing_value(PackingProblem.of([-3.0, -2.0], [[0, 1]]), mu) == -3.0


def test_nonnegative_scores_stay_off():
    assert list(solve_packing(PackingProblem.of([1.0, 2.0]))) == [0, 0]


def test_zero_scores_stay_off():
    assert list(solve_packing(PackingProblem.of([0.0, -1.0, 0.0], [[0, 1]]))) == [0, 1, 0]


def test_empty_problem():
    assert len(solve_packing(PackingProblem.of([]))) == 0


def test_ties_prefer_lower_indices_off():
    # {0} and {1, 2} tie at -2; the lexicographically smaller vector keeps item 0 off
    problem = PackingProblem.of([-2.0, -1.0, -1.0], [[0, 1], [0, 2]])
    assert list(solve_packing(problem)) == [0, 1, 1]


def test_transitively_overlapping_sets():
    problem = PackingProblem.of([-1.0, -1.5, -1.0, -1.5, -1.0], [[0, 1], [1, 2], [2, 3], [3, 4]])
    mu = solve_packing(problem)
    assert packing_value(problem, mu) == -3.0
    assert is_packing(problem, mu)


def test_out_of_range_member_is_rejected():
    with pytest.raises(ValueError):
        PackingProblem.of([-1.0], [[0, 1]])


def test_exact_against_enumeration():
    rng = np.random.default_rng(15)
    for n in range(500):
        grid = n % 2 == 0
        problem = random_problem(rng, grid=grid)
        mu = solve_packing(problem)
        expected_value, expected_mu = enumerate_packing(problem.scores, problem.conflicts)
        assert is_packing(problem, mu)
        assert packing_value(problem, mu) == expected_value
        assert packing_value(problem, mu) <= 0.0
        if grid:
            assert tuple(int(m) for m in mu) == expected_mu


def test_nonnegative_items_never_matter():
    rng = np.random.default_rng(16)
    for _ in range(100):
        problem = random_problem(rng, max_items=10)
        clipped = PackingProblem(tuple(min(s, 0.0) for s in problem.scores), problem.conflicts)
        negative_only = tuple(s if s < 0 else 0.0 for s in problem.scores)
        assert enumerate_packing(problem.scores, problem.conflicts)[0] == enumerate_packing(negative_only, problem.conflicts)[0]
        assert packing_value(problem, solve_packing(problem)) == packing_value(clipped, solve_packing(clipped))
