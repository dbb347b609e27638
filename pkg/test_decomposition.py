"""
Tests for the decomposed graph, reparametrized costs and factor minima
"""

import numpy as np
import pytest

from decomposition import (
    ConflictFactorState,
    DetectionCosts,
    DetectionFactorState,
    Reparametrization,
    decompose,
    decomposed_energy,
    dual_value,
    factor_states,
    min_active_detection_factor,
    min_conflict_factor,
    min_detection_factor,
    reparametrized_costs,
)
from exact_oracle import brute_force_solve
from instance_model import (
    ConflictSet,
    Detection,
    DetectionId,
    Instance,
    InstanceValidationError,
    Transition,
    energy,
)
from testing_support import (
    enumerate_conflict_states,
    enumerate_detection_minimum,
    random_detection_costs,
    random_feasible_assignment,
    random_instance,
    random_lambda,
    small_instance,
)

U = DetectionId(1, 0)
V = DetectionId(2, 0)
W = DetectionId(2, 1)


def costs(det, in_=(), out=()):
    return DetectionCosts(det, np.array(in_, dtype=float), np.array(out, dtype=float))


# ---------------- decompose ----------------

def test_move_cost_is_split_in_halves():
    graph = decompose(Instance(2, (Detection(U, 0.0), Detection(V, 0.0)), (Transition.move(U, V, 1.0),)))
    assert graph.detection_factor(0).out_edges[0][1] == 0.5
    assert graph.detection_factor(1).in_edges[0][1] == 0.5
    assert graph.size == 1


def test_division_cost_is_split_in_thirds():
    instance = Instance(
        2,
        (Detection(U, 0.0), Detection(V, 0.0), Detection(W, 0.0)),
        (Transition.division(U, V, W, 0.9),),
    )
    graph = decompose(instance)
    assert graph.detection_factor(0).out_edges[0][1] == pytest.approx(0.3)
    assert graph.detection_factor(1).in_edges[0][1] == pytest.approx(0.3)
    assert graph.detection_factor(2).in_edges[0][1] == pytest.approx(0.3)
    # one coordinate per child
    assert graph.detection_factor(0).out_edges[0][0].coords == (0, 1)
    assert graph.size == 2


def test_instance_without_transitions_has_only_conflict_coordinates():
    ids = [DetectionId(1, i) for i in range(3)]
    instance = Instance(1, tuple(Detection(d, -1.0) for d in ids), (), (ConflictSet.of(ids),))
    graph = decompose(instance)
    assert graph.size == 3
    for u in range(3):
        factor = graph.detection_factor(u)
        assert factor.in_edges == () and factor.out_edges == ()
    assert graph.conflict_factor(0).costs == (0.0, 0.0, 0.0)


def test_boundary_costs_are_folded():
    instance = Instance(
        2,
        (Detection(U, -1.0, 0.2, 0.3), Detection(V, -1.0, 0.4, 0.5)),
        (Transition.move(U, V, 1.0),),
    )
    graph = decompose(instance)
    # frame 1 pays no appearance, frame T no disappearance
    assert graph.theta_det[0] == pytest.approx(-1.0 + 0.3)
    assert graph.theta_det[1] == pytest.approx(-1.0 + 0.4)
    assert graph.theta_out[0] == pytest.approx(0.5 - 0.3)
    assert graph.theta_in[0] == pytest.approx(0.5 - 0.4)


def test_dual_vector_length_counts_division_twice():
    rng = np.random.default_rng(3)
    for _ in range(50):
        instance = random_instance(rng, max_frames=4, max_per_frame=4)
        graph = decompose(instance)
        moves = sum(1 for tr in instance.transitions if len(tr.targets) == 1)
        divisions = len(instance.transitions) - moves
        conflict_edges = sum(len(c.members) for c in instance.conflicts)
        assert graph.size == moves + 2 * divisions + conflict_edges
        assert Reparametrization.zeros(graph).values.shape == (graph.size,)


def test_decompose_rejects_invalid_instances():
    with pytest.raises(InstanceValidationError):
        decompose(Instance(1, (Detection(V, 0.0),)))


# ---------------- reparametrized costs ----------------

def test_zero_dual_is_identity():
    rng = np.random.default_rng(1)
    instance = random_instance(rng, max_frames=3, max_per_frame=4)
    graph = decompose(instance)
    lam = Reparametrization.zeros(graph)
    for u, det_id in enumerate(graph.det_ids):
        c = reparametrized_costs(graph, lam, det_id)
        assert c.det == graph.theta_det[u]
        np.testing.assert_array_equal(c.in_, graph.theta_in[graph.in_range(u)])
        np.testing.assert_array_equal(c.out, graph.theta_out[graph.out_range(u)])


def test_conflict_coordinate_moves_cost_from_detection_to_conflict():
    ids = [DetectionId(1, 0), DetectionId(1, 1)]
    instance = Instance(1, tuple(Detection(d, -1.0) for d in ids), (), (ConflictSet.of(ids),))
    graph = decompose(instance)
    lam = Reparametrization.zeros(graph)
    lam.values[graph.conflict_coords_of(0)[0]] = 0.7
    assert reparametrized_costs(graph, lam, 0)[0] == pytest.approx(0.7)
    assert reparametrized_costs(graph, lam, ids[0]).det == pytest.approx(-1.7)


def test_single_factor_view_matches_vectorized_pass():
    rng = np.random.default_rng(8)
    for _ in range(30):
        instance = random_instance(rng, max_frames=3, max_per_frame=4)
        graph = decompose(instance)
        lam = random_lambda(graph, rng)
        flat = graph.reparametrize(lam)
        for u, det_id in enumerate(graph.det_ids):
            single = reparametrized_costs(graph, lam, det_id)
            assert single.det == pytest.approx(flat.det[u])
            np.testing.assert_allclose(single.in_, flat.detection(u).in_)
            np.testing.assert_allclose(single.out, flat.detection(u).out)
        for c in range(graph.conflict_count):
            np.testing.assert_allclose(reparametrized_costs(graph, lam, c), flat.conflict(c))


def test_reparametrization_invariance():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        instance = random_instance(rng, max_frames=3, max_per_frame=3)
        graph = decompose(instance)
        x = random_feasible_assignment(instance, rng)
        states = factor_states(graph, x)
        base = decomposed_energy(graph.reparametrize(Reparametrization.zeros(graph)), states)
        shifted = decomposed_energy(graph.reparametrize(random_lambda(graph, rng, 2.0)), states)
        assert abs(base - shifted) <= 1e-9 * (1 + abs(base))
        # cost split and boundary folding reproduce the standard energy
        assert base == pytest.approx(energy(instance, x), rel=1e-9, abs=1e-9)


def test_dual_vector_length_is_checked():
    graph = decompose(Instance(2, (Detection(U, 0.0), Detection(V, 0.0)), (Transition.move(U, V, 1.0),)))
    with pytest.raises(ValueError):
        dual_value(graph, Reparametrization(np.zeros(3)))


# ---------------- factor minima ----------------

def test_min_detection_factor_example():
    value, state = min_detection_factor(costs(-1.0, [0.5, -0.2], [0.3]))
    assert value == pytest.approx(-1.2)
    assert state == DetectionFactorState(1, 1, None)


def test_positive_detection_factor_is_off():
    value, state = min_detection_factor(costs(1.0, [2.0], [3.0]))
    assert value == 0.0
    assert state == DetectionFactorState()


def test_active_minimum_is_the_score():
    value, state = min_active_detection_factor(costs(-1.0, [-0.2], [0.3]))
    assert value == pytest.approx(-1.2)
    assert state == DetectionFactorState(1, 0, None)
    assert min_active_detection_factor(costs(0.0, [0.0], [0.0])).value == 0.0


def test_detection_factor_ties_prefer_off_then_no_edge():
    assert min_detection_factor(costs(0.0)).state == DetectionFactorState()
    assert min_detection_factor(costs(-1.0, [0.0, 0.0], [-1.0, -1.0])).state == DetectionFactorState(1, None, 0)


def test_detection_factor_minimum_matches_enumeration():
    rng = np.random.default_rng(77)
    for n in range(1000):
        grid = n % 2 == 0
        c = random_detection_costs(rng, int(rng.integers(0, 6)), int(rng.integers(0, 6)), grid=grid)
        value, state = min_detection_factor(c)
        expected_value, expected_state = enumerate_detection_minimum(c)
        assert value == expected_value
        assert c.active_cost(state) == value
        if grid:
            assert state == expected_state
        active_value, _ = min_active_detection_factor(c)
        assert active_value == enumerate_detection_minimum(c, active_only=True)[0]


def test_min_conflict_factor_examples():
    best, second = min_conflict_factor([-2.0, 1.0])
    assert best == (-2.0, ConflictFactorState(0))
    assert second == (0.0, ConflictFactorState(None))

    best, second = min_conflict_factor([0.0, 0.0])
    assert best == (0.0, ConflictFactorState(None))
    assert second == (0.0, ConflictFactorState(0))


def test_conflict_factor_minimum_matches_enumeration():
    rng = np.random.default_rng(78)
    for n in range(1000):
        grid = n % 2 == 0
        values = [float(rng.choice([-1.0, -0.5, 0.0, 0.5])) if grid else float(rng.normal()) for _ in range(6)]
        best, second = min_conflict_factor(values)
        expected = enumerate_conflict_states(values)
        assert (best.value, best.state.active_member) == expected[0]
        assert (second.value, second.state.active_member) == expected[1]


# ---------------- dual value ----------------

def test_dual_of_nonnegative_costs_is_zero():
    instance = Instance(
        2,
        (Detection(U, 1.0), Detection(V, 2.0)),
        (Transition.move(U, V, 1.0),),
    )
    graph = decompose(instance)
    assert dual_value(graph, Reparametrization.zeros(graph)) == 0.0


def test_dual_of_isolated_detection():
    graph = decompose(Instance(1, (Detection(U, -3.0),)))
    assert dual_value(graph, Reparametrization.zeros(graph)) == -3.0


def test_weak_duality_against_oracle():
    rng = np.random.default_rng(99)
    for _ in range(20):
        instance = small_instance(rng, max_variables=16)
        optimum = brute_force_solve(instance).optimum
        graph = decompose(instance)
        for _ in range(100):
            assert dual_value(graph, random_lambda(graph, rng, 1.5)) <= optimum + 1e-9
