"""
Tests for the synthetic instance generator
"""

import pytest
from pydantic import ValidationError

from exact_oracle import brute_force_solve
from instance_io import write_instance
from instance_model import DetectionId, TransitionKind, check_feasible, energy, validate
from synth_gen import GenParams, generate


def test_single_cell_single_frame():
    instance, truth = generate(GenParams(frames=1, initial_objects=1, hypotheses_per_object=1))
    assert instance.frame_count == 1
    assert [d.id for d in instance.detections] == [DetectionId(1, 0)]
    assert instance.transitions == () and instance.conflicts == ()
    assert truth.detection_on == {DetectionId(1, 0): 1}


def test_no_cells_gives_empty_frames():
    instance, truth = generate(GenParams(frames=3, initial_objects=0))
    assert instance.frame_count == 3
    assert instance.detections == ()
    assert energy(instance, truth) == 0.0


def test_no_divisions_without_division_probability():
    for seed in range(10):
        instance, _ = generate(GenParams(frames=5, initial_objects=4, division_prob=0.0, seed=seed))
        assert all(tr.kind is TransitionKind.MOVE for tr in instance.transitions)


def test_ground_truth_is_feasible():
    for seed in range(20):
        p = GenParams(frames=6, initial_objects=4, division_prob=0.3, hypotheses_per_object=3, seed=seed)
        instance, truth = generate(p)
        assert validate(instance).ok
        assert check_feasible(instance, truth).feasible


def test_every_cell_gets_one_conflict_set():
    p = GenParams(frames=4, initial_objects=3, hypotheses_per_object=3, division_prob=0.0, seed=5)
    instance, truth = generate(p)
    assert all(len(c.members) == 3 for c in instance.conflicts)
    for c in instance.conflicts:
        assert sum(truth.detection_on[m] for m in c.members) == 1
    covered = sorted(m for c in instance.conflicts for m in c.members)
    assert covered == sorted(d.id for d in instance.detections)


def test_output_depends_on_the_seed_alone():
    p = GenParams(frames=5, initial_objects=3, division_prob=0.2, seed=11)
    first, truth1 = generate(p)
    second, truth2 = generate(p)
    assert write_instance(first) == write_instance(second)
    assert truth1 == truth2
    other, _ = generate(p.model_copy(update={"seed": 12}))
    assert write_instance(other) != write_instance(first)


def test_ground_truth_is_never_below_the_optimum():
    for seed in range(5):
        p = GenParams(frames=2, initial_objects=2, hypotheses_per_object=2, division_prob=0.0, seed=seed)
        instance, truth = generate(p)
        optimum = brute_force_solve(instance, budget=32).optimum
        assert energy(instance, truth) >= optimum - 1e-9


@pytest.mark.parametrize("update", [
    {"frames": 0},
    {"division_prob": 1.5},
    {"hypotheses_per_object": 0},
    {"candidate_radius": 0.0},
    {"seed": -1},
    {"motion_sigma": float("nan")},
    {"colour": "red"},
])
def test_invalid_parameters_are_rejected(update):
    with pytest.raises(ValidationError):
        GenParams(**update)
