"""
Tests for the instance, solution and convergence log formats
"""

import numpy as np
import pytest

from decomposition import Direction
from dual_bca import ConvergenceRecord
from instance_io import (
    InstanceParseError,
    SolutionParseError,
    canonical,
    parse_instance,
    parse_solution,
    read_instance,
    save_instance,
    write_convergence_csv,
    write_instance,
    write_solution,
)
from instance_model import (
    Assignment,
    ConflictSet,
    Detection,
    DetectionId,
    Instance,
    Transition,
    check_feasible,
    energy,
)
from testing_support import random_feasible_assignment, random_instance

A = DetectionId(1, 0)
B = DetectionId(2, 0)
C = DetectionId(2, 1)


def one_of_each():
    return Instance(
        2,
        (Detection(A, -1.0, 0.0, 0.5), Detection(B, -1.0, 0.5, 0.0), Detection(C, -1.0, 0.5, 0.0)),
        (Transition.division(A, B, C, 2.0), Transition.move(A, B, 0.25)),
        (ConflictSet.of([C, B]),),
    )


# ---------------- parsing ----------------

def test_parse_single_detection():
    instance = parse_instance("H 1 0 -1.0 0.5 0.5\n")
    assert instance.frame_count == 1
    assert instance.detections == (Detection(A, -1.0, 0.5, 0.5),)


def test_comments_and_blank_lines_are_ignored():
    text = "# header\n\nH 1 0 -1 0 0   # trailing\n   \nH 2 0 -2 0 0\nMOVE 1 0 0 0.5\n"
    instance = parse_instance(text)
    assert len(instance.detections) == 2
    assert instance.transitions == (Transition.move(A, B, 0.5),)


def test_ids_may_be_used_before_they_are_defined():
    instance = parse_instance("MOVE 1 0 0 0.5\nH 2 0 -1 0 0\nH 1 0 -1 0 0\n")
    assert instance.frame_count == 2


def test_dangling_reference_reports_its_line():
    with pytest.raises(InstanceParseError) as excinfo:
        parse_instance("H 1 0 -1 0 0\nMOVE 1 0 3 0.5\nH 2 0 -1 0 0\n")
    assert excinfo.value.line == 2
    assert "dangling id" in str(excinfo.value)


@pytest.mark.parametrize("text, line", [
    ("H 1 0 -1.0 0.5\n", 1),
    ("H 1 0 -1 0 0\nH 1 x -1 0 0\n", 2),
    ("H 1 0 abc 0 0\n", 1),
    ("H 1 0 1e5x 0 0\n", 1),
    ("H 1 0 nan 0 0\n", 1),
    ("FOO 1 2\n", 1),
    ("H 1 0 -1 0 0\nCONFSET 1 0\n", 2),
    ("FRAMES 3\nFRAMES 4\n", 2),
    ("H 1 0 -1 0 0\nH 1 0 -2 0 0\n", 2),
    ("H 1 0 -1 -0.5 0\n", 1),
])
def test_grammar_and_validation_errors(text, line):
    with pytest.raises(InstanceParseError) as excinfo:
        parse_instance(text)
    assert excinfo.value.line == line
    assert str(excinfo.value).startswith(f"line {line}: ")


def test_frames_record_sets_the_horizon():
    instance = parse_instance("FRAMES 4\nH 1 0 -1 0 0\n")
    assert instance.frame_count == 4


def test_detection_beyond_frames_is_rejected():
    with pytest.raises(InstanceParseError):
        parse_instance("FRAMES 1\nH 2 0 -1 0 0\n")


def test_empty_text_is_an_empty_instance():
    instance = parse_instance("")
    assert instance.frame_count == 1
    assert instance.detections == ()


# ---------------- writing ----------------

def test_empty_instance_writes_nothing():
    assert write_instance(Instance(1)) == ""


def test_records_are_written_by_frame_then_kind():
    assert write_instance(one_of_each()) == (
        "H 1 0 -1 0 0.5\n"
        "MOVE 1 0 0 0.25\n"
        "DIV 1 0 0 1 2\n"
        "H 2 0 -1 0.5 0\n"
        "H 2 1 -1 0.5 0\n"
        "CONFSET 2 0 1\n"
    )


def test_trailing_empty_frames_are_kept():
    text = write_instance(Instance(5, (Detection(A, -1.0),)))
    assert text == "FRAMES 5\nH 1 0 -1 0 0\n"
    assert parse_instance(text).frame_count == 5


def test_floats_survive_exactly():
    value = 0.1 + 0.2
    instance = Instance(1, (Detection(A, value, 1e-300, 123456789.123456789),))
    assert parse_instance(write_instance(instance)).detections[0] == instance.detections[0]


def test_round_trip_is_canonical_and_stable():
    rng = np.random.default_rng(51)
    for _ in range(500):
        instance = random_instance(rng, max_frames=4, max_per_frame=4)
        text = write_instance(instance)
        parsed = parse_instance(text)
        assert parsed == canonical(instance)
        assert write_instance(parsed) == text


def test_files_round_trip(tmp_path):
    path = tmp_path / "instance.txt"
    save_instance(one_of_each(), str(path))
    assert read_instance(str(path)) == canonical(one_of_each())


# ---------------- solutions ----------------

def test_solution_round_trip():
    rng = np.random.default_rng(52)
    for _ in range(200):
        instance = random_instance(rng, max_frames=4, max_per_frame=4)
        x = random_feasible_assignment(instance, rng)
        value = energy(instance, x)
        text = write_solution(instance, x, value, value - 1.0)
        parsed = parse_solution(instance, text)
        assert parsed.assignment == x
        assert parsed.energy == value
        assert parsed.dual_bound == value - 1.0
        assert check_feasible(instance, parsed.assignment).feasible


def test_solution_text_layout():
    instance = one_of_each()
    x = Assignment({A: 1, B: 1, C: 0}, (0, 1))
    text = write_solution(instance, x, -1.75, -1.75)
    assert text == "ENERGY -1.75\nBOUND -1.75\nGAP 0\nON 1 0\nON 2 0\nLINK MOVE 1 0 0\n"


def test_infeasible_solution_is_not_written():
    instance = one_of_each()
    x = Assignment({A: 1, B: 1, C: 1}, (0, 0))
    with pytest.raises(ValueError, match="conflict"):
        write_solution(instance, x, 0.0, 0.0)


@pytest.mark.parametrize("text", [
    "ENERGY 0\nBOUND 0\n",
    "ENERGY 0\nBOUND 0\nGAP 0\nON 3 0\n",
    "ENERGY 0\nBOUND 0\nGAP 0\nLINK MOVE 1 0 1\n",
    "ENERGY 0\nBOUND 0\nGAP 0\nLINK JUMP 1 0 1\n",
    "ENERGY x\nBOUND 0\nGAP 0\n",
])
def test_malformed_solutions(text):
    with pytest.raises(SolutionParseError):
        parse_solution(one_of_each(), text)


# ---------------- convergence logs ----------------

def test_csv_without_records_is_header_only():
    assert write_convergence_csv([]) == "sweep,direction,dual_bound,primal_energy,wall_time_s\n"


def test_csv_rows():
    records = [
        ConvergenceRecord(1, Direction.FORWARD, -2.5, -2.0, 0.125),
        ConvergenceRecord(2, Direction.BACKWARD, -2.25, None, 0.25),
    ]
    lines = write_convergence_csv(records).splitlines()
    assert len(lines) == 3
    assert lines[1] == "1,forward,-2.5,-2,0.125000"
    assert lines[2] == "2,backward,-2.25,,0.250000"
