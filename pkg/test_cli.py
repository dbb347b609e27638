"""
Tests for the command-line interface
"""

import numpy as np
import pytest

import cli
from decomposition import SolverInvariantError
from exact_oracle import brute_force_solve
from instance_io import parse_instance, save_instance
from testing_support import chain_instance, small_instance


def fields(text):
    return dict(line.split(" ", 1) for line in text.splitlines() if line)


def instance_file(tmp_path, text, name="instance.txt"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    import os
    for name in list(os.environ):
        if name.startswith("TRACKBCA_"):
            monkeypatch.delenv(name)


# ---------------- solve / check ----------------

def test_solve_single_detection(tmp_path, capsys):
    path = instance_file(tmp_path, "H 1 0 -1 0 0\n")
    assert cli.main(["solve", path]) == 0
    out = fields(capsys.readouterr().out)
    assert out["ENERGY"] == "-1"
    assert out["BOUND"] == "-1"
    assert out["GAP"] == "0"
    assert out["SWEEPS"] == "1"
    assert out["TERMINATION"] == "gap"


def test_solution_and_log_files(tmp_path, capsys):
    path = instance_file(tmp_path, "H 1 0 -1 0 0\nH 2 0 -1 0.5 0\nMOVE 1 0 0 0.1\n")
    solution, log = str(tmp_path / "solution.txt"), str(tmp_path / "log.csv")
    assert cli.main(["solve", path, "--out", solution, "--csv", log]) == 0
    capsys.readouterr()
    with open(log, encoding="utf-8") as f:
        assert f.readline() == "sweep,direction,dual_bound,primal_energy,wall_time_s\n"
    assert cli.main(["check", path, solution]) == 0
    out = fields(capsys.readouterr().out)
    assert out["FEASIBLE"] == "1"
    assert out["ENERGY_MATCH"] == "1"
    assert float(out["ENERGY"]) == pytest.approx(-1.9)


def test_check_rejects_infeasible_solution(tmp_path, capsys):
    path = instance_file(tmp_path, "H 1 0 -1 0 0\nH 1 1 -1 0 0\nCONFSET 1 0 1\n")
    solution = instance_file(tmp_path, "ENERGY -2\nBOUND -2\nGAP 0\nON 1 0\nON 1 1\n", "solution.txt")
    assert cli.main(["check", path, solution]) == 1
    captured = capsys.readouterr()
    assert "conflict" in captured.err
    assert fields(captured.out)["FEASIBLE"] == "0"


def test_check_rejects_wrong_energy(tmp_path, capsys):
    path = instance_file(tmp_path, "H 1 0 -1 0 0\n")
    solution = instance_file(tmp_path, "ENERGY -5\nBOUND -5\nGAP 0\nON 1 0\n", "solution.txt")
    assert cli.main(["check", path, solution]) == 1
    captured = capsys.readouterr()
    assert "energy mismatch" in captured.err
    assert fields(captured.out)["ENERGY_MATCH"] == "0"


def test_check_energy_tolerance_is_absolute(tmp_path, capsys):
    path = instance_file(tmp_path, "H 1 0 -70000 0 0\n")
    close = instance_file(tmp_path, "ENERGY -70000.0000005\nBOUND -70000\nGAP 0\nON 1 0\n", "close.txt")
    assert cli.main(["check", path, close]) == 0
    assert fields(capsys.readouterr().out)["ENERGY_MATCH"] == "1"
    off = instance_file(tmp_path, "ENERGY -69999.99\nBOUND -70000\nGAP 0\nON 1 0\n", "off.txt")
    assert cli.main(["check", path, off]) == 1
    assert fields(capsys.readouterr().out)["ENERGY_MATCH"] == "0"


def test_solver_sandwiches_the_optimum(tmp_path, capsys):
    rng = np.random.default_rng(61)
    for n in range(50):
        instance = small_instance(rng, max_variables=16, max_frames=4)
        path = str(tmp_path / f"instance{n}.txt")
        save_instance(instance, path)
        assert cli.main(["oracle", path]) == 0
        optimum = float(fields(capsys.readouterr().out)["OPTIMUM"])
        assert optimum == pytest.approx(brute_force_solve(instance).optimum)
        assert cli.main(["solve", path, "--max-sweeps", "200"]) == 0
        out = fields(capsys.readouterr().out)
        assert float(out["BOUND"]) <= optimum + 1e-6 * (1 + abs(optimum))
        assert float(out["ENERGY"]) >= optimum - 1e-9


# ---------------- exit codes ----------------

def test_solver_invariant_failure_exits_with_2(tmp_path, capsys, monkeypatch):
    path = instance_file(tmp_path, "H 1 0 -1 0 0\n")

    def broken(graph, config):
        raise SolverInvariantError("dual decreased")

    monkeypatch.setattr(cli, "run", broken)
    assert cli.main(["solve", path]) == 2
    assert "error: dual decreased" in capsys.readouterr().err


def test_malformed_instance_exits_with_1(tmp_path, capsys):
    path = instance_file(tmp_path, "H 1 0\n")
    assert cli.main(["solve", path]) == 1
    assert capsys.readouterr().err.startswith("error: line 1:")


def test_missing_file_exits_with_1(tmp_path, capsys):
    assert cli.main(["stats", str(tmp_path / "absent.txt")]) == 1
    assert "error:" in capsys.readouterr().err


def test_oracle_budget_exits_with_1(tmp_path, capsys):
    path = str(tmp_path / "chain.txt")
    save_instance(chain_instance(10), path)
    assert cli.main(["oracle", path, "--budget", "5"]) == 1
    assert "budget" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [[], ["solve"], ["solve", "x", "--gap", "-1"], ["launch"]])
def test_bad_arguments_exit_with_1(argv, capsys):
    assert cli.main(argv) == 1


# ---------------- generate / stats ----------------

def test_generate_to_standard_output(capsys):
    assert cli.main(["generate", "--seed", "3"]) == 0
    instance = parse_instance(capsys.readouterr().out)
    assert instance.frame_count == 10
    assert instance.detections


def test_generate_with_config_then_stats(tmp_path, capsys):
    config = instance_file(tmp_path, "gen.frames = 3\ngen.initial_objects = 2\ngen.division_prob = 0\n", "gen.conf")
    path = str(tmp_path / "generated.txt")
    assert cli.main(["generate", "--config", config, "--out", path]) == 0
    generated = fields(capsys.readouterr().out)
    assert set(generated) == {"DETECTIONS", "TRANSITIONS", "CONFLICTS", "TRUTH_ENERGY"}
    assert cli.main(["stats", path]) == 0
    stats = fields(capsys.readouterr().out)
    assert stats["FRAMES"] == "3"
    assert stats["DETECTIONS"] == generated["DETECTIONS"]
    assert stats["DIVISIONS"] == "0"


def test_stats_of_a_small_instance(tmp_path, capsys):
    path = instance_file(tmp_path, (
        "H 1 0 -1 0 0\nH 2 0 -1 0 0\nH 2 1 -1 0 0\n"
        "MOVE 1 0 0 0.5\nDIV 1 0 0 1 1\nCONFSET 2 0 1\n"
    ))
    assert cli.main(["stats", path]) == 0
    assert fields(capsys.readouterr().out) == {
        "FRAMES": "2",
        "DETECTIONS": "3",
        "DETECTIONS_PER_FRAME": "1.5",
        "MAX_DETECTIONS_PER_FRAME": "2",
        "CONFLICTS": "1",
        "CONFLICTS_PER_FRAME": "0.5",
        "MAX_CONFLICT_CLIQUE": "2",
        "MOVES": "1",
        "DIVISIONS": "1",
    }
