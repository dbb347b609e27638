#!/usr/bin/env python
"""
Run All - Convenience Script
Execute the complete solver workflow: environment, tests, generate, oracle vs. solve
"""

import argparse
import importlib.util
import os
import subprocess
import sys
import tempfile


REQUIRED_PACKAGES = {
    "numpy": "dual vector and factor cost arrays",
    "networkx": "conflict graph components",
    "pydantic": "validated parameter models",
    "dotenv": "key = value configuration files (python-dotenv)",
    "pytest": "test runner",
}


def print_banner(text):
    """Print a formatted banner"""
    print("\n" + "=" * 70)
    print(f"  {text}")
    print("=" * 70 + "\n")


def check_environment():
    """Check that every required package is importable"""
    print_banner("STEP 1: Checking Environment")

    missing = []
    for module, desc in REQUIRED_PACKAGES.items():
        if importlib.util.find_spec(module) is None:
            missing.append(f"{module} ({desc})")
            print(f"[missing] {module}")
        else:
            print(f"[ok]      {module}")

    if missing:
        print("\nMissing packages:")
        for m in missing:
            print(f"   - {m}")
        print("\nInstall them using:")
        print("  pip install -r requirements.txt")
        return False

    print("\nAll packages available")
    return True


def run_tests(slow=False):
    """Run the test suite"""
    print_banner("STEP 2: Running Test Suite")

    command = [sys.executable, "-m", "pytest", "-q"]
    if slow:
        command += ["-m", "slow or not slow"]
    try:
        result = subprocess.run(command, capture_output=True, text=True)
    except OSError as e:
        print(f"Error running tests: {e}")
        return False
    print(result.stdout)
    if result.returncode != 0:
        print("Some tests failed")
        print(result.stderr)
        return False
    print("All tests passed")
    return True


def run_comparison(seed, workdir):
    """Generate a small instance and compare oracle optimum with the solver bounds"""
    print_banner(f"STEP 3: Oracle vs. Solver (seed {seed})")

    from cli import main as cli_main
    from exact_oracle import OracleBudgetExceeded, brute_force_solve
    from decomposition import decompose
    from dual_bca import SolverConfig, run
    from instance_io import save_instance
    from synth_gen import GenParams, generate

    instance, _ = generate(GenParams(frames=3, initial_objects=2, hypotheses_per_object=2, division_prob=0.2, seed=seed))
    path = os.path.join(workdir, f"synthetic_{seed}.txt")
    save_instance(instance, path)
    print(f"Instance written to {path}")

    if cli_main(["stats", path]) != 0:
        return False

    result = run(decompose(instance), SolverConfig(max_sweeps=200))
    print(f"solver: primal {result.energy:.10g}, dual {result.dual_bound:.10g}, {result.sweeps} sweeps ({result.termination})")
    try:
        optimum = brute_force_solve(instance).optimum
    except OracleBudgetExceeded as e:
        print(f"Oracle skipped: {e}")
        return True
    print(f"oracle: {optimum:.10g}")

    ok = result.dual_bound <= optimum + 1e-6 and optimum <= result.energy + 1e-6
    print("Bounds hold" if ok else "Bounds VIOLATED")
    return ok


def main():
    """Main execution"""
    parser = argparse.ArgumentParser(
        description="Tracking solver - Run All Script"
    )
    parser.add_argument(
        "--skip-tests",
        action="store_true",
        help="Skip running tests"
    )
    parser.add_argument(
        "--slow",
        action="store_true",
        help="Include the slow scale tests"
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=0,
        help="Seed of the synthetic comparison instance (default: 0)"
    )
    parser.add_argument(
        "--workdir",
        help="Directory for generated files (default: a temporary directory)"
    )

    args = parser.parse_args()

    print("\n" + "=" * 70)
    print("  Dual Block-Coordinate Ascent Tracking Solver".center(70))
    print("  Complete Workflow".center(70))
    print("=" * 70)

    if not check_environment():
        print("\nEnvironment check failed. Install the requirements first.")
        sys.exit(1)

    if not args.skip_tests:
        if not run_tests(args.slow):
            sys.exit(1)
    else:
        print_banner("STEP 2: Skipping Tests")

    if args.workdir:
        os.makedirs(args.workdir, exist_ok=True)
        ok = run_comparison(args.seed, args.workdir)
    else:
        with tempfile.TemporaryDirectory() as workdir:
            ok = run_comparison(args.seed, workdir)
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
