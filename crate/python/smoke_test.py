"""Smoke test for the Python extension.

Builds it with cargo when no installed module is found, then exercises
synthesis, simulation and worst-case analysis on a short horizon.

    python python/smoke_test.py
"""

import importlib
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def load():
    try:
        return importlib.import_module("slsregret")
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "slsregret-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "release" / "libslsregret.so"
    tmp = Path(tempfile.mkdtemp())
    shutil.copy(lib, tmp / "slsregret.so")
    sys.path.insert(0, str(tmp))
    return importlib.import_module("slsregret")


def main():
    sls = load()
    horizon = 8
    system = sls.System.spring_damper(0.2, 0.1, 0.1, horizon)
    assert (system.state_dim, system.input_dim, system.disturbance_dim) == (2, 1, 2)
    problem = sls.Problem(system, [[0.1, 0.0], [0.0, 0.1]], [[1.0]])

    x0 = [1.0, 2.0]
    w = [[math.sqrt(0.5)] * 2 for _ in range(horizon)]
    j_star = problem.benchmark_cost(x0, w)

    energy = problem.synthesize("energy_regret", x0=x0, omega=float(horizon))
    pointwise = problem.synthesize("pointwise_regret", x0=x0, p=[[1.0, 0.0], [0.0, 1.0]])
    h2 = problem.h2()
    assert pointwise.gamma_star <= energy.gamma_star * (1 + 1e-6)
    assert len(pointwise.multipliers) == horizon + 1

    for name, ctrl in [("h2", h2), ("energy_regret", energy), ("pointwise_regret", pointwise)]:
        run = ctrl.simulate(problem, x0, w)
        assert abs(run["benchmark"] - j_star) <= 1e-9 * j_star
        assert abs(run["cost"] - run["benchmark"] - run["regret"]) <= 1e-9 * run["cost"]
        print(f"{name:<18} cost {run['cost']:.4f} regret {run['regret']:.4f}")
    assert energy.simulate(problem, x0, w)["regret"] <= energy.gamma_star * (1 + 1e-6)

    worst, value = energy.worst_case_disturbance(problem, x0, float(horizon))
    assert abs(value - energy.gamma_star) <= 1e-4 * energy.gamma_star
    assert abs(energy.simulate(problem, x0, worst)["regret"] - value) <= 1e-4 * value

    try:
        problem.synthesize("nope", x0=x0, omega=1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown mode accepted")
    print("ok")


if __name__ == "__main__":
    main()
