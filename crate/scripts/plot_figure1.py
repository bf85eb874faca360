"""Render cumulative-cost and phase plots from a `slsregret compare` output directory.

    python scripts/plot_figure1.py out/spring_damper [scenario]
"""

import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_columns(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {k: [float(r[k]) if r[k] else float("nan") for r in rows] for k in rows[0]}


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "out")
    scenario = sys.argv[2] if len(sys.argv) > 2 else "constant"
    cum = read_columns(out / "cumulative" / f"{scenario}.csv")
    fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4))
    for name, values in cum.items():
        if name != "step":
            left.plot(cum["step"], values, label=name)
    left.set_xlabel("step")
    left.set_ylabel("cumulative cost")
    left.legend()
    for states in sorted((out / "states").glob(f"*/{scenario}.csv")):
        x = read_columns(states)
        right.plot(x["x0"], x["x1"], label=states.parent.name)
    right.set_xlabel("x0")
    right.set_ylabel("x1")
    right.legend()
    fig.tight_layout()
    target = out / f"figure_{scenario}.png"
    fig.savefig(target, dpi=150)
    print(target)


if __name__ == "__main__":
    main()
