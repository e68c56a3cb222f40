#!/usr/bin/env python3
"""Run the full solver benchmark sweep and print a compact iteration table.

Equivalent to `vemmg bench --out bench_out`; pass extra CLI flags through,
e.g. `python3 scripts/run_bench.py --no-timing --out /tmp/bench`.
"""

import csv
import sys
from collections import defaultdict
from pathlib import Path

from vemmg.cli import main


def print_table(results_csv: Path) -> None:
    with open(results_csv, newline="") as handle:
        rows = list(csv.DictReader(handle))
    meshes = sorted({r["mesh"] for r in rows}, key=lambda m: int(m.split("-n")[1]))
    table = defaultdict(dict)
    for row in rows:
        if row["cycle"] in ("cg", "pcg"):
            label = row["cycle"]
        else:
            label = f"{row['cycle']}{row['levels']} nu={row['nu']} {row['mode'][:3]}"
        cell = row["iterations"] if row["status"] == "ok" else "FAIL"
        table[label][row["mesh"]] = cell
    width = max(len(label) for label in table) + 2
    print("iterations per solver configuration")
    print(" " * width + "".join(f"{m.split('-')[1]:>8}" for m in meshes))
    for label in table:
        counts = "".join(f"{table[label].get(m, '-'):>8}" for m in meshes)
        print(f"{label:<{width}}{counts}")


if __name__ == "__main__":
    argv = sys.argv[1:]
    out = "bench_out"
    if "--out" in argv:
        out = argv[argv.index("--out") + 1]
    else:
        argv = [*argv, "--out", out]
    code = main(["bench", *argv])
    print_table(Path(out) / "results.csv")
    sys.exit(code)
