#!/usr/bin/env python3
"""Run the discretization error convergence study.

Equivalent to `vemmg study --out study_out`; pass extra CLI flags through,
e.g. `python3 scripts/run_study.py --ns 4,8,16,32,64`.
"""

import sys

from vemmg.cli import main

if __name__ == "__main__":
    argv = sys.argv[1:]
    if "--out" not in argv:
        argv = [*argv, "--out", "study_out"]
    sys.exit(main(["study", *argv]))
