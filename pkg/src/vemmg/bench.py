"""Benchmark harness: iteration counts, convergence factors and error orders.

The model problem is the Poisson equation on the unit square with unit
diffusion, homogeneous Dirichlet data and source
f(x, y) = -2 (x (x - 1) + y (y - 1)), whose exact solution is
u(x, y) = x (1 - x) y (1 - y).

`run_benchmark` sweeps mesh sets x cycle types x smoothing steps x coarse
operator modes, plus CG and preconditioned CG baselines per mesh set, and
writes one CSV row per solver run.  All solver components are deterministic;
with timing disabled the CSV is byte-identical across repeated runs.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.sparse.linalg as spla

from .agglomeration import build_hierarchy, save_hierarchy
from .mesh import export_svg, generate_structured_triangle_mesh
from .solvers import (
    MultigridSolver,
    cg_solve,
    ic_factorize,
    pcg_solve,
)
from .transfer import MODES, coarse_operators
from .vem import assemble_system, error_norms

__all__ = [
    "BenchConfig",
    "parse_config_file",
    "run_benchmark",
    "run_convergence_study",
    "f_source",
    "u_exact",
    "grad_u_exact",
]

log = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "mesh",
    "cells",
    "dofs",
    "cycle",
    "levels",
    "nu",
    "mode",
    "iterations",
    "rho",
    "wall_ms",
    "status",
]

ORDER_COLUMNS = ["n", "cells", "dofs", "delta", "l2_error", "h1_error", "l2_rate", "h1_rate"]


def f_source(x, y):
    return -2.0 * (x * (x - 1.0) + y * (y - 1.0))


def u_exact(x, y):
    return x * (1.0 - x) * y * (1.0 - y)


def grad_u_exact(x, y):
    return (1.0 - 2.0 * x) * y * (1.0 - y), x * (1.0 - x) * (1.0 - 2.0 * y)


@dataclass
class BenchConfig:
    """Benchmark sweep configuration.

    mesh_sets are structured-mesh subdivision counts n (2 n^2 triangles
    each).  levels applies to the v and w cycles; the two-level cycle always
    runs with 2 levels.  target_children holds one coarsening target per
    agglomeration step, finest first, with the last entry reused for deeper
    steps (a single entry applies everywhere).
    """

    mesh_sets: tuple = (16, 23, 31, 44)
    levels: tuple = (3, 4)
    cycles: tuple = ("tl", "w", "v")
    nus: tuple = (2, 4, 6, 8)
    modes: tuple = ("inherited", "noninherited")
    target_children: tuple = (17, 2)
    tol: float = 1e-8
    max_iterations: int = 200
    mu: float = 1.0
    seed: int = 0
    timing: bool = True
    out: str = "bench_out"

    def validate(self) -> None:
        if not self.mesh_sets:
            raise ValueError("mesh_sets must not be empty")
        if not self.cycles:
            raise ValueError("cycles must not be empty")
        if not self.nus:
            raise ValueError("nus must not be empty")
        if not self.modes:
            raise ValueError("modes must not be empty")
        for cycle in self.cycles:
            if cycle not in ("tl", "v", "w"):
                raise ValueError(f"unknown cycle {cycle!r}")
        for mode in self.modes:
            if mode not in MODES:
                raise ValueError(f"unknown mode {mode!r}")
        for j in self.levels:
            if not 2 <= j <= 4:
                raise ValueError(f"levels entries must be in 2..4, got {j}")
        if any(n < 2 for n in self.mesh_sets):
            raise ValueError("mesh_sets entries must be >= 2")
        if not self.target_children or any(t < 1 for t in self.target_children):
            raise ValueError("target_children entries must be >= 1")
        if any(nu < 1 for nu in self.nus):
            raise ValueError("nus entries must be >= 1")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")


def parse_config_file(path) -> dict:
    """Read a line-based `key = value` config file; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


_LIST_INT = ("mesh_sets", "levels", "nus", "target_children")
_LIST_STR = ("cycles", "modes")
_BOOL_WORDS = {"on": True, "true": True, "1": True, "off": False, "false": False, "0": False}


def config_from_values(values: dict, base: BenchConfig | None = None) -> BenchConfig:
    """Apply string key/value overrides (config file or CLI) to a BenchConfig."""
    config = base or BenchConfig()
    updates = {}
    for key, value in values.items():
        if value is None:
            continue
        if key in _LIST_INT:
            updates[key] = tuple(int(t) for t in str(value).replace(",", " ").split())
        elif key in _LIST_STR:
            updates[key] = tuple(str(value).replace(",", " ").split())
        elif key in ("seed", "max_iterations"):
            updates[key] = int(value)
        elif key in ("tol", "mu"):
            updates[key] = float(value)
        elif key == "timing":
            word = str(value).strip().lower()
            if word not in _BOOL_WORDS:
                raise ValueError(f"timing must be on/off, got {value!r}")
            updates[key] = _BOOL_WORDS[word]
        elif key == "out":
            updates[key] = str(value)
        else:
            raise ValueError(f"unknown config key {key!r}")
    config = replace(config, **updates)
    config.validate()
    return config


# ---------------------------------------------------------------------------
# benchmark sweep
# ---------------------------------------------------------------------------


def _row(mesh_id, cells, dofs, cycle, levels, nu, mode, report=None, status="ok"):
    if report is None:
        iterations, rho, wall = 0, 0.0, 0.0
    else:
        iterations, rho, wall = report.iterations, report.rho, report.wall_ms
        if not report.converged and status == "ok":
            status = "not-converged"
    return {
        "mesh": mesh_id,
        "cells": cells,
        "dofs": dofs,
        "cycle": cycle,
        "levels": levels,
        "nu": nu,
        "mode": mode,
        "iterations": iterations,
        "rho": f"{rho:.6f}",
        "wall_ms": f"{wall:.3f}",
        "status": status,
    }


def run_benchmark(config: BenchConfig, write_outputs: bool = True) -> list:
    """Run the full solver sweep and return the result rows.

    Per mesh set the hierarchy, the fine system and the per-mode operator
    ladders are built once and shared across all cycle/nu combinations.
    Failures abort only the affected row; the error lands in its status
    column.  With config.timing False the wall_ms column is written as zero
    so repeated runs produce byte-identical CSV files.
    """
    config.validate()
    out_dir = Path(config.out)
    if write_outputs:
        out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    depths = [2] if "tl" in config.cycles else []
    if any(c in ("v", "w") for c in config.cycles):
        depths.extend(config.levels)
    depth_needed = max(depths)
    for n in config.mesh_sets:
        mesh_id = f"structured-n{n}"
        log.info("mesh set %s", mesh_id)
        mesh = generate_structured_triangle_mesh(n)
        hierarchy = build_hierarchy(mesh, depth_needed, config.target_children)
        system = assemble_system(mesh, config.mu, f_source)
        cells, dofs = mesh.num_cells, system.num_dofs
        if write_outputs:
            mesh_dir = out_dir / "meshes" / mesh_id
            save_hierarchy(hierarchy, mesh_dir)
            for i, level in enumerate(hierarchy.levels):
                export_svg(level, mesh_dir / f"level_{i + 1}.svg")
        ladders = {}
        solvers: dict = {}
        for mode in config.modes:
            try:
                ladders[mode] = coarse_operators(
                    system.A, hierarchy, mu=config.mu, mode=mode
                )
            except Exception as exc:  # recorded per affected row below
                ladders[mode] = exc

        def get_solver(mode: str, depth: int) -> MultigridSolver:
            key = (mode, depth)
            if key not in solvers:
                ladder = ladders[mode]
                if isinstance(ladder, Exception):
                    raise ladder
                if hierarchy.num_levels < depth:
                    raise ValueError(
                        f"hierarchy reached only {hierarchy.num_levels} levels"
                    )
                solvers[key] = MultigridSolver(ladder, n_levels=depth)
            return solvers[key]

        for cycle in config.cycles:
            cycle_levels = (2,) if cycle == "tl" else config.levels
            for depth in cycle_levels:
                for nu in config.nus:
                    for mode in config.modes:
                        try:
                            solver = get_solver(mode, depth)
                            _, report = solver.solve(
                                system.rhs,
                                cycle=cycle,
                                nu=nu,
                                tol=config.tol,
                                max_iterations=config.max_iterations,
                            )
                            rows.append(
                                _row(mesh_id, cells, dofs, cycle, depth, nu, mode, report)
                            )
                        except Exception as exc:
                            status = "error: " + str(exc).replace(",", ";")
                            rows.append(
                                _row(
                                    mesh_id, cells, dofs, cycle, depth, nu, mode,
                                    status=status,
                                )
                            )
        try:
            _, report = cg_solve(
                system.A, system.rhs, tol=config.tol, max_iterations=20 * dofs
            )
            rows.append(_row(mesh_id, cells, dofs, "cg", 1, 0, "-", report))
        except Exception as exc:
            rows.append(
                _row(mesh_id, cells, dofs, "cg", 1, 0, "-",
                     status="error: " + str(exc).replace(",", ";"))
            )
        try:
            factor = ic_factorize(system.A)
            _, report = pcg_solve(
                system.A, system.rhs, factor, tol=config.tol,
                max_iterations=20 * dofs,
            )
            rows.append(_row(mesh_id, cells, dofs, "pcg", 1, 0, "-", report))
        except Exception as exc:
            rows.append(
                _row(mesh_id, cells, dofs, "pcg", 1, 0, "-",
                     status="error: " + str(exc).replace(",", ";"))
            )
    if not config.timing:
        for row in rows:
            row["wall_ms"] = "0.000"
    if write_outputs:
        _write_csv(out_dir / "results.csv", RESULT_COLUMNS, rows)
    return rows


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# convergence study
# ---------------------------------------------------------------------------


def run_convergence_study(
    ns=(4, 8, 16, 32),
    out_dir=None,
    mu: float = 1.0,
    load_rule: str = "centroid",
):
    """Error decay of the discretization under uniform refinement.

    Solves the model problem directly on each structured mesh, measures the
    projected L2 and average-gradient H1 errors against the exact solution,
    and fits decay orders by least squares in log-log scale.  Returns
    (rows, l2_order, h1_order) and writes orders.csv when out_dir is given.
    """
    if len(ns) < 2:
        raise ValueError("need at least two mesh sizes to fit orders")
    rows = []
    deltas, l2s, h1s = [], [], []
    for n in ns:
        mesh = generate_structured_triangle_mesh(n)
        system = assemble_system(mesh, mu, f_source, load_rule=load_rule)
        x = spla.splu(system.A.tocsc()).solve(system.rhs)
        l2, h1 = error_norms(mesh, x, u_exact, grad_u_exact)
        delta = float(np.max(mesh.diameters))
        if deltas:
            l2_rate = np.log(l2s[-1] / l2) / np.log(deltas[-1] / delta)
            h1_rate = np.log(h1s[-1] / h1) / np.log(deltas[-1] / delta)
            rate_cols = {"l2_rate": f"{l2_rate:.4f}", "h1_rate": f"{h1_rate:.4f}"}
        else:
            rate_cols = {"l2_rate": "", "h1_rate": ""}
        deltas.append(delta)
        l2s.append(l2)
        h1s.append(h1)
        rows.append(
            {
                "n": n,
                "cells": mesh.num_cells,
                "dofs": system.num_dofs,
                "delta": f"{delta:.6e}",
                "l2_error": f"{l2:.6e}",
                "h1_error": f"{h1:.6e}",
                **rate_cols,
            }
        )
    log_d = np.log(deltas)
    l2_order = float(np.polyfit(log_d, np.log(l2s), 1)[0])
    h1_order = float(np.polyfit(log_d, np.log(h1s), 1)[0])
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(out_dir / "orders.csv", ORDER_COLUMNS, rows)
    return rows, l2_order, h1_order
