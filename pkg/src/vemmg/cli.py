"""Command line entry points: mesh generation, hierarchies, solves, benchmarks."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .agglomeration import build_hierarchy, check_boundary_compatibility, save_hierarchy
from .bench import (
    BenchConfig,
    config_from_values,
    f_source,
    parse_config_file,
    run_benchmark,
    run_convergence_study,
)
from .mesh import (
    export_svg,
    generate_structured_triangle_mesh,
    load_triangle_format,
    mesh_quality,
    save_mesh,
)
from .solvers import MultigridSolver, two_grid_spectral_radius
from .transfer import coarse_operators
from .vem import assemble_system

log = logging.getLogger("vemmg")


def _parse_targets(value):
    return tuple(int(t) for t in str(value).replace(",", " ").split())


def _load_mesh_args(args):
    if args.node or args.ele:
        if not (args.node and args.ele):
            raise SystemExit("--node and --ele must be given together")
        mesh = load_triangle_format(args.node, args.ele)
        return mesh, Path(args.node).stem
    return generate_structured_triangle_mesh(args.n), f"structured-n{args.n}"


def _add_mesh_source(parser, default_n=16):
    parser.add_argument("--n", type=int, default=default_n,
                        help="structured mesh subdivisions (2*n*n triangles)")
    parser.add_argument("--node", help="Triangle .node file to import")
    parser.add_argument("--ele", help="Triangle .ele file to import")


def cmd_mesh(args) -> int:
    mesh, mesh_id = _load_mesh_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_mesh(mesh, out / "mesh.txt")
    export_svg(mesh, out / "mesh.svg")
    quality = mesh_quality(mesh)
    print(f"{mesh_id}: {mesh.num_cells} cells, {mesh.num_vertices} vertices, "
          f"{int(np.sum(~mesh.boundary))} interior")
    print(f"diameter range [{quality.diameter_min:.4e}, {quality.diameter_max:.4e}], "
          f"uniformity {quality.uniformity:.4f}")
    print(f"edge/diameter range [{quality.edge_ratio_min:.4f}, {quality.edge_ratio_max:.4f}], "
          f"all cells star-shaped: {quality.all_star}")
    print(f"wrote {out / 'mesh.txt'} and {out / 'mesh.svg'}")
    return 0


def cmd_hierarchy(args) -> int:
    mesh, mesh_id = _load_mesh_args(args)
    hierarchy = build_hierarchy(mesh, args.levels, _parse_targets(args.target_children))
    out = Path(args.out)
    save_hierarchy(hierarchy, out)
    for i, level in enumerate(hierarchy.levels):
        export_svg(level, out / f"level_{i + 1}.svg")
        print(f"level {i + 1}: {level.num_cells} cells, {level.num_vertices} vertices, "
              f"{int(np.sum(~level.boundary))} interior")
    if hierarchy.num_levels < args.levels:
        print(f"stopped early at {hierarchy.num_levels} of {args.levels} levels")
    violations = check_boundary_compatibility(hierarchy)
    if violations:
        print(f"boundary compatibility FAILED: {len(violations)} violation(s)")
        for level, cell, vertex in violations[:10]:
            print(f"  level {level} cell {cell} misses fine vertex {vertex}")
        return 1
    print(f"boundary compatibility OK; wrote {hierarchy.num_levels} levels to {out}")
    return 0


def cmd_solve(args) -> int:
    mesh, mesh_id = _load_mesh_args(args)
    levels = 2 if args.cycle == "tl" else args.levels
    hierarchy = build_hierarchy(mesh, levels, _parse_targets(args.target_children))
    if hierarchy.num_levels < levels:
        raise SystemExit(
            f"hierarchy reached only {hierarchy.num_levels} of {levels} levels"
        )
    system = assemble_system(mesh, args.mu, f_source)
    ladder = coarse_operators(system.A, hierarchy, mu=args.mu, mode=args.mode)
    solver = MultigridSolver(ladder, n_levels=levels)
    _, report = solver.solve(system.rhs, cycle=args.cycle, nu=args.nu,
                             tol=args.tol, max_iterations=args.max_iterations)
    print(f"{mesh_id}: {mesh.num_cells} cells, {system.num_dofs} dofs")
    print(f"cycle {args.cycle}, levels {levels}, nu {args.nu}, mode {args.mode}")
    state = "converged" if report.converged else "NOT converged"
    print(f"iterations {report.iterations} ({state}), rho {report.rho:.4f}, "
          f"wall {report.wall_ms:.1f} ms")
    if args.two_grid:
        probe = two_grid_spectral_radius(ladder, nu=args.nu, seed=args.seed)
        settled = "settled" if probe.converged else "not settled"
        print(f"two-grid spectral radius {probe.rho:.4f} ({settled})")
    return 0 if report.converged else 1


def cmd_bench(args) -> int:
    base = BenchConfig()
    if args.config:
        base = config_from_values(parse_config_file(args.config), base)
    overrides = {
        "mesh_sets": args.mesh_sets,
        "levels": args.levels,
        "cycles": args.cycle,
        "nus": args.nu,
        "modes": args.mode,
        "target_children": args.target_children,
        "tol": args.tol,
        "seed": args.seed,
        "out": args.out,
    }
    if args.no_timing:
        overrides["timing"] = "off"
    config = config_from_values(
        {k: v for k, v in overrides.items() if v is not None}, base
    )
    rows = run_benchmark(config)
    failed = [r for r in rows if r["status"] != "ok"]
    print(f"wrote {len(rows)} rows to {Path(config.out) / 'results.csv'}")
    if failed:
        print(f"{len(failed)} row(s) failed:")
        for row in failed[:10]:
            print(f"  {row['mesh']} {row['cycle']} J={row['levels']} nu={row['nu']} "
                  f"{row['mode']}: {row['status']}")
    return 1 if failed else 0


def cmd_study(args) -> int:
    ns = tuple(int(t) for t in args.ns.replace(",", " ").split())
    rows, l2_order, h1_order = run_convergence_study(
        ns=ns, out_dir=args.out, load_rule=args.load_rule
    )
    for row in rows:
        print(f"n={row['n']:>3} dofs={row['dofs']:>5} "
              f"l2={row['l2_error']} h1={row['h1_error']}")
    print(f"fitted orders: l2 {l2_order:.3f}, h1 {h1_order:.3f}")
    print(f"wrote {Path(args.out) / 'orders.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vemmg",
        description="Multigrid solvers for lowest-order virtual element "
        "discretizations on agglomerated polygonal meshes.",
    )
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p_mesh = sub.add_parser("mesh", help="generate or import a mesh, export txt/svg")
    _add_mesh_source(p_mesh)
    p_mesh.add_argument("--out", default="mesh_out")
    p_mesh.set_defaults(func=cmd_mesh)

    p_hier = sub.add_parser("hierarchy", help="build and export an agglomerated hierarchy")
    _add_mesh_source(p_hier)
    p_hier.add_argument("--levels", type=int, default=3)
    p_hier.add_argument("--target-children", default="17,2",
                        help="children per coarse cell, one value per step "
                        "(comma list, last repeats)")
    p_hier.add_argument("--out", default="hierarchy_out")
    p_hier.set_defaults(func=cmd_hierarchy)

    p_solve = sub.add_parser("solve", help="run one multigrid solve")
    _add_mesh_source(p_solve)
    p_solve.add_argument("--cycle", choices=("tl", "v", "w"), default="w")
    p_solve.add_argument("--nu", type=int, default=2)
    p_solve.add_argument("--levels", type=int, default=3)
    p_solve.add_argument("--mode", choices=("inherited", "noninherited"),
                         default="inherited")
    p_solve.add_argument("--tol", type=float, default=1e-8)
    p_solve.add_argument("--max-iterations", type=int, default=200)
    p_solve.add_argument("--target-children", default="17,2",
                         help="children per coarse cell, one value per step "
                         "(comma list, last repeats)")
    p_solve.add_argument("--mu", type=float, default=1.0)
    p_solve.add_argument("--seed", type=int, default=0)
    p_solve.add_argument("--two-grid", action="store_true",
                         help="also estimate the two-grid spectral radius")
    p_solve.set_defaults(func=cmd_solve)

    p_bench = sub.add_parser("bench", help="run the full benchmark sweep")
    p_bench.add_argument("--config", help="key = value config file")
    p_bench.add_argument("--out")
    p_bench.add_argument("--mesh-sets", help="comma list of structured n values")
    p_bench.add_argument("--nu", help="comma list of smoothing step counts")
    p_bench.add_argument("--levels", help="comma list of ladder depths for v/w")
    p_bench.add_argument("--cycle", help="comma list from tl,v,w")
    p_bench.add_argument("--mode", help="comma list from inherited,noninherited")
    p_bench.add_argument("--target-children",
                         help="comma list, children per coarse cell per step")
    p_bench.add_argument("--tol", type=float)
    p_bench.add_argument("--seed", type=int)
    p_bench.add_argument("--no-timing", action="store_true",
                         help="write wall_ms as zero for reproducible CSV output")
    p_bench.set_defaults(func=cmd_bench)

    p_study = sub.add_parser("study", help="discretization error convergence study")
    p_study.add_argument("--ns", default="4,8,16,32")
    p_study.add_argument("--out", default="study_out")
    p_study.add_argument("--load-rule", choices=("centroid", "subtriangle"),
                         default="centroid")
    p_study.set_defaults(func=cmd_study)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
