"""Benchmark configuration, sweep output and the convergence study."""

import numpy as np
import pytest

from vemmg.bench import (
    BenchConfig,
    RESULT_COLUMNS,
    config_from_values,
    parse_config_file,
    run_benchmark,
    run_convergence_study,
)


def tiny_config(**overrides) -> BenchConfig:
    base = dict(
        mesh_sets=(4,),
        levels=(3,),
        cycles=("tl", "v"),
        nus=(2,),
        modes=("inherited",),
        timing=False,
        target_children=(4, 2),
    )
    base.update(overrides)
    return BenchConfig(**base)


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def test_parse_config_file(tmp_path):
    path = tmp_path / "bench.cfg"
    path.write_text(
        "# benchmark setup\n"
        "mesh_sets = 4, 8\n"
        "cycles = tl w   # only the fast ones\n"
        "\n"
        "tol = 1e-9\n"
        "timing = off\n"
    )
    values = parse_config_file(path)
    assert values == {
        "mesh_sets": "4, 8",
        "cycles": "tl w",
        "tol": "1e-9",
        "timing": "off",
    }


def test_parse_config_rejects_bad_line(tmp_path):
    path = tmp_path / "bench.cfg"
    path.write_text("mesh_sets 4 8\n")
    with pytest.raises(ValueError, match="key = value"):
        parse_config_file(path)


def test_config_from_values_conversions():
    config = config_from_values(
        {
            "mesh_sets": "4,8",
            "levels": "3 4",
            "nus": "2, 4",
            "cycles": "tl,w",
            "modes": "inherited",
            "target_children": "17, 2",
            "tol": "1e-9",
            "mu": "2.0",
            "seed": "7",
            "timing": "off",
            "out": "somewhere",
        }
    )
    assert config.mesh_sets == (4, 8)
    assert config.levels == (3, 4)
    assert config.nus == (2, 4)
    assert config.cycles == ("tl", "w")
    assert config.target_children == (17, 2)
    assert config.tol == 1e-9
    assert config.mu == 2.0
    assert config.seed == 7
    assert config.timing is False
    assert config.out == "somewhere"


def test_config_from_values_rejects_unknown_key():
    with pytest.raises(ValueError, match="unknown config key"):
        config_from_values({"smoothing": "3"})


def test_config_from_values_rejects_bad_timing_word():
    with pytest.raises(ValueError, match="timing"):
        config_from_values({"timing": "sometimes"})


def test_config_validation_errors():
    with pytest.raises(ValueError, match="cycle"):
        tiny_config(cycles=("fmg",)).validate()
    with pytest.raises(ValueError, match="mode"):
        tiny_config(modes=("algebraic",)).validate()
    with pytest.raises(ValueError, match="levels"):
        tiny_config(levels=(5,)).validate()
    with pytest.raises(ValueError, match="mesh_sets"):
        tiny_config(mesh_sets=()).validate()
    with pytest.raises(ValueError, match="target_children"):
        tiny_config(target_children=(0,)).validate()
    with pytest.raises(ValueError, match="tol"):
        tiny_config(tol=-1.0).validate()


def test_default_config_is_valid():
    BenchConfig().validate()


# ---------------------------------------------------------------------------
# benchmark sweep
# ---------------------------------------------------------------------------


def test_run_benchmark_rows():
    rows = run_benchmark(tiny_config(), write_outputs=False)
    # tl (1 depth) + v (1 depth), 1 nu, 1 mode, then cg and pcg
    assert len(rows) == 4
    assert [r["cycle"] for r in rows] == ["tl", "v", "cg", "pcg"]
    for row in rows:
        assert list(row.keys()) == RESULT_COLUMNS
        assert row["status"] == "ok"
        assert row["wall_ms"] == "0.000"
        assert int(row["iterations"]) > 0
    mg_rows = rows[:2]
    assert all(r["mesh"] == "structured-n4" for r in rows)
    assert all(r["dofs"] == 9 for r in rows)
    assert all(float(r["rho"]) < 1.0 for r in mg_rows)


def test_run_benchmark_is_deterministic():
    a = run_benchmark(tiny_config(), write_outputs=False)
    b = run_benchmark(tiny_config(), write_outputs=False)
    assert a == b


def test_run_benchmark_writes_outputs(tmp_path):
    config = tiny_config(out=str(tmp_path / "bench"))
    rows = run_benchmark(config)
    out = tmp_path / "bench"
    csv_path = out / "results.csv"
    assert csv_path.exists()
    lines = csv_path.read_text().splitlines()
    assert lines[0] == ",".join(RESULT_COLUMNS)
    assert len(lines) == len(rows) + 1
    mesh_dir = out / "meshes" / "structured-n4"
    assert (mesh_dir / "parents.txt").exists()
    assert (mesh_dir / "level_1.txt").exists()
    assert (mesh_dir / "level_1.svg").exists()


def test_run_benchmark_csv_byte_identical(tmp_path):
    config_a = tiny_config(out=str(tmp_path / "a"))
    config_b = tiny_config(out=str(tmp_path / "b"))
    run_benchmark(config_a)
    run_benchmark(config_b)
    a = (tmp_path / "a" / "results.csv").read_bytes()
    b = (tmp_path / "b" / "results.csv").read_bytes()
    assert a == b


def test_run_benchmark_reports_depth_failure():
    # a 4-level ladder cannot be built from 32 triangles with these targets
    config = tiny_config(levels=(4,), cycles=("w",), target_children=(16, 2))
    rows = run_benchmark(config, write_outputs=False)
    w_rows = [r for r in rows if r["cycle"] == "w"]
    assert w_rows
    assert all("levels" in r["status"] for r in w_rows)


# ---------------------------------------------------------------------------
# convergence study
# ---------------------------------------------------------------------------


def test_convergence_study_orders(tmp_path):
    rows, l2_order, h1_order = run_convergence_study(
        ns=(4, 8, 16), out_dir=tmp_path
    )
    assert (tmp_path / "orders.csv").exists()
    assert len(rows) == 3
    assert rows[0]["l2_rate"] == ""
    assert float(rows[1]["l2_rate"]) > 1.5
    assert 1.7 <= l2_order <= 2.3
    assert 0.8 <= h1_order <= 1.2
    # errors shrink monotonically under refinement
    l2 = [float(r["l2_error"]) for r in rows]
    assert l2[0] > l2[1] > l2[2]


def test_convergence_study_rejects_single_mesh():
    with pytest.raises(ValueError, match="two mesh sizes"):
        run_convergence_study(ns=(4,))


def test_convergence_study_subtriangle_rule():
    _, l2_order, h1_order = run_convergence_study(
        ns=(4, 8), load_rule="subtriangle"
    )
    assert 1.5 <= l2_order <= 2.5
    assert 0.7 <= h1_order <= 1.3
