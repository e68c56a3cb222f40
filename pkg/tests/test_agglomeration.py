"""Agglomeration, hierarchies, boundary compatibility and serialization."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from shapely.geometry import Polygon
from shapely.ops import unary_union

from vemmg.agglomeration import (
    MeshHierarchy,
    agglomerate,
    build_hierarchy,
    check_boundary_compatibility,
    load_hierarchy,
    save_hierarchy,
)
from vemmg.mesh import PolygonalMesh, generate_structured_triangle_mesh, validate_mesh


def cluster_members(parents):
    members: dict = {}
    for cell, cid in enumerate(parents):
        members.setdefault(int(cid), []).append(cell)
    return members


# ---------------------------------------------------------------------------
# single coarsening step
# ---------------------------------------------------------------------------


def test_agglomerate_n2_target4():
    """Eight triangles in four squares merge into two rectangles."""
    mesh = generate_structured_triangle_mesh(2)
    result = agglomerate(mesh, 4)
    assert result.mesh.num_cells == 2
    members = cluster_members(result.parents)
    assert members == {0: [0, 1, 2, 3], 1: [4, 5, 6, 7]}
    assert np.allclose(result.mesh.areas, [0.5, 0.5])
    assert abs(float(np.sum(result.mesh.areas)) - 1.0) < 1e-12
    # traced boundaries keep every fine vertex, collinear ones included
    assert [c.tolist() for c in result.mesh.cells] == [
        [0, 1, 2, 5, 4, 3],
        [3, 4, 5, 8, 7, 6],
    ]
    # the center vertex 4 of the fine mesh survives on both coarse boundaries
    assert result.coarse_vertex_to_fine.tolist() == list(range(9))


def test_agglomerate_n16_target4_count():
    mesh = generate_structured_triangle_mesh(16)
    result = agglomerate(mesh, 4)
    assert result.mesh.num_cells == 128  # 512 / 4, no leftover singletons
    sizes = np.bincount(result.parents)
    assert sizes.max() <= 8  # never more than twice the target
    assert abs(float(np.sum(result.mesh.areas)) - 1.0) < 1e-12


def test_agglomerate_target1_is_identity():
    mesh = generate_structured_triangle_mesh(3)
    result = agglomerate(mesh, 1)
    assert result.mesh.num_cells == mesh.num_cells
    assert np.array_equal(result.parents, np.arange(mesh.num_cells))
    assert np.array_equal(result.mesh.vertices, mesh.vertices)


def test_agglomerate_target_covering_everything():
    """A target at least the cell count collapses the mesh to one cell."""
    mesh = generate_structured_triangle_mesh(2)
    result = agglomerate(mesh, 8)
    assert result.mesh.num_cells == 1
    assert int(np.sum(~result.mesh.boundary)) == 0


def test_agglomerate_rejects_bad_target():
    mesh = generate_structured_triangle_mesh(2)
    with pytest.raises(ValueError):
        agglomerate(mesh, 0)


def test_agglomerate_rejects_disconnected():
    left = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    right = left + np.array([5.0, 0.0])
    mesh = PolygonalMesh(
        np.vstack([left, right]),
        [np.array([0, 1, 2]), np.array([3, 4, 5])],
        np.ones(6, dtype=bool),
    )
    with pytest.raises(ValueError, match="disconnected"):
        agglomerate(mesh, 2)


@settings(max_examples=15, deadline=None)
@given(
    st.integers(min_value=3, max_value=8),
    st.integers(min_value=2, max_value=6),
)
def test_agglomerate_invariants(n, target):
    mesh = generate_structured_triangle_mesh(n)
    result = agglomerate(mesh, target)
    coarse = result.mesh
    # parents map onto a contiguous cluster range with bounded sizes
    sizes = np.bincount(result.parents, minlength=coarse.num_cells)
    assert sizes.min() >= 1
    assert sizes.max() <= 2 * target
    # coarse vertices are fine vertices, coordinates untouched
    assert np.array_equal(
        coarse.vertices, mesh.vertices[result.coarse_vertex_to_fine]
    )
    assert abs(float(np.sum(coarse.areas)) - 1.0) < 1e-12
    validate_mesh(coarse, domain_area=1.0)


@settings(max_examples=8, deadline=None)
@given(
    st.integers(min_value=3, max_value=6),
    st.integers(min_value=2, max_value=5),
)
def test_coarse_cells_equal_child_unions(n, target):
    """Each coarse polygon is exactly the union of its children.

    Checked through an independent geometry kernel: same area and same
    boundary length as the shapely union of the child triangles.
    """
    mesh = generate_structured_triangle_mesh(n)
    result = agglomerate(mesh, target)
    members = cluster_members(result.parents)
    for cid, cells in members.items():
        union = unary_union(
            [Polygon(mesh.vertices[mesh.cells[c]]) for c in cells]
        )
        poly = Polygon(result.mesh.vertices[result.mesh.cells[cid]])
        assert poly.area == pytest.approx(union.area, rel=1e-12)
        assert poly.length == pytest.approx(union.boundary.length, rel=1e-12)


def test_agglomerate_deterministic():
    mesh = generate_structured_triangle_mesh(9)
    a = agglomerate(mesh, 5)
    b = agglomerate(mesh, 5)
    assert np.array_equal(a.parents, b.parents)


# ---------------------------------------------------------------------------
# hierarchies
# ---------------------------------------------------------------------------


def test_build_hierarchy_default_schedule():
    mesh = generate_structured_triangle_mesh(16)
    hierarchy = build_hierarchy(mesh, levels=4)
    assert hierarchy.num_levels == 4
    assert hierarchy.levels[-1] is mesh
    cells = [level.num_cells for level in hierarchy.levels]
    assert cells[-1] == 512
    assert cells == sorted(cells)  # coarsest first
    # the first step merges about 17 triangles, later steps pair polygons
    assert 25 <= cells[2] <= 40
    assert [level.level_tag for level in hierarchy.levels] == [1, 2, 3, 4]
    assert check_boundary_compatibility(hierarchy) == []


def test_build_hierarchy_scalar_target():
    mesh = generate_structured_triangle_mesh(8)
    hierarchy = build_hierarchy(mesh, levels=2, target_children=4)
    assert hierarchy.num_levels == 2
    assert hierarchy.levels[0].num_cells == 32


def test_build_hierarchy_schedule_repeats_last_entry():
    mesh = generate_structured_triangle_mesh(16)
    hierarchy = build_hierarchy(mesh, levels=4, target_children=(17, 2))
    sizes = np.bincount(hierarchy.parents[0])
    assert sizes.max() <= 4  # deepest steps still pair, last entry repeated


def test_build_hierarchy_stops_early():
    mesh = generate_structured_triangle_mesh(4)
    hierarchy = build_hierarchy(mesh, levels=6, target_children=4)
    assert hierarchy.num_levels < 6
    assert hierarchy.requested_levels == 6
    # every retained level still has interior unknowns
    assert all(int(np.sum(~lv.boundary)) >= 4 for lv in hierarchy.levels[:-1])


def test_build_hierarchy_rejects_empty_schedule():
    mesh = generate_structured_triangle_mesh(4)
    with pytest.raises(ValueError, match="empty"):
        build_hierarchy(mesh, levels=3, target_children=())


def test_hierarchy_vertex_maps_are_nested():
    mesh = generate_structured_triangle_mesh(12)
    hierarchy = build_hierarchy(mesh, levels=3)
    for i in range(hierarchy.num_levels - 1):
        coarse = hierarchy.levels[i]
        fine = hierarchy.levels[i + 1]
        v_map = hierarchy.coarse_vertex_to_fine[i]
        assert np.array_equal(coarse.vertices, fine.vertices[v_map])
        # boundary status carries over along the identification
        assert np.array_equal(coarse.boundary, fine.boundary[v_map])


def test_boundary_compatibility_detects_violation():
    """A coarse cell that drops a kept fine vertex must be flagged."""
    mesh = generate_structured_triangle_mesh(2)
    mesh.level_tag = 2
    result = agglomerate(mesh, 4)
    coarse = result.mesh
    cells = [c.copy() for c in coarse.cells]
    cells[0] = np.array([0, 2, 5, 4, 3])  # vertex 1 removed from the trace
    broken = PolygonalMesh(coarse.vertices.copy(), cells, coarse.boundary.copy())
    hierarchy = MeshHierarchy(
        levels=[broken, mesh],
        parents=[result.parents],
        coarse_vertex_to_fine=[result.coarse_vertex_to_fine],
        requested_levels=2,
    )
    violations = check_boundary_compatibility(hierarchy)
    assert (2, 0, 1) in violations


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def test_save_load_hierarchy_round_trip(tmp_path):
    mesh = generate_structured_triangle_mesh(8)
    hierarchy = build_hierarchy(mesh, levels=3)
    directory = save_hierarchy(hierarchy, tmp_path / "hier")
    assert (directory / "parents.txt").exists()
    loaded = load_hierarchy(directory)
    assert loaded.num_levels == hierarchy.num_levels
    for a, b in zip(loaded.levels, hierarchy.levels):
        assert np.array_equal(a.vertices, b.vertices)
        assert np.array_equal(a.boundary, b.boundary)
    for a, b in zip(loaded.parents, hierarchy.parents):
        assert np.array_equal(a, b)
    for a, b in zip(loaded.coarse_vertex_to_fine, hierarchy.coarse_vertex_to_fine):
        assert np.array_equal(a, b)


def test_parents_txt_format(tmp_path):
    mesh = generate_structured_triangle_mesh(4)
    hierarchy = build_hierarchy(mesh, levels=2, target_children=8)
    directory = save_hierarchy(hierarchy, tmp_path / "hier")
    lines = (directory / "parents.txt").read_text().splitlines()
    assert len(lines) == mesh.num_cells
    level, child, parent = (int(t) for t in lines[0].split())
    assert level == 2  # finer level tag of the first (and only) pair
    assert child == 0
    assert 0 <= parent < hierarchy.levels[0].num_cells


def test_load_hierarchy_rejects_empty_directory(tmp_path):
    with pytest.raises(ValueError, match="no level"):
        load_hierarchy(tmp_path)
