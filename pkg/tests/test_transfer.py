"""Intergrid prolongation and coarse operator ladders."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import f_source
from vemmg.agglomeration import build_hierarchy
from vemmg.mesh import generate_structured_triangle_mesh
from vemmg.transfer import TransferSet, coarse_operators, prolongation_matrix
from vemmg.vem import assemble_system


@pytest.fixture(scope="module")
def setup16():
    mesh = generate_structured_triangle_mesh(16)
    hierarchy = build_hierarchy(mesh, levels=3)
    system = assemble_system(mesh, mu=1.0, f=f_source)
    return mesh, hierarchy, system


def test_prolongation_shapes(setup16):
    _, hierarchy, _ = setup16
    for i in range(hierarchy.num_levels - 1):
        P = prolongation_matrix(hierarchy, i)
        n_coarse = int(np.sum(~hierarchy.levels[i].boundary))
        n_fine = int(np.sum(~hierarchy.levels[i + 1].boundary))
        assert P.shape == (n_fine, n_coarse)
        # every fine interior node receives something
        assert np.all(np.diff(P.indptr) > 0)


def test_prolongation_reproduces_constants(setup16):
    """With boundary rows included, coarse constants map to fine constants."""
    _, hierarchy, _ = setup16
    for i in range(hierarchy.num_levels - 1):
        P = prolongation_matrix(hierarchy, i, include_boundary=True)
        ones = np.ones(P.shape[1])
        assert np.abs(P @ ones - 1.0).max() <= 1e-13


@settings(max_examples=10, deadline=None)
@given(
    st.floats(min_value=-2.0, max_value=2.0),
    st.floats(min_value=-2.0, max_value=2.0),
    st.floats(min_value=-2.0, max_value=2.0),
)
def test_prolongation_reproduces_linears(a, b, c):
    mesh = generate_structured_triangle_mesh(12)
    hierarchy = build_hierarchy(mesh, levels=3)
    g = lambda p: a + b * p[:, 0] + c * p[:, 1]
    for i in range(hierarchy.num_levels - 1):
        P = prolongation_matrix(hierarchy, i, include_boundary=True)
        coarse_vals = g(hierarchy.levels[i].vertices)
        fine_vals = g(hierarchy.levels[i + 1].vertices)
        assert np.abs(P @ coarse_vals - fine_vals).max() <= 1e-12


def test_identified_vertices_copy_values(setup16):
    _, hierarchy, _ = setup16
    P = prolongation_matrix(hierarchy, hierarchy.num_levels - 2,
                            include_boundary=True)
    v_map = hierarchy.coarse_vertex_to_fine[hierarchy.num_levels - 2]
    P = P.tocsr()
    for cv, fv in enumerate(v_map):
        row = P.getrow(int(fv))
        assert row.nnz == 1
        assert row.indices[0] == cv
        assert row.data[0] == 1.0


def test_inherited_ladder_is_galerkin(setup16):
    _, hierarchy, system = setup16
    transfer = coarse_operators(system.A, hierarchy, mode="inherited")
    assert transfer.num_levels == hierarchy.num_levels
    assert len(transfer.P) == transfer.num_levels - 1
    for i in range(transfer.num_levels - 2, -1, -1):
        triple = (transfer.P[i].T @ transfer.A[i + 1] @ transfer.P[i]).tocsr()
        diff = abs(transfer.A[i] - triple)
        scale = float(np.abs(transfer.A[i].data).max())
        assert diff.nnz == 0 or float(diff.max()) <= 1e-12 * scale


def test_noninherited_ladder_matches_direct_assembly(setup16):
    _, hierarchy, system = setup16
    transfer = coarse_operators(system.A, hierarchy, mode="noninherited")
    for i in range(transfer.num_levels - 1):
        level = hierarchy.levels[i]
        direct = assemble_system(level, mu=1.0, f=f_source).A
        diff = abs(transfer.A[i] - direct)
        assert diff.nnz == 0 or float(diff.max()) <= 1e-13


@pytest.mark.parametrize("mode", ["inherited", "noninherited"])
def test_ladder_levels_are_spd(setup16, mode):
    _, hierarchy, system = setup16
    transfer = coarse_operators(system.A, hierarchy, mode=mode)
    for A in transfer.A:
        dense = A.toarray()
        assert np.abs(dense - dense.T).max() <= 1e-13 * np.abs(dense).max()
        assert np.linalg.eigvalsh(dense)[0] > 0.0


def test_coarse_operators_rejects_bad_mode(setup16):
    _, hierarchy, system = setup16
    with pytest.raises(ValueError, match="mode"):
        coarse_operators(system.A, hierarchy, mode="galerkin")


def test_coarse_operators_rejects_wrong_size(setup16):
    _, hierarchy, _ = setup16
    import scipy.sparse as sp

    with pytest.raises(ValueError, match="interior dofs"):
        coarse_operators(sp.eye(7, format="csr"), hierarchy)


def test_transfer_set_dataclass():
    import scipy.sparse as sp

    ts = TransferSet(P=[sp.eye(3, format="csr")],
                     A=[sp.eye(3, format="csr"), sp.eye(3, format="csr")],
                     mode="inherited")
    assert ts.num_levels == 2
