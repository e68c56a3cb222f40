"""Intergrid transfer between nested agglomerated levels.

The prolongation from a coarse level to the next finer one is algebraic:
fine nodes that coincide with a coarse node copy its value; fine nodes
strictly inside an agglomerate evaluate the projected polynomial of each
coarse basis function of that agglomerate at the node position.  Restriction
is the transpose, so only the prolongation is ever materialized.

Coarse-level operators come in two flavors: `inherited` builds the Galerkin
triple products P^T A P down the hierarchy, `noninherited` reassembles the
discretization on every coarse mesh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import vem
from .agglomeration import MeshHierarchy
from .mesh import cell_geometry

__all__ = ["TransferSet", "prolongation_matrix", "coarse_operators"]

MODES = ("inherited", "noninherited")


@dataclass
class TransferSet:
    """Prolongations and per-level operators, coarsest first.

    P[i] maps interior dofs of level i to interior dofs of level i+1;
    A[i] is the operator of level i.  len(A) == len(P) + 1.
    """

    P: list
    A: list
    mode: str

    @property
    def num_levels(self) -> int:
        return len(self.A)


def _incident_cells(mesh) -> list:
    inc: list = [[] for _ in range(mesh.num_vertices)]
    for cid, cell in enumerate(mesh.cells):
        for v in cell:
            inc[int(v)].append(cid)
    return inc


def prolongation_matrix(
    hierarchy: MeshHierarchy, level_index: int, include_boundary: bool = False
) -> sp.csr_matrix:
    """Prolongation from hierarchy level `level_index` to `level_index + 1`.

    By default rows and columns of Dirichlet (boundary) vertices are dropped,
    matching the interior-dof systems; with include_boundary=True the full
    vertex-to-vertex operator is returned, which reproduces constants and
    global linears exactly.
    """
    coarse = hierarchy.levels[level_index]
    fine = hierarchy.levels[level_index + 1]
    v_map = hierarchy.coarse_vertex_to_fine[level_index]
    parents = hierarchy.parents[level_index]

    if include_boundary:
        fine_dof = np.arange(fine.num_vertices, dtype=np.int64)
        coarse_dof = np.arange(coarse.num_vertices, dtype=np.int64)
        n_rows, n_cols = fine.num_vertices, coarse.num_vertices
    else:
        fine_dof = np.full(fine.num_vertices, -1, dtype=np.int64)
        fine_interior = np.nonzero(~fine.boundary)[0]
        fine_dof[fine_interior] = np.arange(fine_interior.size)
        coarse_dof = np.full(coarse.num_vertices, -1, dtype=np.int64)
        coarse_interior = np.nonzero(~coarse.boundary)[0]
        coarse_dof[coarse_interior] = np.arange(coarse_interior.size)
        n_rows, n_cols = fine_interior.size, coarse_interior.size

    rows, cols, vals = [], [], []

    # fine nodes identical to a coarse node copy its value
    identified = np.zeros(fine.num_vertices, dtype=bool)
    for cv, fv in enumerate(v_map):
        identified[fv] = True
        if fine_dof[fv] >= 0 and coarse_dof[cv] >= 0:
            rows.append(int(fine_dof[fv]))
            cols.append(int(coarse_dof[cv]))
            vals.append(1.0)

    # remaining fine nodes sit strictly inside one agglomerate and evaluate
    # its projected coarse basis polynomials
    incident = _incident_cells(fine)
    proj_cache: dict = {}
    for fv in range(fine.num_vertices):
        if identified[fv] or fine_dof[fv] < 0:
            continue
        owners = {int(parents[c]) for c in incident[fv]}
        if len(owners) != 1:
            raise ValueError(
                f"fine vertex {fv} touches {len(owners)} agglomerates but is "
                "not identified with a coarse vertex (corrupted hierarchy)"
            )
        pc = owners.pop()
        if pc not in proj_cache:
            geom = cell_geometry(coarse, pc)
            proj = vem.element_projectors(coarse, pc, geom)
            proj_cache[pc] = (proj.PiNabla_star, geom.centroid, geom.diameter)
        coeffs, centroid, h = proj_cache[pc]
        x, y = fine.vertices[fv]
        m = np.array([1.0, (x - centroid[0]) / h, (y - centroid[1]) / h])
        weights = coeffs.T @ m
        for t_local, cv in enumerate(coarse.cells[pc]):
            dof = coarse_dof[int(cv)]
            if dof >= 0:
                rows.append(int(fine_dof[fv]))
                cols.append(int(dof))
                vals.append(float(weights[t_local]))

    P = sp.coo_matrix((vals, (rows, cols)), shape=(n_rows, n_cols)).tocsr()
    P.sum_duplicates()
    P.sort_indices()
    return P


def _interior_operator(mesh, mu: float) -> sp.csr_matrix:
    interior = np.nonzero(~mesh.boundary)[0]
    A = vem.assemble_operator(mesh, mu)[interior, :][:, interior].tocsr()
    A.sort_indices()
    return A


def coarse_operators(
    A_fine: sp.csr_matrix,
    hierarchy: MeshHierarchy,
    mu: float = 1.0,
    mode: str = "inherited",
) -> TransferSet:
    """Build the operator ladder for a hierarchy, finest operator given.

    inherited: A_{coarse} = P^T A_{fine} P level by level.
    noninherited: reassemble the discretization on every coarse mesh with the
    same diffusion coefficient.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if hierarchy.num_levels < 2:
        raise ValueError("hierarchy has fewer than 2 levels, no transfer to build")
    n_fine = int(np.sum(~hierarchy.finest.boundary))
    if A_fine.shape[0] != n_fine:
        raise ValueError(
            f"fine operator has {A_fine.shape[0]} rows, expected {n_fine} interior dofs"
        )
    L = hierarchy.num_levels
    P = [prolongation_matrix(hierarchy, i) for i in range(L - 1)]
    A: list = [None] * L
    A[L - 1] = A_fine.tocsr()
    for i in range(L - 2, -1, -1):
        if mode == "inherited":
            A[i] = (P[i].T @ A[i + 1] @ P[i]).tocsr()
        else:
            A[i] = _interior_operator(hierarchy.levels[i], mu)
        A[i].sum_duplicates()
        A[i].sort_indices()
    return TransferSet(P=P, A=A, mode=mode)
