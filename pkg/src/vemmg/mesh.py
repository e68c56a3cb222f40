"""Polygonal meshes on planar domains: construction, import, geometry, quality, export.

Meshes are stored as flat vertex/cell arrays with counterclockwise cell
orientation.  Structured triangle meshes of the unit square are generated
directly; unstructured triangulations can be imported from the Triangle
.node/.ele plain-text layout.  A small native text format and an SVG writer
round out the I/O surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "PolygonalMesh",
    "CellGeometry",
    "QualityReport",
    "SvgOptions",
    "generate_structured_triangle_mesh",
    "load_triangle_format",
    "save_mesh",
    "load_mesh",
    "cell_geometry",
    "mesh_quality",
    "export_svg",
    "validate_mesh",
]

NATIVE_HEADER = "vem-mesh 1"


@dataclass(eq=False)
class PolygonalMesh:
    """A conforming polygonal mesh.

    Attributes
    ----------
    vertices : (nv, 2) float array of vertex coordinates.
    cells : list of integer arrays, one per cell, vertex indices in
        counterclockwise order.
    boundary : (nv,) bool array, True for vertices on the domain boundary.
    level_tag : informational level number when the mesh belongs to a
        hierarchy (1 = coarsest).
    """

    vertices: np.ndarray
    cells: list
    boundary: np.ndarray
    level_tag: int = 1

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.cells = [np.asarray(c, dtype=np.int64) for c in self.cells]
        self.boundary = np.asarray(self.boundary, dtype=bool)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @cached_property
    def areas(self) -> np.ndarray:
        return np.array([_shoelace(self.vertices[c]) for c in self.cells])

    @cached_property
    def centroids(self) -> np.ndarray:
        return np.array([_polygon_centroid(self.vertices[c]) for c in self.cells])

    @cached_property
    def diameters(self) -> np.ndarray:
        return np.array([_diameter(self.vertices[c]) for c in self.cells])

    @cached_property
    def edge_cells(self) -> dict:
        """Map from undirected edge (a, b), a < b, to the list of incident cells."""
        edges: dict = {}
        for cid, cell in enumerate(self.cells):
            for a, b in zip(cell, np.roll(cell, -1)):
                key = (int(a), int(b)) if a < b else (int(b), int(a))
                edges.setdefault(key, []).append(cid)
        return edges

    @cached_property
    def neighbors(self) -> list:
        """Edge-adjacent cells of each cell, ascending."""
        nbs = [set() for _ in range(self.num_cells)]
        for cells in self.edge_cells.values():
            if len(cells) == 2:
                a, b = cells
                nbs[a].add(b)
                nbs[b].add(a)
        return [sorted(s) for s in nbs]


@dataclass(frozen=True)
class CellGeometry:
    """Derived geometry of a single cell."""

    area: float
    centroid: np.ndarray
    diameter: float
    edge_lengths: np.ndarray
    edge_normals: np.ndarray  # outward unit normals, one per edge


@dataclass(frozen=True)
class QualityReport:
    edge_ratio_min: float  # min over cells of (shortest edge / diameter)
    edge_ratio_max: float
    diameter_min: float
    diameter_max: float
    uniformity: float  # diameter_min / diameter_max
    star_flags: np.ndarray  # per-cell: star-shaped w.r.t. its centroid
    all_star: bool


@dataclass(frozen=True)
class SvgOptions:
    width: int = 800
    stroke: str = "#333333"
    fill: str = "none"
    stroke_width: float = 1.0
    show_vertices: bool = False
    vertex_radius: float = 2.0
    margin: float = 0.02


# ---------------------------------------------------------------------------
# basic geometry
# ---------------------------------------------------------------------------


def _shoelace(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _polygon_centroid(pts: np.ndarray) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * np.sum(cross)
    cx = np.sum((x + xn) * cross) / (6.0 * area)
    cy = np.sum((y + yn) * cross) / (6.0 * area)
    return np.array([cx, cy])


def _diameter(pts: np.ndarray) -> float:
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
    return math.sqrt(float(np.max(d2)))


def cell_geometry(mesh: PolygonalMesh, cell_id: int) -> CellGeometry:
    """Area, centroid, diameter and edge data of one cell.

    The area comes from the shoelace formula, the centroid is the polygon
    (area) centroid, and the diameter is the largest pairwise vertex
    distance.  Raises ValueError for degenerate cells.
    """
    pts = mesh.vertices[mesh.cells[cell_id]]
    area = _shoelace(pts)
    if area <= 0.0:
        raise ValueError(f"cell {cell_id} has non-positive area {area}")
    tang = np.roll(pts, -1, axis=0) - pts
    lengths = np.hypot(tang[:, 0], tang[:, 1])
    if np.any(lengths == 0.0):
        raise ValueError(f"cell {cell_id} has a zero-length edge")
    normals = np.column_stack([tang[:, 1], -tang[:, 0]]) / lengths[:, None]
    return CellGeometry(
        area=area,
        centroid=_polygon_centroid(pts),
        diameter=_diameter(pts),
        edge_lengths=lengths,
        edge_normals=normals,
    )


def _star_shaped(pts: np.ndarray, point: np.ndarray, tol: float) -> bool:
    """True when `point` lies in the polygon kernel (sees every boundary point).

    The kernel of a polygon is the intersection of the inner half-planes of
    its edges, so a sign check of the edge cross products suffices.
    """
    a = pts
    b = np.roll(pts, -1, axis=0)
    cross = (b[:, 0] - a[:, 0]) * (point[1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (
        point[0] - a[:, 0]
    )
    return bool(np.all(cross >= -tol))


def mesh_quality(mesh: PolygonalMesh) -> QualityReport:
    """Shape-regularity summary over all cells."""
    ratios = np.empty(mesh.num_cells)
    stars = np.empty(mesh.num_cells, dtype=bool)
    for cid in range(mesh.num_cells):
        geom = cell_geometry(mesh, cid)
        ratios[cid] = float(np.min(geom.edge_lengths)) / geom.diameter
        pts = mesh.vertices[mesh.cells[cid]]
        stars[cid] = _star_shaped(pts, geom.centroid, 1e-12 * geom.diameter**2)
    diams = mesh.diameters
    return QualityReport(
        edge_ratio_min=float(np.min(ratios)),
        edge_ratio_max=float(np.max(ratios)),
        diameter_min=float(np.min(diams)),
        diameter_max=float(np.max(diams)),
        uniformity=float(np.min(diams) / np.max(diams)),
        star_flags=stars,
        all_star=bool(np.all(stars)),
    )


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def validate_mesh(mesh: PolygonalMesh, domain_area: float | None = None) -> None:
    """Check mesh invariants, raising ValueError on the first violation.

    Verifies index ranges, cell simplicity (no repeated vertices, positive
    area), edge manifoldness (interior edges shared by exactly two cells,
    boundary edges by one), consistency of boundary vertex flags with edge
    topology, and, when `domain_area` is given, that cell areas sum to it
    within 1e-12.
    """
    nv = mesh.num_vertices
    if nv == 0 or mesh.num_cells == 0:
        raise ValueError("mesh has no vertices or no cells")
    for cid, cell in enumerate(mesh.cells):
        if len(cell) < 3:
            raise ValueError(f"cell {cid} has fewer than 3 vertices")
        if np.any(cell < 0) or np.any(cell >= nv):
            raise ValueError(f"cell {cid} references a vertex out of range")
        if len(set(cell.tolist())) != len(cell):
            raise ValueError(f"cell {cid} repeats a vertex")
        if _shoelace(mesh.vertices[cell]) <= 0.0:
            raise ValueError(f"cell {cid} is not counterclockwise or is degenerate")
    for (a, b), cells in mesh.edge_cells.items():
        if len(cells) > 2:
            raise ValueError(f"edge ({a}, {b}) is shared by more than two cells")
    # vertices of single-cell edges must carry the boundary flag
    on_boundary = np.zeros(nv, dtype=bool)
    for (a, b), cells in mesh.edge_cells.items():
        if len(cells) == 1:
            on_boundary[a] = True
            on_boundary[b] = True
    if not np.array_equal(on_boundary, mesh.boundary):
        bad = int(np.nonzero(on_boundary != mesh.boundary)[0][0])
        raise ValueError(f"boundary flag of vertex {bad} disagrees with edge topology")
    if domain_area is not None:
        total = float(np.sum(mesh.areas))
        if abs(total - domain_area) > 1e-12:
            raise ValueError(
                f"cell areas sum to {total!r}, expected {domain_area!r}"
            )


# ---------------------------------------------------------------------------
# generators and readers
# ---------------------------------------------------------------------------


def generate_structured_triangle_mesh(n: int) -> PolygonalMesh:
    """Uniform triangulation of the unit square with 2*n*n cells.

    The square grid has (n+1)**2 vertices at (i/n, j/n); every grid square is
    split along its bottom-right/top-left diagonal into a lower and an upper
    triangle, both counterclockwise.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    idx = lambda i, j: j * (n + 1) + i
    coords = np.array(
        [(i / n, j / n) for j in range(n + 1) for i in range(n + 1)], dtype=np.float64
    )
    boundary = np.array(
        [i == 0 or i == n or j == 0 or j == n for j in range(n + 1) for i in range(n + 1)]
    )
    cells = []
    for j in range(n):
        for i in range(n):
            bl, br = idx(i, j), idx(i + 1, j)
            tl, tr = idx(i, j + 1), idx(i + 1, j + 1)
            cells.append([bl, br, tl])
            cells.append([br, tr, tl])
    mesh = PolygonalMesh(coords, cells, boundary)
    validate_mesh(mesh, domain_area=1.0)
    return mesh


def _data_lines(path: Path) -> list:
    """Non-comment, non-blank lines of a Triangle-format file."""
    lines = []
    for raw in path.read_text().splitlines():
        stripped = raw.split("#", 1)[0].strip()
        if stripped:
            lines.append(stripped)
    return lines


def load_triangle_format(node_path, ele_path) -> PolygonalMesh:
    """Read a Triangle .node/.ele pair into a mesh.

    Supports the 2D plain-text layout: a counts header followed by indexed
    rows.  1- or 0-based numbering is autodetected from the first data row.
    Attribute and marker columns are ignored; boundary vertex flags are
    derived from edge topology.  Clockwise triangles are reoriented.
    """
    node_path, ele_path = Path(node_path), Path(ele_path)

    lines = _data_lines(node_path)
    if not lines:
        raise ValueError(f"{node_path}: empty .node file")
    header = lines[0].split()
    try:
        n_nodes, dim = int(header[0]), int(header[1])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{node_path}: malformed header {lines[0]!r}") from exc
    if dim != 2:
        raise ValueError(f"{node_path}: expected 2D nodes, got dimension {dim}")
    if len(lines) - 1 < n_nodes:
        raise ValueError(f"{node_path}: header promises {n_nodes} nodes")
    rows = [line.split() for line in lines[1 : 1 + n_nodes]]
    base = int(rows[0][0])
    if base not in (0, 1):
        raise ValueError(f"{node_path}: first node index must be 0 or 1, got {base}")
    coords = np.empty((n_nodes, 2))
    for row in rows:
        i = int(row[0]) - base
        if not 0 <= i < n_nodes:
            raise ValueError(f"{node_path}: node index {row[0]} out of range")
        coords[i] = (float(row[1]), float(row[2]))

    lines = _data_lines(ele_path)
    if not lines:
        raise ValueError(f"{ele_path}: empty .ele file")
    header = lines[0].split()
    try:
        n_tris, nodes_per = int(header[0]), int(header[1])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{ele_path}: malformed header {lines[0]!r}") from exc
    if nodes_per != 3:
        raise ValueError(f"{ele_path}: expected 3 nodes per triangle, got {nodes_per}")
    if len(lines) - 1 < n_tris:
        raise ValueError(f"{ele_path}: header promises {n_tris} triangles")
    cells = []
    for line in lines[1 : 1 + n_tris]:
        row = line.split()
        tri = np.array([int(row[1]) - base, int(row[2]) - base, int(row[3]) - base])
        if np.any(tri < 0) or np.any(tri >= n_nodes):
            raise ValueError(f"{ele_path}: triangle {row[0]} references a missing node")
        area = _shoelace(coords[tri])
        if area == 0.0:
            raise ValueError(f"{ele_path}: triangle {row[0]} is degenerate")
        if area < 0.0:
            tri = tri[::-1]
        cells.append(tri)

    boundary = np.zeros(n_nodes, dtype=bool)
    mesh = PolygonalMesh(coords, cells, boundary)
    for (a, b), inc in mesh.edge_cells.items():
        if len(inc) == 1:
            boundary[a] = True
            boundary[b] = True
    mesh = PolygonalMesh(coords, cells, boundary)
    validate_mesh(mesh)
    return mesh


# ---------------------------------------------------------------------------
# native text format
# ---------------------------------------------------------------------------


def save_mesh(mesh: PolygonalMesh, path) -> Path:
    """Write the native mesh text format.

    Layout: a `vem-mesh 1` header line, the vertex count, one `x y flag` line
    per vertex, the cell count, then one `k i1 ... ik` line per cell with
    0-based vertex indices.  Floats use shortest round-trip formatting, so a
    save/load/save cycle is byte-identical.
    """
    path = Path(path)
    out = [NATIVE_HEADER, str(mesh.num_vertices)]
    for (x, y), flag in zip(mesh.vertices, mesh.boundary):
        out.append(f"{float(x)!r} {float(y)!r} {int(flag)}")
    out.append(str(mesh.num_cells))
    for cell in mesh.cells:
        out.append(" ".join([str(len(cell))] + [str(int(v)) for v in cell]))
    path.write_text("\n".join(out) + "\n")
    return path


def load_mesh(path) -> PolygonalMesh:
    """Read the native mesh text format written by save_mesh."""
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != NATIVE_HEADER:
        raise ValueError(f"{path}: missing '{NATIVE_HEADER}' header")
    nv = int(lines[1])
    coords = np.empty((nv, 2))
    boundary = np.zeros(nv, dtype=bool)
    for i in range(nv):
        x, y, flag = lines[2 + i].split()
        coords[i] = (float(x), float(y))
        boundary[i] = bool(int(flag))
    nc = int(lines[2 + nv])
    cells = []
    for i in range(nc):
        row = [int(t) for t in lines[3 + nv + i].split()]
        if row[0] != len(row) - 1:
            raise ValueError(f"{path}: cell {i} length field disagrees with row")
        cells.append(row[1:])
    mesh = PolygonalMesh(coords, cells, boundary)
    validate_mesh(mesh)
    return mesh


# ---------------------------------------------------------------------------
# SVG export
# ---------------------------------------------------------------------------


def export_svg(mesh: PolygonalMesh, path, options: SvgOptions | None = None) -> Path:
    """Render the mesh to a standalone SVG 1.1 document, one polygon per cell."""
    opts = options or SvgOptions()
    path = Path(path)
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    span = hi - lo
    span[span == 0.0] = 1.0
    pad = opts.margin * float(np.max(span))
    scale = opts.width / (span[0] + 2 * pad)
    height = int(round(scale * (span[1] + 2 * pad)))

    def to_px(pt):
        x = (pt[0] - lo[0] + pad) * scale
        y = (hi[1] - pt[1] + pad) * scale  # flip: SVG y axis points down
        return f"{x:.2f},{y:.2f}"

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{opts.width}" height="{height}" '
        f'viewBox="0 0 {opts.width} {height}">',
    ]
    for cell in mesh.cells:
        pts = " ".join(to_px(p) for p in mesh.vertices[cell])
        parts.append(
            f'<polygon points="{pts}" fill="{opts.fill}" stroke="{opts.stroke}" '
            f'stroke-width="{opts.stroke_width}"/>'
        )
    if opts.show_vertices:
        for pt in mesh.vertices:
            x, y = to_px(pt).split(",")
            parts.append(
                f'<circle cx="{x}" cy="{y}" r="{opts.vertex_radius}" '
                f'fill="{opts.stroke}"/>'
            )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")
    return path
