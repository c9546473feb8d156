"""Triangular meshes on polygonal domains and VTK legacy import/export."""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_write_text


class MeshError(ValueError):
    """Raised for malformed or degenerate meshes."""


@dataclass(frozen=True, eq=False)
class TriangleMesh2D:
    """P1 triangle mesh with boundary bookkeeping.

    ``boundary_edges`` are oriented so the domain lies to the left of each
    edge, which makes ``normals`` the outward unit normals.
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary_edges: np.ndarray = field(default=None)
    normals: np.ndarray = field(default=None)
    boundary_vertex_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        verts = np.ascontiguousarray(self.vertices, dtype=float)
        cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != 2:
            raise MeshError("vertices must have shape (m, 2)")
        if cells.ndim != 2 or cells.shape[1] != 3 or len(cells) == 0:
            raise MeshError("cells must have shape (nc, 3) with nc >= 1")
        if cells.min() < 0 or cells.max() >= len(verts):
            raise MeshError("cell references a vertex index out of range")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "cells", cells)

        areas = _signed_areas(verts, cells)
        bad = np.flatnonzero(~(areas > 0.0))
        if bad.size:
            raise MeshError(f"cell {int(bad[0])} has non-positive signed area {areas[bad[0]]:.3e}")
        object.__setattr__(self, "areas", areas)

        edges, normals = _boundary_edges(cells, verts)
        if self.boundary_edges is not None:
            given = np.asarray(self.boundary_edges, dtype=np.int64)
            if {tuple(e) for e in given} != {tuple(e) for e in edges}:
                raise MeshError("boundary_edges do not match the cell connectivity")
        object.__setattr__(self, "boundary_edges", edges)
        object.__setattr__(self, "normals", normals)
        _check_closed_loops(edges)
        object.__setattr__(self, "boundary_vertex_ids", np.unique(edges))

        # gradients of the barycentric hat functions, constant per cell
        p = verts[cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        g1 = np.stack([d2[:, 1], -d2[:, 0]], axis=1) / det[:, None]
        g2 = np.stack([-d1[:, 1], d1[:, 0]], axis=1) / det[:, None]
        grads = np.stack([-g1 - g2, g1, g2], axis=1)
        object.__setattr__(self, "grads", grads)

        lookup = np.full(len(verts), -1, dtype=np.int64)
        lookup[self.boundary_vertex_ids] = np.arange(len(self.boundary_vertex_ids))
        object.__setattr__(self, "boundary_index", lookup)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_boundary(self) -> int:
        return len(self.boundary_vertex_ids)

    @property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.boundary_edges[:, 1]] - self.vertices[self.boundary_edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    @property
    def perimeter(self) -> float:
        return float(self.edge_lengths.sum())

    def boundary_arc_weights(self) -> np.ndarray:
        """Half the length of the two boundary edges adjacent to each boundary vertex."""
        w = np.zeros(self.n_boundary)
        local = self.boundary_index[self.boundary_edges]
        half = 0.5 * self.edge_lengths
        np.add.at(w, local[:, 0], half)
        np.add.at(w, local[:, 1], half)
        return w

    def boundary_points(self) -> np.ndarray:
        return self.vertices[self.boundary_vertex_ids]

    def side_masks(self, tol: float = 1e-12) -> dict:
        """Boolean masks over boundary vertices for the sides of the bounding box."""
        pts = self.boundary_points()
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        scale = tol * max(1.0, float(np.abs(self.vertices).max()))
        return {
            "left": np.abs(pts[:, 0] - lo[0]) <= scale,
            "right": np.abs(pts[:, 0] - hi[0]) <= scale,
            "bottom": np.abs(pts[:, 1] - lo[1]) <= scale,
            "top": np.abs(pts[:, 1] - hi[1]) <= scale,
        }


def _signed_areas(verts, cells):
    p = verts[cells]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _boundary_edges(cells, verts):
    directed = np.concatenate([cells[:, [0, 1]], cells[:, [1, 2]], cells[:, [2, 0]]])
    key = np.sort(directed, axis=1)
    uniq, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    if np.any(counts > 2):
        raise MeshError("an edge is shared by more than two cells")
    once = counts[inverse.ravel()] == 1
    edges = directed[once]
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges = edges[order]
    d = verts[edges[:, 1]] - verts[edges[:, 0]]
    length = np.hypot(d[:, 0], d[:, 1])
    normals = np.stack([d[:, 1], -d[:, 0]], axis=1) / length[:, None]
    return edges, normals


def _check_closed_loops(edges):
    heads, head_counts = np.unique(edges[:, 0], return_counts=True)
    tails, tail_counts = np.unique(edges[:, 1], return_counts=True)
    if (
        not np.array_equal(heads, tails)
        or np.any(head_counts != 1)
        or np.any(tail_counts != 1)
    ):
        raise MeshError("boundary edges do not form simple closed loops")


def build_structured_mesh(n: int, domain=(0.0, 0.0, 1.0, 1.0)) -> TriangleMesh2D:
    """Split an ``n x n`` grid of rectangles on ``domain = (x0, y0, x1, y1)`` into 2n^2 triangles."""
    if int(n) != n or n < 1:
        raise MeshError(f"cell count per side must be a positive integer, got {n!r}")
    n = int(n)
    x0, y0, x1, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate rectangle {domain!r}")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    cells = np.concatenate(
        [np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])]
    )
    return TriangleMesh2D(verts, cells)


# -- VTK legacy ASCII ---------------------------------------------------------

def write_vtk(path, mesh: TriangleMesh2D, point_data: dict | None = None, title: str = "damctl") -> None:
    """Write an unstructured grid of type-5 triangles with optional point data.

    Scalar fields have shape ``(m,)``; vector fields ``(m, 2)`` are padded
    with a zero third component.
    """
    out = io.StringIO()
    out.write("# vtk DataFile Version 3.0\n")
    out.write(title.replace("\n", " ")[:255] + "\n")
    out.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
    out.write(f"POINTS {mesh.n_vertices} double\n")
    for x, y in mesh.vertices:
        out.write(f"{float(x)!r} {float(y)!r} 0.0\n")
    out.write(f"CELLS {mesh.n_cells} {4 * mesh.n_cells}\n")
    for a, b, c in mesh.cells:
        out.write(f"3 {a} {b} {c}\n")
    out.write(f"CELL_TYPES {mesh.n_cells}\n")
    out.write("5\n" * mesh.n_cells)
    if point_data:
        out.write(f"POINT_DATA {mesh.n_vertices}\n")
        for name, values in point_data.items():
            arr = np.asarray(values, dtype=float)
            if arr.shape == (mesh.n_vertices,):
                out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in arr:
                    out.write(f"{float(v)!r}\n")
            elif arr.shape == (mesh.n_vertices, 2):
                out.write(f"VECTORS {name} double\n")
                for vx, vy in arr:
                    out.write(f"{float(vx)!r} {float(vy)!r} 0.0\n")
            else:
                raise ValueError(f"point field {name!r} has shape {arr.shape}")
    atomic_write_text(path, out.getvalue())


def read_vtk(path):
    """Read a file produced by :func:`write_vtk`; returns ``(mesh, point_data)``."""
    with open(path, "r", encoding="ascii") as fh:
        tokens = fh.read().split("\n")
    lines = [ln.strip() for ln in tokens]
    if not lines[0].startswith("# vtk DataFile"):
        raise MeshError(f"{path}: not a VTK legacy file")
    if lines[2].upper() != "ASCII" or "UNSTRUCTURED_GRID" not in lines[3].upper():
        raise MeshError(f"{path}: only ASCII unstructured grids are supported")
    body = " ".join(lines[4:]).split()
    pos = 0

    def take(k):
        nonlocal pos
        chunk = body[pos:pos + k]
        pos += k
        return chunk

    verts = cells = None
    n_points = 0
    point_data = {}
    while pos < len(body):
        kw = take(1)[0].upper()
        if kw == "POINTS":
            n_points, _dtype = int(take(1)[0]), take(1)
            verts = np.array(take(3 * n_points), dtype=float).reshape(n_points, 3)[:, :2]
        elif kw == "CELLS":
            n_cells, size = int(take(1)[0]), int(take(1)[0])
            raw = np.array(take(size), dtype=np.int64)
            if size != 4 * n_cells or np.any(raw[::4] != 3):
                raise MeshError(f"{path}: only triangle cells are supported")
            cells = raw.reshape(n_cells, 4)[:, 1:]
        elif kw == "CELL_TYPES":
            n_types = int(take(1)[0])
            types = np.array(take(n_types), dtype=int)
            if np.any(types != 5):
                raise MeshError(f"{path}: cell types other than 5 (triangle)")
        elif kw == "POINT_DATA":
            take(1)
        elif kw == "SCALARS":
            name, _dtype, ncomp = take(3)
            if take(2)[0].upper() != "LOOKUP_TABLE":
                raise MeshError(f"{path}: malformed SCALARS block")
            point_data[name] = np.array(take(n_points * int(ncomp)), dtype=float)
        elif kw == "VECTORS":
            name, _dtype = take(2)
            point_data[name] = np.array(take(3 * n_points), dtype=float).reshape(n_points, 3)[:, :2]
        else:
            raise MeshError(f"{path}: unsupported keyword {kw}")
    if verts is None or cells is None:
        raise MeshError(f"{path}: missing POINTS or CELLS")
    return TriangleMesh2D(verts, cells), point_data
