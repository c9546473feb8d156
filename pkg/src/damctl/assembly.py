"""P1 finite-element assembly of the bilinear and linear forms of the model.

Vector fields use interleaved numbering: dof ``2*i + d`` is component ``d``
of vertex ``i``. Nonlinear coefficients arrive as vertex values and are
interpolated P1 inside each cell; every integral below is evaluated exactly
for that representation.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .mesh import MeshError, TriangleMesh2D

_REF_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def _triple_table():
    # int_T phi_i phi_j phi_k / |T| = 2 a! b! c! / (2 + a + b + c)!
    t = np.empty((3, 3, 3))
    for i in range(3):
        for j in range(3):
            for k in range(3):
                n = len({i, j, k})
                t[i, j, k] = {1: 1.0 / 10.0, 2: 1.0 / 30.0, 3: 1.0 / 60.0}[n]
    return t


_REF_TRIPLE = _triple_table()


def _scatter(mesh, local, nrows, ncols, row_dofs, col_dofs):
    rows = np.repeat(row_dofs[:, :, None], col_dofs.shape[1], axis=2)
    cols = np.repeat(col_dofs[:, None, :], row_dofs.shape[1], axis=1)
    A = sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=(nrows, ncols))
    return A.tocsr()


def _vector_dofs(mesh):
    c = mesh.cells
    return np.stack([2 * c[:, 0], 2 * c[:, 0] + 1, 2 * c[:, 1], 2 * c[:, 1] + 1,
                     2 * c[:, 2], 2 * c[:, 2] + 1], axis=1)


def _nodal(mesh, values, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(mesh.n_vertices, float(arr))
    if arr.shape != (mesh.n_vertices,):
        raise ValueError(f"{name} must be a scalar nodal field of length {mesh.n_vertices}, got {arr.shape}")
    return arr


def _vector_field(mesh, u, name="u"):
    arr = np.asarray(u, dtype=float)
    if arr.shape == (mesh.n_vertices, 2):
        arr = arr.ravel()
    if arr.shape != (2 * mesh.n_vertices,):
        raise ValueError(f"{name} must be a vector nodal field with {2 * mesh.n_vertices} dofs, got {arr.shape}")
    return arr


def assemble_mass(mesh: TriangleMesh2D) -> sp.csr_matrix:
    local = mesh.areas[:, None, None] * _REF_MASS[None]
    return _scatter(mesh, local, mesh.n_vertices, mesh.n_vertices, mesh.cells, mesh.cells)


def lumped_mass(mesh: TriangleMesh2D) -> np.ndarray:
    """Row sums of the consistent mass matrix (one third of each vertex patch area)."""
    d = np.zeros(mesh.n_vertices)
    np.add.at(d, mesh.cells.ravel(), np.repeat(mesh.areas / 3.0, 3))
    return d


def vector_mass(mesh: TriangleMesh2D) -> sp.csr_matrix:
    return sp.kron(assemble_mass(mesh), sp.identity(2), format="csr")


def assemble_stiffness(mesh: TriangleMesh2D) -> sp.csr_matrix:
    bad = np.flatnonzero(~(mesh.areas > 0))
    if bad.size:
        raise MeshError(f"degenerate cell {int(bad[0])}")
    g = mesh.grads
    local = mesh.areas[:, None, None] * np.einsum("cid,cjd->cij", g, g)
    return _scatter(mesh, local, mesh.n_vertices, mesh.n_vertices, mesh.cells, mesh.cells)


def assemble_weighted_mass(mesh: TriangleMesh2D, weight=None, cell_factor=None) -> sp.csr_matrix:
    """Matrix of ``int e_T * w_h * phi_i * phi_j`` with P1 weight ``w`` and per-cell factor ``e``."""
    if weight is None:
        local = _REF_MASS[None] * np.ones((mesh.n_cells, 1, 1))
    else:
        w = _nodal(mesh, weight, "weight")[mesh.cells]
        local = np.einsum("ijk,ck->cij", _REF_TRIPLE, w)
    scale = mesh.areas if cell_factor is None else mesh.areas * np.asarray(cell_factor, dtype=float)
    local = local * scale[:, None, None]
    return _scatter(mesh, local, mesh.n_vertices, mesh.n_vertices, mesh.cells, mesh.cells)


def _elastic_matrix(lame):
    lam, mu = map(float, lame)
    return np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])


def strain_operators(mesh: TriangleMesh2D) -> np.ndarray:
    """Per-cell (3 x 6) maps from local vector dofs to Voigt strain (e11, e22, 2 e12)."""
    g = mesh.grads
    B = np.zeros((mesh.n_cells, 3, 6))
    B[:, 0, 0::2] = g[:, :, 0]
    B[:, 1, 1::2] = g[:, :, 1]
    B[:, 2, 0::2] = g[:, :, 1]
    B[:, 2, 1::2] = g[:, :, 0]
    return B


def cell_strains(mesh: TriangleMesh2D, u) -> np.ndarray:
    u = _vector_field(mesh, u)
    return np.einsum("cvk,ck->cv", strain_operators(mesh), u[_vector_dofs(mesh)])


def cell_stresses(mesh: TriangleMesh2D, u, lame) -> np.ndarray:
    """Voigt components of C eps(u) per cell, for the isotropic Hooke tensor C."""
    return cell_strains(mesh, u) @ _elastic_matrix(lame).T


def strain_energy_density(mesh: TriangleMesh2D, u, lame) -> np.ndarray:
    """Per-cell value of C eps(u) : eps(u)."""
    return np.einsum("cv,cv->c", cell_stresses(mesh, u, lame), cell_strains(mesh, u))


def assemble_elasticity(mesh: TriangleMesh2D, coeff, lame) -> sp.csr_matrix:
    """Matrix of ``int c_h C eps(u) : eps(phi)``; only the cell mean of the P1 coefficient enters."""
    lam, mu = map(float, lame)
    if not (mu > 0 and lam >= 0):
        raise ValueError(f"Lame constants need mu > 0 and lambda >= 0, got {lame!r}")
    c = _nodal(mesh, coeff, "coeff")
    if np.any(~np.isfinite(c)) or np.any(c < 0):
        idx = int(np.flatnonzero(~(c >= 0))[0])
        raise ValueError(f"(A2) violated: stiffness coefficient {c[idx]!r} < 0 at vertex {idx}")
    B = strain_operators(mesh)
    D = _elastic_matrix(lame)
    cbar = c[mesh.cells].mean(axis=1)
    local = np.einsum("cvi,vw,cwj->cij", B, D, B) * (mesh.areas * cbar)[:, None, None]
    dofs = _vector_dofs(mesh)
    n = 2 * mesh.n_vertices
    return _scatter(mesh, local, n, n, dofs, dofs)


def assemble_coupling(mesh: TriangleMesh2D, weight, u, lame) -> sp.csr_matrix:
    """Rectangular (2m x m) matrix of ``int w_h q C eps(u) : eps(phi)``.

    Applied to a scalar field ``q`` it yields a vector load; its transpose
    applied to a vector field ``p`` gives the scalar load
    ``int w_h C eps(u) : eps(p) psi``.
    """
    w = _nodal(mesh, weight, "weight")
    u = _vector_field(mesh, u)
    sigma = cell_stresses(mesh, u, lame)
    s = np.einsum("cvk,cv->ck", strain_operators(mesh), sigma)
    mw = mesh.areas[:, None] * (w[mesh.cells] @ _REF_MASS)
    local = s[:, :, None] * mw[:, None, :]
    return _scatter(mesh, local, 2 * mesh.n_vertices, mesh.n_vertices, _vector_dofs(mesh), mesh.cells)


def assemble_cell_load(mesh: TriangleMesh2D, weight, cell_factor) -> np.ndarray:
    """Vector of ``int e_T w_h psi_i`` for P1 weight ``w`` and per-cell constants ``e``."""
    w = _nodal(mesh, weight, "weight")
    local = (mesh.areas * np.asarray(cell_factor, dtype=float))[:, None] * (w[mesh.cells] @ _REF_MASS)
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.cells.ravel(), local.ravel())
    return out


def boundary_mass(mesh: TriangleMesh2D, edges=None) -> sp.csr_matrix:
    """P1 edge mass matrix on the boundary vertices (indexed as ``boundary_vertex_ids``)."""
    sel = slice(None) if edges is None else np.asarray(edges, dtype=np.int64)
    e = mesh.boundary_index[mesh.boundary_edges[sel]]
    L = mesh.edge_lengths[sel]
    ref = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    local = L[:, None, None] * ref[None]
    rows = np.repeat(e[:, :, None], 2, axis=2)
    cols = np.repeat(e[:, None, :], 2, axis=1)
    nb = mesh.n_boundary
    return sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=(nb, nb)).tocsr()


def boundary_embedding(mesh: TriangleMesh2D) -> sp.csr_matrix:
    """Sparse (2m x 2nb) injection of boundary vector fields into global vector dofs."""
    nb = mesh.n_boundary
    rows = np.concatenate([2 * mesh.boundary_vertex_ids, 2 * mesh.boundary_vertex_ids + 1])
    cols = np.concatenate([2 * np.arange(nb), 2 * np.arange(nb) + 1])
    return sp.csr_matrix((np.ones(2 * nb), (rows, cols)), shape=(2 * mesh.n_vertices, 2 * nb))


def assemble_boundary_load(mesh: TriangleMesh2D, g, edges=None) -> np.ndarray:
    """Vector of ``int_Gamma g . phi`` for a P1 traction ``g`` given on boundary vertices.

    ``g`` has shape ``(n_boundary, 2)`` or ``(n_vertices, 2)``; in the latter
    case interior entries must vanish. ``edges`` restricts the integral to a
    subset of boundary edges (indices into ``mesh.boundary_edges``).
    """
    g = np.asarray(g, dtype=float)
    if g.shape == (mesh.n_vertices, 2) and mesh.n_vertices != mesh.n_boundary:
        interior = np.ones(mesh.n_vertices, dtype=bool)
        interior[mesh.boundary_vertex_ids] = False
        if np.any(g[interior] != 0.0):
            raise ValueError("traction given on non-boundary vertices")
        g = g[mesh.boundary_vertex_ids]
    if g.shape != (mesh.n_boundary, 2):
        raise ValueError(f"traction must have shape ({mesh.n_boundary}, 2), got {g.shape}")
    Mb = boundary_mass(mesh, edges)
    out = np.zeros((mesh.n_vertices, 2))
    out[mesh.boundary_vertex_ids] = Mb @ g
    return out.ravel()
