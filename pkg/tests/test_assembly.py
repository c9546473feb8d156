import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from damctl import assembly as asm
from damctl.mesh import TriangleMesh2D, build_structured_mesh

from oracles import DenseFEM

LAME = (1.0, 1.0)


@pytest.fixture(scope="module")
def tri():
    return TriangleMesh2D(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


@pytest.fixture(scope="module")
def sq4():
    return build_structured_mesh(4)


def rigid_modes(mesh):
    x, y = mesh.vertices.T
    z, o = np.zeros_like(x), np.ones_like(x)
    return [np.column_stack(f).ravel() for f in ((o, z), (z, o), (-y, x))]


def test_reference_triangle_mass(tri):
    ref = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24.0
    assert np.abs(asm.assemble_mass(tri).toarray() - ref).max() <= 1e-12
    assert np.allclose(asm.lumped_mass(tri), [1 / 6] * 3, atol=1e-15)


def test_reference_triangle_stiffness(tri):
    ref = 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]])
    assert np.abs(asm.assemble_stiffness(tri).toarray() - ref).max() <= 1e-12


def test_stiffness_kernel_and_linear_field(sq4):
    K = asm.assemble_stiffness(sq4)
    assert np.abs(K @ np.full(sq4.n_vertices, 3.7)).max() <= 1e-12
    x1 = sq4.vertices[:, 0]
    assert abs(x1 @ K @ x1 - 1.0) <= 1e-10


@pytest.mark.parametrize("n", [2, 8, 16])
def test_mass_and_stiffness_symmetric_mass_spd(n):
    mesh = build_structured_mesh(n)
    M = asm.assemble_mass(mesh)
    K = asm.assemble_stiffness(mesh)
    for A in (M, K):
        assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
    # shifted inverse iteration around 0 gives the smallest eigenvalue
    lam_min = spla.eigsh(M.tocsc(), k=1, sigma=0.0, which="LM", return_eigenvectors=False)[0]
    assert lam_min > 0


def test_elasticity_rigid_modes_and_uniform_strain(sq4):
    E = asm.assemble_elasticity(sq4, np.ones(sq4.n_vertices), LAME)
    for r in rigid_modes(sq4):
        assert np.abs(E @ r).max() <= 1e-10
    x1 = sq4.vertices[:, 0]
    u = np.column_stack([x1, 0 * x1]).ravel()
    assert abs(u @ E @ u - 3.0) <= 1e-10
    E2 = asm.assemble_elasticity(sq4, 2.0, LAME)
    assert np.abs((E2 - 2 * E).toarray()).max() <= 1e-12


def test_elasticity_positive_off_rigid_modes(sq4, rng):
    E = asm.assemble_elasticity(sq4, 1.0, LAME)
    Q, _ = np.linalg.qr(np.column_stack(rigid_modes(sq4)))
    for _ in range(20):
        v = rng.normal(size=2 * sq4.n_vertices)
        v -= Q @ (Q.T @ v)
        assert v @ E @ v > 1e-8 * (v @ v)


def test_elasticity_rejects_negative_coefficient(sq4):
    c = np.ones(sq4.n_vertices)
    c[5] = -0.1
    with pytest.raises(ValueError, match=r"\(A2\).*vertex 5"):
        asm.assemble_elasticity(sq4, c, LAME)


def test_coupling_trivia_and_identities(sq4, rng):
    m = sq4.n_vertices
    u = rng.normal(size=2 * m)
    w = rng.uniform(0.5, 2, size=m)
    assert abs(asm.assemble_coupling(sq4, w, np.zeros(2 * m), LAME)).max() == 0
    assert abs(asm.assemble_coupling(sq4, np.zeros(m), u, LAME)).max() == 0
    B = asm.assemble_coupling(sq4, w, u, LAME)
    # q = 1, phi = u recovers the weighted elastic energy
    assert abs(u @ (B @ np.ones(m)) - u @ asm.assemble_elasticity(sq4, w, LAME) @ u) <= 1e-12 * abs(u @ B @ np.ones(m))
    q, p = rng.normal(size=m), rng.normal(size=2 * m)
    assert q @ (B.T @ p) == pytest.approx(p @ (B @ q), rel=1e-13)


def test_boundary_load(sq4):
    nb = sq4.n_boundary
    g = np.tile([1.0, 0.0], (nb, 1))
    f = asm.assemble_boundary_load(sq4, g).reshape(-1, 2)
    assert np.abs(f.sum(axis=0) - [4.0, 0.0]).max() <= 1e-12
    interior = np.setdiff1d(np.arange(sq4.n_vertices), sq4.boundary_vertex_ids)
    assert np.all(f[interior] == 0)
    assert not np.any(asm.assemble_boundary_load(sq4, np.zeros((nb, 2))))
    a, b = sq4.boundary_edges[0]
    h = sq4.edge_lengths[0]
    f1 = asm.assemble_boundary_load(sq4, g, edges=[0]).reshape(-1, 2)
    assert np.allclose(f1[[a, b]], [[h / 2, 0], [h / 2, 0]], atol=1e-15)
    assert np.count_nonzero(f1) == 2


def test_boundary_load_rejects_interior_values(sq4):
    g = np.zeros((sq4.n_vertices, 2))
    interior = np.setdiff1d(np.arange(sq4.n_vertices), sq4.boundary_vertex_ids)
    g[interior[0]] = 1.0
    with pytest.raises(ValueError, match="non-boundary"):
        asm.assemble_boundary_load(sq4, g)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
def test_linearity(a, b, seed):
    mesh = build_structured_mesh(3)
    r = np.random.default_rng(seed)
    m = mesh.n_vertices
    c1, c2 = r.uniform(0, 1, m), r.uniform(0, 1, m)
    u1, u2 = r.normal(size=2 * m), r.normal(size=2 * m)
    w = r.normal(size=m)
    # coefficients stay non-negative for the elasticity part
    A, B = abs(a), abs(b)
    E = asm.assemble_elasticity(mesh, A * c1 + B * c2, LAME)
    E12 = A * asm.assemble_elasticity(mesh, c1, LAME) + B * asm.assemble_elasticity(mesh, c2, LAME)
    assert abs(E - E12).max() <= 1e-12 * (1 + abs(E).max())
    C = asm.assemble_coupling(mesh, w, a * u1 + b * u2, LAME)
    C12 = a * asm.assemble_coupling(mesh, w, u1, LAME) + b * asm.assemble_coupling(mesh, w, u2, LAME)
    assert abs(C - C12).max() <= 1e-12 * (1 + abs(C).max())
    g1, g2 = r.normal(size=(mesh.n_boundary, 2)), r.normal(size=(mesh.n_boundary, 2))
    f = asm.assemble_boundary_load(mesh, a * g1 + b * g2)
    f12 = a * asm.assemble_boundary_load(mesh, g1) + b * asm.assemble_boundary_load(mesh, g2)
    assert np.abs(f - f12).max() <= 1e-12 * (1 + np.abs(f).max())


def test_dirichlet_energy_converges_quadratically():
    # u = sin(pi x) sin(pi y): int |grad u|^2 = pi^2 / 2
    exact = np.pi**2 / 2
    errs = []
    for n in (4, 8, 16, 32):
        mesh = build_structured_mesh(n)
        x, y = mesh.vertices.T
        u = np.sin(np.pi * x) * np.sin(np.pi * y)
        errs.append(abs(u @ asm.assemble_stiffness(mesh) @ u - exact))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8), rates


def test_matches_dense_quadrature(rng):
    V = np.array([[0.0, 0.0], [1.2, 0.1], [0.3, 0.9], [1.4, 1.1]])
    C = np.array([[0, 1, 2], [1, 3, 2]])
    mesh = TriangleMesh2D(V, C)
    ref = DenseFEM(V, C, (0.7, 1.3))
    m = 4
    w = rng.uniform(0.2, 1.0, m)
    u = rng.normal(size=2 * m)
    assert np.allclose(asm.assemble_mass(mesh).toarray(), ref.mass(), atol=1e-13)
    assert np.allclose(asm.assemble_stiffness(mesh).toarray(), ref.stiffness(), atol=1e-13)
    assert np.allclose(asm.assemble_weighted_mass(mesh, w).toarray(), ref.mass(w), atol=1e-13)
    assert np.allclose(asm.assemble_elasticity(mesh, w, (0.7, 1.3)).toarray(), ref.elasticity(w), atol=1e-12)
    assert np.allclose(asm.assemble_coupling(mesh, w, u, (0.7, 1.3)).toarray(), ref.coupling(w, u), atol=1e-12)
    e = asm.strain_energy_density(mesh, u, (0.7, 1.3))
    assert np.allclose(e, ref.energy_density(u), rtol=1e-12)
    assert np.allclose(asm.boundary_mass(mesh).toarray(), ref.boundary_mass(), atol=1e-13)
