import numpy as np
import pytest

from adfem.app.meshgen import generate_rect_mesh
from adfem.assembly import (Assembler, ConstraintError, ElementError, JacobianMethod, Mesh, MeshError,
                            apply_dirichlet, build_dofmap, normalize_constraints, scatter_matrices,
                            sparsity_pattern)
from adfem.elements import OldroydBKernel, PoissonKernel
from adfem.newton import dense_lu
from adfem.problems import poisson_problem

# unit square cut along its rising diagonal: (0,1,2) and (0,2,3)
SQUARE = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
              np.array([[0, 1, 2], [0, 2, 3]]),
              {"all": np.arange(4)})
ONE = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


def test_dofmap_is_node_major():
    dm = build_dofmap(ONE, 2)
    assert dm.ndofs == 6
    np.testing.assert_array_equal(dm.eta[0], [0, 2, 4, 1, 3, 5])
    assert dm.dof(2, 1) == 5


def test_dofmap_rejects_bad_mesh():
    with pytest.raises(MeshError):
        build_dofmap(Mesh(ONE.nodes, np.array([[0, 2, 1]])), 1)
    with pytest.raises(MeshError):
        build_dofmap(Mesh(ONE.nodes, np.array([[0, 1, 5]])), 1)


def test_pattern_single_element():
    A = sparsity_pattern(ONE, build_dofmap(ONE, 2))
    assert A.m_B == 3 and A.nnzb == 9
    assert A.data.shape == (9, 2, 2)


def test_pattern_misses_unshared_corners():
    A = sparsity_pattern(SQUARE, build_dofmap(SQUARE, 1))
    cols = {i: set(A.indices[A.indptr[i]:A.indptr[i + 1]]) for i in range(4)}
    assert cols[1] == {0, 1, 2} and cols[3] == {0, 2, 3}
    assert cols[0] == cols[2] == {0, 1, 2, 3}


def test_interior_node_degree():
    mesh = generate_rect_mesh(2, 2, 1)
    A = sparsity_pattern(mesh, build_dofmap(mesh, 1))
    assert mesh.n_nodes == 9 and mesh.n_elements == 8
    assert np.diff(A.indptr)[4] == 7 and A.m_B == 7


def test_laplacian_of_square():
    asm = Assembler(SQUARE, PoissonKernel(c=0.0, source=0.0))
    A, _ = asm.assemble(np.zeros(4), JacobianMethod.MANUAL)
    expect = 0.5 * np.array([[2, -1, 0, -1], [-1, 2, -1, 0], [0, -1, 2, -1], [-1, 0, -1, 2]])
    np.testing.assert_allclose(A.to_dense(), expect, atol=1e-15)


def test_interior_row_is_five_point_stencil():
    mesh = generate_rect_mesh(4, 4, 1)
    A, _ = Assembler(mesh, PoissonKernel(c=0.0)).assemble(np.zeros(mesh.n_nodes), "manual")
    row = A.to_dense()[12]  # node (2, 2)
    expect = np.zeros(mesh.n_nodes)
    expect[[7, 11, 13, 17]] = -1.0
    expect[12] = 4.0
    np.testing.assert_allclose(row, expect, atol=1e-14)


def test_bsr_matches_explicit_sum_and_is_adjoint():
    rng = np.random.default_rng(0)
    mesh = generate_rect_mesh(3, 2, 2)
    dm = build_dofmap(mesh, 2)
    A = sparsity_pattern(mesh, dm)
    Ae = rng.normal(size=(mesh.n_elements, 12, 12))
    scatter_matrices(A, Ae, slice(None))
    dense = np.zeros((dm.ndofs, dm.ndofs))
    for e, eta in enumerate(dm.eta):
        dense[np.ix_(eta, eta)] += Ae[e]
    np.testing.assert_allclose(A.to_dense(), dense, atol=1e-13)
    x, y = rng.normal(size=(2, dm.ndofs))
    S = A.to_scipy()
    assert abs(y @ (S @ x) - x @ (S.T @ y)) <= 1e-11 * np.abs(dense).sum()
    np.testing.assert_allclose(A @ x, dense @ x, atol=1e-12)


def test_scatter_is_linear():
    rng = np.random.default_rng(1)
    mesh = generate_rect_mesh(3, 3, 1)
    dm = build_dofmap(mesh, 1)
    Ae = rng.normal(size=(mesh.n_elements, 3, 3))
    one = scatter_matrices(sparsity_pattern(mesh, dm), Ae, slice(None))
    two = scatter_matrices(sparsity_pattern(mesh, dm), 2.0 * Ae, slice(None))
    assert np.array_equal(two.data, 2.0 * one.data)
    Be = rng.normal(size=Ae.shape)
    s = scatter_matrices(sparsity_pattern(mesh, dm), Ae + Be, slice(None))
    t = scatter_matrices(scatter_matrices(sparsity_pattern(mesh, dm), Ae, slice(None)), Be, slice(None))
    np.testing.assert_allclose(s.data, t.data, atol=1e-14)


def test_residual_is_local():
    mesh = generate_rect_mesh(4, 4, 1)
    asm = Assembler(mesh, PoissonKernel(c=2.0))
    u = np.random.default_rng(2).normal(size=mesh.n_nodes)
    v = u.copy()
    v[12] += 0.3
    changed = set(np.flatnonzero(asm.residual(v) != asm.residual(u)))
    neighbours = set(np.unique(mesh.elements[(mesh.elements == 12).any(axis=1)]))
    assert changed <= neighbours and 12 in changed


@pytest.mark.parametrize("method", ["ad_identity", "ad_blocked", "fd"])
def test_parallel_equals_serial(method):
    mesh = generate_rect_mesh(6, 3, 2)
    k = OldroydBKernel()
    u = np.random.default_rng(3).normal(0, 0.3, mesh.n_nodes * 6)
    A1, b1 = Assembler(mesh, k, chunk=5, threads=1).assemble(u, method)
    A4, b4 = Assembler(mesh, k, chunk=5, threads=4).assemble(u, method)
    assert np.array_equal(A1.data, A4.data) and np.array_equal(b1, b4)


def test_element_error_names_the_element():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 0.0], [3.0, 0.0], [2.5, 1e-20]])
    mesh = Mesh(nodes, np.array([[0, 1, 2], [3, 4, 5]]))
    asm = Assembler(Mesh(nodes, np.array([[0, 1, 2], [0, 1, 2]])), PoissonKernel())
    asm.coords = mesh.coords()  # skip mesh validation so the kernel sees the sliver
    with pytest.raises(ElementError) as info:
        asm.residual(np.zeros(6))
    assert info.value.element == 1


def test_kernel_mesh_mismatch():
    with pytest.raises(MeshError):
        Assembler(ONE, OldroydBKernel())


# --- Dirichlet ----------------------------------------------------------------------


def test_all_dofs_constrained():
    asm = Assembler(SQUARE, PoissonKernel(c=1.0, source=1.0))
    u = np.arange(4.0)
    A, b = asm.assemble(u, "manual")
    g = np.array([1.0, -1.0, 2.0, 0.5])
    A, b = apply_dirichlet(A, b, (np.arange(4), g), u)
    np.testing.assert_array_equal(A.to_dense(), np.eye(4))
    np.testing.assert_array_equal(u + b, g)


def test_dirichlet_keeps_symmetry_and_inputs():
    asm = Assembler(generate_rect_mesh(3, 3, 1), PoissonKernel(c=0.0))
    u = np.zeros(16)
    A, b = asm.assemble(u, "manual")
    A0 = A.to_dense()
    B, _ = apply_dirichlet(A, b, [(0, 1.0), (5, 2.0)], u)
    D = B.to_dense()
    np.testing.assert_array_equal(D, D.T)
    np.testing.assert_array_equal(A.to_dense(), A0)


def test_linear_boundary_data_is_reproduced():
    mesh = generate_rect_mesh(5, 4, 1)
    g = lambda x, y: 1.0 + 2.0 * x - 3.0 * y
    prob = poisson_problem(mesh, c=0.0, source=0.0, boundary_value=g, method="manual")
    u = prob.initial_guess()
    A, b = prob.assemble(u)
    u = u + dense_lu(A, b)
    np.testing.assert_allclose(u, g(*mesh.nodes.T), atol=1e-13)


def test_constraint_merging():
    d, v = normalize_constraints([(3, 1.0), (1, 2.0), (3, 1.0)])
    np.testing.assert_array_equal(d, [1, 3])
    np.testing.assert_array_equal(v, [2.0, 1.0])
    with pytest.raises(ConstraintError):
        normalize_constraints([(3, 1.0), (3, 1.5)])
    with pytest.raises(ConstraintError):
        normalize_constraints([(9, 0.0)], ndofs=4)
