import numpy as np
import pytest
import scipy.sparse as sp

from oldroyd_isvd.fespace import (SpaceError, apply_dirichlet, build_dirichlet, build_mini_space,
                                  evaluate_velocity, interpolate_pressure, interpolate_velocity,
                                  l2_project_velocity, locate_points, zero_field)
from oldroyd_isvd.manufactured import Example1, Example2
from oldroyd_isvd.mesh import DomainSpec, build_mesh
from oldroyd_isvd.problems import inflow_profile


def test_counts_unit_square_1():
    sp1 = build_mini_space(build_mesh(DomainSpec.unit_square(1)))
    assert sp1.n_vel_scalar == 6
    assert sp1.n_vel == 12
    assert sp1.n_pressure == 4


def test_counts_unit_square_20():
    mesh = build_mesh(DomainSpec.unit_square(20))
    space = build_mini_space(mesh)
    assert space.n_vel_scalar == 441 + 800
    assert space.n_total == 2 * 1241 + 441


def test_counts_contraction(contraction_space):
    s = contraction_space
    assert s.n_pressure == s.mesh.n_vertices
    bubbles = s.local_dofs[:, 3]
    assert len(np.unique(bubbles)) == s.mesh.n_triangles
    np.testing.assert_array_equal(s.bubble_dofs(0), bubbles)


def test_interpolation(square4):
    assert not interpolate_velocity(square4, zero_field).any()
    u = interpolate_velocity(square4, lambda x, y, t: (1.0 + 0 * x, 0 * x))
    np.testing.assert_array_equal(u[square4.vertex_dofs(0)], 1.0)
    assert not u[square4.bubble_dofs(0)].any()
    assert not u[square4.vertex_dofs(1)].any()
    ex = Example1()
    u = interpolate_velocity(square4, ex.velocity_field(), 0.0)
    x, y = square4.mesh.vertices.T
    e1, e2 = ex.velocity(x, y, 0.0)
    np.testing.assert_allclose(u[square4.vertex_dofs(0)], e1, atol=1e-15)
    np.testing.assert_allclose(u[square4.vertex_dofs(1)], e2, atol=1e-15)
    p = interpolate_pressure(square4, ex.pressure, 0.3)
    np.testing.assert_allclose(p, ex.pressure(x, y, 0.3))


def test_l2_projection(square4):
    f = lambda x, y, t: (2 * x - y + 1, 3 * y)
    u = l2_project_velocity(square4, f)
    np.testing.assert_allclose(u, interpolate_velocity(square4, f), atol=1e-12)
    assert np.abs(l2_project_velocity(square4, zero_field)).max() == 0.0
    u = l2_project_velocity(square4, Example2().velocity_field(), 0.0)
    assert np.abs(u).max() == 0.0


def test_dirichlet_zero_walls(square4, rng):
    bc = build_dirichlet(square4, {"wall": zero_field})
    n = square4.n_vel
    K = sp.random(n, n, density=0.2, random_state=3) + 10 * sp.identity(n)
    K2, b = apply_dirichlet(K, rng.standard_normal(n), bc.indices, bc.values(0.0))
    x = sp.linalg.spsolve(K2.tocsc(), b)
    assert np.abs(x[bc.indices]).max() <= 1e-12


def test_dirichlet_preserves_symmetry(square4, rng):
    bc = build_dirichlet(square4, {"wall": lambda x, y, t: (x + 1, y)})
    n = square4.n_vel
    G = rng.standard_normal((n, n))
    K = sp.csr_matrix(G + G.T)
    K2, b = apply_dirichlet(K, np.zeros(n), bc.indices, bc.values(0.0))
    assert abs(K2 - K2.T).max() == 0.0
    np.testing.assert_array_equal(b[bc.indices], bc.values(0.0))


def test_dirichlet_inflow_profile(contraction_space):
    bc = build_dirichlet(contraction_space, {"inflow": inflow_profile})
    xy = contraction_space.mesh.vertices[bc.vertex]
    v1, _ = inflow_profile(xy[:, 0], xy[:, 1])
    vals = bc.values(0.0)
    c0 = bc.component == 0
    np.testing.assert_allclose(vals[c0], (3 / 8) * (1 - ((4 - xy[c0, 1]) / 4) ** 2), rtol=0, atol=1e-15)
    assert not vals[~c0].any()


def test_empty_dirichlet_is_noop(square4, rng):
    bc = build_dirichlet(square4, None)
    assert len(bc) == 0
    K = sp.identity(square4.n_vel, format="csr") * 2.0
    rhs = rng.standard_normal(square4.n_vel)
    K2, b = apply_dirichlet(K, rhs, bc.indices, bc.values(0.0))
    assert (K2 != K).nnz == 0
    np.testing.assert_array_equal(b, rhs)


def test_apply_dirichlet_rejects_bad_input(square4):
    with pytest.raises(SpaceError):
        apply_dirichlet(sp.identity(3), np.zeros(3), np.array([5]), np.array([1.0]))
    with pytest.raises(SpaceError):
        apply_dirichlet(sp.csr_matrix((2, 3)), np.zeros(2), np.array([0]), np.array([1.0]))


def test_point_evaluation(square4, rng):
    u = rng.standard_normal(square4.n_vel)
    verts = square4.mesh.vertices
    vals = evaluate_velocity(square4, u, verts)
    np.testing.assert_allclose(vals[:, 0], u[square4.vertex_dofs(0)], atol=1e-14)
    np.testing.assert_allclose(vals[:, 1], u[square4.vertex_dofs(1)], atol=1e-14)
    # barycenters pick up the bubble with value 1
    bc = verts[square4.mesh.triangles].mean(axis=1)
    vals = evaluate_velocity(square4, u, bc)
    expect = u[square4.local_dofs[:, :3]].mean(axis=1) + u[square4.local_dofs[:, 3]]
    np.testing.assert_allclose(vals[:, 0], expect, atol=1e-13)
    out = evaluate_velocity(square4, u, np.array([[1.5, 0.5]]))
    assert np.isnan(out).all()
    owner, _ = locate_points(square4.mesh, np.array([[-0.1, 0.2], [0.5, 0.5]]))
    assert owner[0] == -1 and owner[1] >= 0
