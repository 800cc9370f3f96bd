"""Mini element spaces: P1 + cubic bubble velocity, P1 pressure.

Global velocity layout is component-major::

    [u1 at vertices | u1 bubbles | u2 at vertices | u2 bubbles]

so one velocity component has ``n_vertices + n_triangles`` coefficients.
In the coupled system the pressure block (one value per vertex) follows,
then a single multiplier enforcing zero mean pressure.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .mesh import TriMesh, boundary_dofs

VectorField = Callable[[np.ndarray, np.ndarray, float], tuple]


class SpaceError(ValueError):
    pass


@dataclass(frozen=True)
class MixedSpace:
    mesh: TriMesh
    n_vel_scalar: int
    n_vel: int
    n_pressure: int
    local_dofs: np.ndarray     # (nt, 4): three vertex dofs then the bubble dof
    areas: np.ndarray          # (nt,)
    grad_bary: np.ndarray      # (nt, 3, 2) gradients of barycentric coordinates

    @property
    def n_total(self) -> int:
        return self.n_vel + self.n_pressure

    @property
    def n_bubbles(self) -> int:
        return self.mesh.n_triangles

    def vertex_dofs(self, component: int) -> np.ndarray:
        return component * self.n_vel_scalar + np.arange(self.mesh.n_vertices)

    def bubble_dofs(self, component: int) -> np.ndarray:
        nv = self.mesh.n_vertices
        return component * self.n_vel_scalar + nv + np.arange(self.mesh.n_triangles)

    def split(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return u[:self.n_vel_scalar], u[self.n_vel_scalar:self.n_vel]


def build_mini_space(mesh: TriMesh) -> MixedSpace:
    nv, nt = mesh.n_vertices, mesh.n_triangles
    p = mesh.vertices[mesh.triangles]
    area = mesh.signed_areas()
    if np.any(area <= 0):
        raise SpaceError("mesh has degenerate or clockwise triangles")
    # grad lambda_i = rot90(opposite edge) / (2 |T|)
    grad = np.empty((nt, 3, 2))
    for i in range(3):
        a = p[:, (i + 1) % 3]
        b = p[:, (i + 2) % 3]
        grad[:, i, 0] = (a[:, 1] - b[:, 1]) / (2 * area)
        grad[:, i, 1] = (b[:, 0] - a[:, 0]) / (2 * area)
    local = np.column_stack([mesh.triangles, nv + np.arange(nt)])
    return MixedSpace(mesh, nv + nt, 2 * (nv + nt), nv, local, area, grad)


def basis_values(bary: np.ndarray) -> np.ndarray:
    """Values of the four local scalar basis functions, shape ``(nq, 4)``.

    The bubble is ``27 l0 l1 l2``: 1 at the barycenter, 0 on every edge.
    """
    bary = np.atleast_2d(bary)
    bub = 27.0 * bary[:, 0] * bary[:, 1] * bary[:, 2]
    return np.column_stack([bary, bub])


def basis_gradients(space: MixedSpace, bary: np.ndarray) -> np.ndarray:
    """Physical gradients of the local basis, shape ``(nt, nq, 4, 2)``."""
    bary = np.atleast_2d(bary)
    g = space.grad_bary
    nt, nq = g.shape[0], bary.shape[0]
    out = np.empty((nt, nq, 4, 2))
    out[:, :, :3, :] = g[:, None, :, :]
    coef = 27.0 * np.column_stack([bary[:, 1] * bary[:, 2],
                                   bary[:, 0] * bary[:, 2],
                                   bary[:, 0] * bary[:, 1]])
    out[:, :, 3, :] = np.einsum("qi,tid->tqd", coef, g)
    return out


def quadrature_points(space: MixedSpace, bary: np.ndarray) -> np.ndarray:
    """Physical coordinates of barycentric points in every triangle, ``(nt, nq, 2)``."""
    p = space.mesh.vertices[space.mesh.triangles]
    return np.einsum("qi,tid->tqd", np.atleast_2d(bary), p)


def _eval_field(f: VectorField, x, y, t):
    v1, v2 = f(x, y, t)
    return (np.broadcast_to(np.asarray(v1, dtype=float), np.shape(x)),
            np.broadcast_to(np.asarray(v2, dtype=float), np.shape(x)))


def interpolate_velocity(space: MixedSpace, f: VectorField, t: float = 0.0) -> np.ndarray:
    """Nodal interpolant: vertex values of ``f``, bubble coefficients zero."""
    u = np.zeros(space.n_vel)
    x, y = space.mesh.vertices.T
    v1, v2 = _eval_field(f, x, y, t)
    u[space.vertex_dofs(0)] = v1
    u[space.vertex_dofs(1)] = v2
    return u


def interpolate_pressure(space: MixedSpace, p: Callable, t: float = 0.0) -> np.ndarray:
    x, y = space.mesh.vertices.T
    return np.broadcast_to(np.asarray(p(x, y, t), dtype=float), x.shape).copy()


def l2_project_velocity(space: MixedSpace, f: VectorField, t: float = 0.0,
                        dirichlet: "DirichletSet | None" = None) -> np.ndarray:
    """L2 projection of ``f`` onto the velocity space.

    With ``dirichlet`` given, the constrained coefficients are fixed to the
    boundary data and the projection is taken over the remaining ones.
    """
    from scipy.sparse.linalg import spsolve

    from .assembly import assemble_load, assemble_mass

    M = assemble_mass(space)
    b = assemble_load(space, f, t)
    if dirichlet is not None:
        M, b = apply_dirichlet(M, b, dirichlet.indices, dirichlet.values(t))
    return spsolve(M.tocsc(), b)


@dataclass(frozen=True)
class DirichletSet:
    """Constrained velocity coefficients and their prescribed data."""

    space: MixedSpace
    indices: np.ndarray
    vertex: np.ndarray       # vertex index behind each constrained coefficient
    component: np.ndarray    # 0 or 1
    data: tuple              # ((vertex ids, callable), ...) in application order

    def values(self, t: float) -> np.ndarray:
        xy = self.space.mesh.vertices
        vals = np.zeros((2, self.space.mesh.n_vertices))
        for verts, g in self.data:
            v1, v2 = _eval_field(g, xy[verts, 0], xy[verts, 1], t)
            vals[0, verts] = v1
            vals[1, verts] = v2
        return vals[self.component, self.vertex]

    def __len__(self):
        return len(self.indices)


def zero_field(x, y, t):
    return 0.0 * x, 0.0 * x


def build_dirichlet(space: MixedSpace, data: Mapping[str, VectorField] | None) -> DirichletSet:
    """Constrain both velocity components on the tagged boundary vertices.

    ``data`` maps boundary tags to ``g(x, y, t) -> (g1, g2)``. Tags are applied
    in insertion order, so a vertex shared by two tags takes the later value.
    """
    data = dict(data or {})
    entries = []
    verts_all = []
    for tag, g in data.items():
        verts = boundary_dofs(space.mesh, tag)
        entries.append((verts, g))
        verts_all.append(verts)
    if verts_all:
        verts = np.unique(np.concatenate(verts_all))
    else:
        verts = np.zeros(0, dtype=np.int64)
    comp = np.concatenate([np.zeros(len(verts), int), np.ones(len(verts), int)])
    vtx = np.concatenate([verts, verts])
    idx = comp * space.n_vel_scalar + vtx
    order = np.argsort(idx)
    return DirichletSet(space, idx[order], vtx[order], comp[order], tuple(entries))


def apply_dirichlet(K, rhs: np.ndarray, indices: np.ndarray, values: np.ndarray):
    """Impose ``x[indices] = values`` on ``K x = rhs``.

    Constrained rows and columns are replaced by the identity and the rhs is
    corrected by the eliminated columns, so a symmetric block stays symmetric.
    """
    K = sp.csr_matrix(K)
    n = K.shape[0]
    if K.shape[0] != K.shape[1]:
        raise SpaceError("system matrix must be square")
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        return K, np.array(rhs, dtype=float)
    if indices.min() < 0 or indices.max() >= n:
        raise SpaceError("Dirichlet index out of range")
    g = np.zeros(n)
    g[indices] = values
    keep = np.ones(n)
    keep[indices] = 0.0
    Dk = sp.diags(keep)
    b = keep * (rhs - K @ g) + g
    K2 = (Dk @ K @ Dk + sp.diags(1.0 - keep)).tocsr()
    return K2, b


def locate_points(mesh: TriMesh, pts: np.ndarray, tol: float = 1e-12):
    """Containing triangle and barycentric coordinates for each point (-1 if outside)."""
    pts = np.atleast_2d(pts)
    owner = np.full(len(pts), -1, dtype=np.int64)
    bary = np.zeros((len(pts), 3))
    P = mesh.vertices[mesh.triangles]
    lo = P.min(axis=1) - tol
    hi = P.max(axis=1) + tol
    for t in range(mesh.n_triangles):
        cand = np.flatnonzero((owner < 0) & np.all(pts >= lo[t], axis=1) & np.all(pts <= hi[t], axis=1))
        if cand.size == 0:
            continue
        a, b, c = P[t]
        T = np.column_stack([b - a, c - a])
        lam12 = np.linalg.solve(T, (pts[cand] - a).T).T
        lam = np.column_stack([1 - lam12.sum(axis=1), lam12])
        inside = np.all(lam >= -tol, axis=1)
        owner[cand[inside]] = t
        bary[cand[inside]] = lam[inside]
    return owner, bary


def evaluate_velocity(space: MixedSpace, u: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Point values ``(npts, 2)`` of a velocity field; NaN outside the mesh."""
    owner, bary = locate_points(space.mesh, pts)
    out = np.full((len(owner), 2), np.nan)
    ok = owner >= 0
    phi = basis_values(bary[ok])
    dofs = space.local_dofs[owner[ok]]
    u1, u2 = space.split(u)
    out[ok, 0] = np.sum(phi * u1[dofs], axis=1)
    out[ok, 1] = np.sum(phi * u2[dofs], axis=1)
    return out
