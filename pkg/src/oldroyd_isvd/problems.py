"""Ready-made problems: the two manufactured unit-square flows and the 4:1 contraction."""
from __future__ import annotations

import math

import numpy as np

from .assembly import OperatorCoeffs
from .fespace import MixedSpace, build_dirichlet, build_mini_space, zero_field
from .kernels import exponential_kernel
from .manufactured import Example1, Example2
from .mesh import DomainSpec, TriMesh, boundary_dofs, build_mesh
from .stepper import Problem, SchemeConfig, TimeGrid, divergence_free_projection

DT_RULES = ("half_h", "quarter_h", "four_h")
CHANNEL_FLUX = 2.0


def mesh_size(n: int) -> float:
    """Grid label ``n`` means ``h = sqrt(2) / n`` (diagonal of an ``n x n`` square mesh)."""
    return math.sqrt(2.0) / n


def time_step(rule: str | float, n: int) -> float:
    """``half_h``: dt = h/2; ``quarter_h``: dt = h/4; ``four_h``: dt = 4h (h = dt/4); or a number."""
    h = mesh_size(n)
    if isinstance(rule, (int, float)):
        return float(rule)
    try:
        return {"half_h": 0.5 * h, "quarter_h": 0.25 * h, "four_h": 4.0 * h}[rule]
    except KeyError:
        try:
            return float(rule)
        except ValueError:
            raise ValueError(f"unknown dt rule {rule!r}") from None


def unit_square_problem(exact, n: int, dt: float, T: float = 1.0) -> Problem:
    space = build_mini_space(build_mesh(DomainSpec.unit_square(n)))
    bc = build_dirichlet(space, {"wall": zero_field})
    grid = TimeGrid.from_dt(T, dt)
    u0 = divergence_free_projection(space, exact.velocity_field(), bc, 0.0)
    return Problem(space, grid, bc, u0, exact.forcing_field(), name=exact.name, exact=exact)


def example1(n: int, dt_rule="half_h", T: float = 1.0, mode: str = "full",
             tol: float = 1e-12, **kw) -> tuple[SchemeConfig, Problem]:
    ex = Example1()
    prob = unit_square_problem(ex, n, time_step(dt_rule, n), T)
    cfg = SchemeConfig(ex.kernel, OperatorCoeffs.laplacian(ex.nu), OperatorCoeffs.laplacian(1.0),
                       mode=mode, tol=tol, **kw)
    return cfg, prob


def example2(n: int, dt_rule="four_h", T: float = 1.0, mode: str = "full",
             tol: float = 1e-12, alpha: float = 0.5, lam: float = 0.5, **kw):
    ex = Example2(alpha, lam)
    prob = unit_square_problem(ex, n, time_step(dt_rule, n), T)
    cfg = SchemeConfig(ex.kernel, OperatorCoeffs.laplacian(ex.nu), OperatorCoeffs.laplacian(1.0),
                       mode=mode, tol=tol, **kw)
    return cfg, prob


# --- contraction -------------------------------------------------------------
def inflow_profile(x, y, t=0.0):
    s = (4.0 - y) / 4.0
    return 0.375 * (1.0 - s * s), 0.0 * x


def outflow_profile(x, y, t=0.0):
    s = y - 4.0
    return 1.5 * (1.0 - s * s), 0.0 * x


def boundary_flux(space: MixedSpace, u: np.ndarray, tag: str) -> float:
    """Outward flux of the discrete velocity through the edges carrying ``tag``.

    Velocities are linear along boundary edges (bubbles vanish there), so the
    trapezoid rule per edge is exact.
    """
    mesh = space.mesh
    edges = mesh.boundary_edges[mesh.boundary_tags == tag]
    if len(edges) == 0:
        return 0.0
    u1, u2 = space.split(u)
    p0, p1 = mesh.vertices[edges[:, 0]], mesh.vertices[edges[:, 1]]
    tangent = p1 - p0
    normal = np.column_stack([tangent[:, 1], -tangent[:, 0]])     # length-scaled
    mid = 0.5 * (p0 + p1)
    # orient each normal away from the owning triangle's third vertex
    owner_third = _third_vertices(mesh, edges)
    flip = np.einsum("ij,ij->i", normal, mid - owner_third) < 0
    normal[flip] *= -1
    un = 0.5 * ((u1[edges[:, 0]] + u1[edges[:, 1]]) * normal[:, 0]
                + (u2[edges[:, 0]] + u2[edges[:, 1]]) * normal[:, 1])
    return float(un.sum())


def _third_vertices(mesh: TriMesh, edges: np.ndarray) -> np.ndarray:
    lookup = {}
    for t, tri in enumerate(mesh.triangles):
        for i in range(3):
            a, b = tri[i], tri[(i + 1) % 3]
            lookup[(min(a, b), max(a, b))] = tri[(i + 2) % 3]
    third = np.array([lookup[(min(a, b), max(a, b))] for a, b in edges])
    return mesh.vertices[third]


def contraction(dt: float = 0.02, T: float = 1.0, refine_levels: int = 2, mu: float = 100.0,
                rho: float = 1.0, delta: float = 100.0, mode: str = "both", tol: float = 1e-12,
                ramp_steps: int = 5, cell_size: float = 0.25, **kw):
    """4:1 contraction with parabolic inflow/outflow profiles and no-slip walls.

    Both profiles carry flux 2 exactly, but their piecewise linear
    interpolants do not; each is rescaled so its discrete flux is exactly 2.
    Without this the net boundary flux is nonzero and the discrete
    incompressibility constraint is inconsistent. The factors are recorded
    in the problem notes.
    """
    mesh = build_mesh(DomainSpec.contraction(corner_refine_levels=refine_levels, cell_size=cell_size))
    space = build_mini_space(mesh)
    raw = build_dirichlet(space, {"wall": zero_field, "inflow": inflow_profile,
                                  "outflow": outflow_profile})
    g = np.zeros(space.n_vel)
    g[raw.indices] = raw.values(0.0)
    q_in = -boundary_flux(space, _only(space, g, "inflow"), "inflow")
    q_out = boundary_flux(space, _only(space, g, "outflow"), "outflow")
    s_in, s_out = CHANNEL_FLUX / q_in, CHANNEL_FLUX / q_out

    def inflow(x, y, t=0.0):
        v1, v2 = inflow_profile(x, y, t)
        return s_in * v1, v2

    def outflow(x, y, t=0.0):
        v1, v2 = outflow_profile(x, y, t)
        return s_out * v1, v2

    bc = build_dirichlet(space, {"wall": zero_field, "inflow": inflow, "outflow": outflow})
    grid = TimeGrid.from_dt(T, dt)
    u0 = np.zeros(space.n_vel)
    notes = [f"boundary profiles scaled by {s_in:.12f} (inflow) and {s_out:.12f} (outflow) "
             f"so each carries flux {CHANNEL_FLUX:g} on the mesh",
             f"boundary data ramped linearly over the first {ramp_steps} steps"]
    prob = Problem(space, grid, bc, u0, None, bc_ramp_steps=ramp_steps, name="contraction",
                   notes=notes)
    cfg = SchemeConfig(exponential_kernel(rho, delta), OperatorCoeffs.laplacian(mu),
                       OperatorCoeffs.laplacian(1.0), mode=mode, tol=tol, **kw)
    return cfg, prob


def _only(space: MixedSpace, g: np.ndarray, tag: str) -> np.ndarray:
    """``g`` restricted to the vertices of one boundary tag."""
    out = np.zeros_like(g)
    verts = boundary_dofs(space.mesh, tag)
    for c in range(2):
        dofs = c * space.n_vel_scalar + verts
        out[dofs] = g[dofs]
    return out
