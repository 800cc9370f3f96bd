"""Triangulations of the unit square and the planar 4:1 contraction channel.

Meshes are plain arrays wrapped in :class:`TriMesh`:

- ``vertices``: ``(nv, 2)`` float coordinates
- ``triangles``: ``(nt, 3)`` vertex indices, counterclockwise
- ``boundary_edges``: ``(nb, 2)`` vertex pairs with a parallel ``boundary_tags``
  array of strings (``"wall"``, ``"inflow"``, ``"outflow"``)

The contraction channel occupies ``[0, L_up] x [0, 8]`` upstream and
``[L_up, L_up + L_down] x [3, 5]`` downstream, so the inflow profile is
centered on ``y = 4`` and the reentrant corners sit at ``(L_up, 3)`` and
``(L_up, 5)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TAGS = ("wall", "inflow", "outflow")

CHANNEL_WIDTH = 8.0


class MeshError(ValueError):
    """Invalid domain description or mesh request."""


@dataclass(frozen=True)
class DomainSpec:
    """Description of a domain to be meshed.

    ``kind`` is ``"unit_square"`` or ``"contraction"``. For the unit square,
    ``n_per_side`` is the number of cells per side. For the contraction,
    ``cell_size`` is the spacing of the structured base grid (it must divide
    3 and 5 evenly) and ``corner_refine_levels`` counts rounds of local
    longest-edge bisection around both reentrant corners.
    """

    kind: str = "unit_square"
    n_per_side: int = 2
    upstream_len: float = 8.0
    downstream_len: float = 8.0
    width_ratio: float = 4.0
    cell_size: float = 0.5
    corner_refine_levels: int = 0

    @classmethod
    def unit_square(cls, n: int) -> "DomainSpec":
        return cls(kind="unit_square", n_per_side=n)

    @classmethod
    def contraction(cls, upstream_len=8.0, downstream_len=8.0, width_ratio=4.0,
                    corner_refine_levels=2, cell_size=0.5) -> "DomainSpec":
        return cls(kind="contraction", upstream_len=upstream_len,
                   downstream_len=downstream_len, width_ratio=width_ratio,
                   cell_size=cell_size, corner_refine_levels=corner_refine_levels)

    def validate(self) -> None:
        if self.kind == "unit_square":
            if int(self.n_per_side) != self.n_per_side or self.n_per_side < 1:
                raise MeshError(f"n_per_side must be a positive integer, got {self.n_per_side}")
        elif self.kind == "contraction":
            if self.corner_refine_levels < 0:
                raise MeshError("corner_refine_levels must be >= 0")
            if self.upstream_len <= 0 or self.downstream_len <= 0:
                raise MeshError("channel lengths must be positive")
            if self.width_ratio != 4.0:
                raise MeshError("only the 4:1 contraction is supported")
            h = self.cell_size
            for v in (3.0, 5.0, self.upstream_len, self.downstream_len):
                if h <= 0 or abs(v / h - round(v / h)) > 1e-12:
                    raise MeshError(f"cell_size {h} must divide 3, 5 and the channel lengths")
        else:
            raise MeshError(f"unknown domain kind {self.kind!r}")

    @property
    def area(self) -> float:
        if self.kind == "unit_square":
            return 1.0
        narrow = CHANNEL_WIDTH / self.width_ratio
        return self.upstream_len * CHANNEL_WIDTH + self.downstream_len * narrow

    def polygon(self) -> np.ndarray:
        """Counterclockwise boundary polygon of the domain."""
        if self.kind == "unit_square":
            return np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        L1, L2 = self.upstream_len, self.upstream_len + self.downstream_len
        lo, hi = 3.0, 5.0
        return np.array([[0, 0], [L1, 0], [L1, lo], [L2, lo], [L2, hi],
                         [L1, hi], [L1, CHANNEL_WIDTH], [0, CHANNEL_WIDTH]], dtype=float)

    def reentrant_corners(self) -> np.ndarray:
        if self.kind != "contraction":
            return np.zeros((0, 2))
        return np.array([[self.upstream_len, 3.0], [self.upstream_len, 5.0]])


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    spec: DomainSpec | None = field(default=None, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    def edges(self) -> np.ndarray:
        """Unique undirected edges, each as a sorted vertex pair."""
        return np.unique(_all_edges(self.triangles), axis=0)

    def h_max(self) -> float:
        return float(self.diameters().max())

    def validate(self) -> None:
        """Raise :class:`MeshError` if any structural invariant fails."""
        if np.any(self.signed_areas() <= 0):
            raise MeshError("triangle with non-positive signed area")
        e = _all_edges(self.triangles)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two triangles")
        bnd = uniq[counts == 1]
        given = np.sort(self.boundary_edges, axis=1)
        if len(bnd) != len(given) or not np.array_equal(
                np.unique(given, axis=0), bnd):
            raise MeshError("boundary edge list does not match the single-triangle edges")
        if self.spec is not None:
            total = self.signed_areas().sum()
            if abs(total - self.spec.area) > 1e-12 * self.spec.area:
                raise MeshError(f"area {total} does not tile domain area {self.spec.area}")


def _all_edges(triangles: np.ndarray) -> np.ndarray:
    t = triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    return np.sort(e, axis=1)


def build_mesh(spec: DomainSpec) -> TriMesh:
    """Triangulate the domain described by ``spec``."""
    spec.validate()
    if spec.kind == "unit_square":
        verts, tris = _unit_square(int(spec.n_per_side))
    else:
        verts, tris = _contraction_base(spec)
        corners = spec.reentrant_corners()
        d0 = _diameters(verts, tris).max()
        for level in range(1, spec.corner_refine_levels + 1):
            verts, tris = _refine_corner_level(verts, tris, corners, d0, level, spec.cell_size)
    edges, tags = _tag_boundary(verts, tris, spec)
    mesh = TriMesh(verts, tris, edges, tags, spec)
    mesh.validate()
    return mesh


def _unit_square(n: int):
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    tris = np.empty((2 * n * n, 3), dtype=np.int64)
    tris[0::2] = lower
    tris[1::2] = upper
    return verts, tris


def _contraction_base(spec: DomainSpec):
    h = spec.cell_size
    L1 = spec.upstream_len
    L = L1 + spec.downstream_len
    nx = int(round(L / h))
    ny = int(round(CHANNEL_WIDTH / h))
    x = np.linspace(0.0, L, nx + 1)
    y = np.linspace(0.0, CHANNEL_WIDTH, ny + 1)
    X, Y = np.meshgrid(x, y)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    cx = (i + 0.5) * h
    cy = (j + 0.5) * h
    keep = (cx < L1) | ((cy > 3.0) & (cy < 5.0))
    i, j = i[keep], j[keep]
    v00 = j * (nx + 1) + i
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    # alternate the split diagonal about the centerline so the mesh is symmetric
    flip = (j * h + 0.5 * h) > 4.0
    lower = np.where(flip[:, None], np.column_stack([v00, v10, v01]), np.column_stack([v00, v10, v11]))
    upper = np.where(flip[:, None], np.column_stack([v10, v11, v01]), np.column_stack([v00, v11, v01]))
    tris = np.concatenate([lower, upper])
    used, inv = np.unique(tris, return_inverse=True)
    return verts[used], inv.reshape(tris.shape).astype(np.int64)


def _diameters(verts, tris):
    p = verts[tris]
    e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
    return np.linalg.norm(e, axis=2).max(axis=1)


def _refine_corner_level(verts, tris, corners, d0, level, h):
    """One refinement level: halve diameters of triangles near the corners."""
    target = d0 / 2.0 ** level
    radius = 2.0 * h / 2.0 ** (level - 1)
    while True:
        p = verts[tris]
        dist = np.linalg.norm(p[:, :, None, :] - corners[None, None, :, :], axis=-1)
        near = dist.min(axis=(1, 2)) < radius
        marked = np.flatnonzero(near & (_diameters(verts, tris) > target * (1 + 1e-12)))
        if marked.size == 0:
            return verts, tris
        verts, tris = bisect_longest_edge(verts, tris, marked)


def bisect_longest_edge(verts: np.ndarray, tris: np.ndarray, marked) -> tuple[np.ndarray, np.ndarray]:
    """Bisect marked triangles along their longest edge, closing hanging nodes.

    Conformity is restored by repeatedly bisecting any triangle that owns a
    split edge; each such triangle is cut along its own longest edge first.
    """
    pts = [tuple(v) for v in verts]
    tri_list = [tuple(int(i) for i in t) for t in tris]
    midpoint: dict[tuple[int, int], int] = {}

    def split(t):
        a, b, c = t
        lens = [np.hypot(*np.subtract(pts[b], pts[a])),
                np.hypot(*np.subtract(pts[c], pts[b])),
                np.hypot(*np.subtract(pts[a], pts[c]))]
        k = int(np.argmax(lens))
        a, b, c = (t[k], t[(k + 1) % 3], t[(k + 2) % 3])
        key = (min(a, b), max(a, b))
        m = midpoint.get(key)
        if m is None:
            m = len(pts)
            pts.append(((pts[a][0] + pts[b][0]) / 2, (pts[a][1] + pts[b][1]) / 2))
            midpoint[key] = m
        return [(a, m, c), (m, b, c)]

    todo = set(int(i) for i in marked)
    while todo:
        new = []
        for idx, t in enumerate(tri_list):
            if idx in todo:
                new.extend(split(t))
            else:
                new.append(t)
        tri_list = new
        todo = set()
        for idx, (a, b, c) in enumerate(tri_list):
            for u, v in ((a, b), (b, c), (c, a)):
                if (min(u, v), max(u, v)) in midpoint:
                    todo.add(idx)
                    break
    return np.array(pts, dtype=float), np.array(tri_list, dtype=np.int64)


def _tag_boundary(verts, tris, spec: DomainSpec):
    e, counts = np.unique(_all_edges(tris), axis=0, return_counts=True)
    edges = e[counts == 1]
    tags = np.full(len(edges), "wall", dtype=object)
    if spec.kind == "contraction":
        L = spec.upstream_len + spec.downstream_len
        x = verts[edges][:, :, 0]
        tags[np.all(np.abs(x) < 1e-12, axis=1)] = "inflow"
        tags[np.all(np.abs(x - L) < 1e-12, axis=1)] = "outflow"
    return edges, tags.astype(str)


def boundary_dofs(mesh: TriMesh, tag: str) -> np.ndarray:
    """Sorted unique vertex indices lying on boundary edges with ``tag``."""
    if tag not in TAGS:
        raise MeshError(f"unknown boundary tag {tag!r}; expected one of {TAGS}")
    sel = mesh.boundary_edges[mesh.boundary_tags == tag]
    return np.unique(sel.ravel())


def export_mesh(mesh: TriMesh, path) -> None:
    """Write the plain-text mesh format (header ``nv nt nb``)."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles} {len(mesh.boundary_edges)}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
        for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
            fh.write(f"{i} {j} {tag}\n")


def read_mesh(path) -> TriMesh:
    """Read a mesh written by :func:`export_mesh`."""
    with open(path) as fh:
        nv, nt, nb = (int(s) for s in fh.readline().split())
        verts = np.array([[float(s) for s in fh.readline().split()] for _ in range(nv)])
        tris = np.array([[int(s) for s in fh.readline().split()] for _ in range(nt)], dtype=np.int64)
        edges, tags = [], []
        for _ in range(nb):
            i, j, tag = fh.readline().split()
            edges.append((int(i), int(j)))
            tags.append(tag)
    return TriMesh(verts, tris.reshape(-1, 3), np.array(edges, dtype=np.int64).reshape(-1, 2),
                   np.array(tags, dtype=str))
