"""Triangulations: data model, structured generators, shape classification, I/O.

Every triangle can be moved by a congruence onto the reference triangle
``T(alpha, theta, h)`` with vertices ``O(0, 0)``, ``A(h, 0)`` and
``B(alpha*h*cos(theta), alpha*h*sin(theta))``, where ``h`` is the medium
edge, ``alpha*h`` the shortest edge and ``theta`` the angle between them.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

MESH_HEADER = "ncmesh v1"

# relative tolerance for the admissible-range check on (alpha, theta)
_RANGE_TOL = 1e-12


class MeshError(ValueError):
    """Raised for invalid geometry or malformed mesh files."""


@dataclass(frozen=True)
class TriangleShape:
    alpha: float
    theta: float
    h: float

    def __post_init__(self):
        check_shape_range(self.alpha, self.theta)
        if not self.h > 0:
            raise MeshError(f"h must be positive, got {self.h}")

    @property
    def longest_edge(self) -> float:
        a, t = self.alpha, self.theta
        return self.h * math.sqrt(1.0 + a * a - 2.0 * a * math.cos(t))


def check_shape_range(alpha: float, theta: float) -> None:
    """Reject (alpha, theta) outside 0 < alpha <= 1, acos(alpha/2) <= theta < pi."""
    if not (0.0 < alpha <= 1.0 + _RANGE_TOL):
        raise MeshError(f"alpha={alpha!r} outside (0, 1]")
    lo = math.acos(min(alpha, 1.0) / 2.0)
    if not (lo - _RANGE_TOL <= theta < math.pi):
        raise MeshError(f"theta={theta!r} outside [acos(alpha/2)={lo:.17g}, pi)")


def reference_vertices(alpha: float, theta: float, h: float = 1.0) -> np.ndarray:
    """Vertices O, A, B of T(alpha, theta, h), counter-clockwise."""
    return np.array(
        [
            [0.0, 0.0],
            [h, 0.0],
            [alpha * h * math.cos(theta), alpha * h * math.sin(theta)],
        ]
    )


def _signed_area(p: np.ndarray) -> np.ndarray:
    """Signed areas of triangles given as an array (..., 3, 2)."""
    d1 = p[..., 1, :] - p[..., 0, :]
    d2 = p[..., 2, :] - p[..., 0, :]
    return 0.5 * (d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0])


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangulation.

    Only ``vertices`` and ``triangles`` are primary data. Edges are derived:
    they are sorted lexicographically by their (sorted) vertex pair, local
    edge ``i`` of a triangle is the one opposite its local vertex ``i``, and
    ``edge_triangles[e] = (K1, K2)`` with ``K1 < K2`` (``K2 = -1`` on the
    boundary). The unit ``edge_normals`` point out of ``K1``, i.e. from the
    lower-index neighbour to the higher-index one, and outward on the boundary.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray = field(init=False, repr=False)
    edge_triangles: np.ndarray = field(init=False, repr=False)
    triangle_edges: np.ndarray = field(init=False, repr=False)
    areas: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        verts = np.array(self.vertices, dtype=float).reshape(-1, 2)
        tris = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(verts)):
            raise MeshError("non-finite vertex coordinates")
        if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
            raise MeshError("triangle vertex index out of range")
        pts = verts[tris]
        area = _signed_area(pts)
        if np.any(area <= 0.0):
            bad = int(np.flatnonzero(area <= 0.0)[0])
            raise MeshError(f"triangle {bad} is not counter-clockwise (signed area {area[bad]:.3g})")

        nt = len(tris)
        local = np.stack([tris[:, [1, 2]], tris[:, [2, 0]], tris[:, [0, 1]]], axis=1)  # (nt,3,2)
        keys = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(nt, 3)

        edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
        count = np.zeros(len(edges), dtype=np.int64)
        for k in range(nt):
            for e in inverse[k]:
                if count[e] >= 2:
                    raise MeshError(f"edge {tuple(edges[e])} shared by more than two triangles")
                edge_tris[e, count[e]] = k
                count[e] += 1

        for name, value in (
            ("vertices", verts),
            ("triangles", tris),
            ("edges", edges),
            ("edge_triangles", edge_tris),
            ("triangle_edges", inverse),
            ("areas", area),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def boundary_edges(self) -> np.ndarray:
        return self.edge_triangles[:, 1] < 0

    @property
    def boundary_vertices(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.boundary_edges].ravel()] = True
        return mask

    @property
    def edge_midpoints(self) -> np.ndarray:
        return self.vertices[self.edges].mean(axis=1)

    @property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def edge_normals(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        n = np.stack([d[:, 1], -d[:, 0]], axis=1) / self.edge_lengths[:, None]
        outward = np.einsum("ij,ij->i", self.edge_midpoints - self.centroids[self.edge_triangles[:, 0]], n)
        return n * np.sign(outward)[:, None]

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def triangle_points(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape (nt, 3, 2)."""
        return self.vertices[self.triangles]

    @property
    def barycentric_gradients(self) -> np.ndarray:
        """Gradients of the barycentric coordinates, shape (nt, 3, 2)."""
        p = self.triangle_points
        grads = np.empty_like(p)
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            grads[:, i, 0] = p[:, j, 1] - p[:, k, 1]
            grads[:, i, 1] = p[:, k, 0] - p[:, j, 0]
        return grads / (2.0 * self.areas)[:, None, None]

    def map_points(self, bary: np.ndarray) -> np.ndarray:
        """Physical points for barycentric coordinates ``bary`` (nq, 3); returns (nt, nq, 2)."""
        return np.einsum("qi,tid->tqd", np.asarray(bary, dtype=float), self.triangle_points)

    @property
    def triangle_edge_signs(self) -> np.ndarray:
        """(nt, 3): +1 where the global edge normal points out of the triangle, else -1."""
        owner = self.edge_triangles[self.triangle_edges, 0]
        return np.where(owner == np.arange(self.n_triangles)[:, None], 1.0, -1.0)

    def shapes(self) -> list[TriangleShape]:
        return [classify_shape(p) for p in self.triangle_points]

    def same_structure(self, other: "Mesh") -> bool:
        return (
            self.vertices.shape == other.vertices.shape
            and np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
        )


def generate_friedrichs_keller(N: int) -> Mesh:
    """N x N uniform mesh of the unit square, each cell cut along its (0,0)-(1,1) diagonal."""
    if int(N) != N or N < 1:
        raise MeshError(f"N must be a positive integer, got {N!r}")
    N = int(N)
    s = np.arange(N + 1) / N
    X, Y = np.meshgrid(s, s, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    v00 = (j * (N + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + N + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh(vertices, triangles)


def generate_reference_triangle_mesh(alpha: float, theta: float, n: int, h: float = 1.0) -> Mesh:
    """Uniform subdivision of T(alpha, theta, h) into n**2 copies of T(alpha, theta, h/n).

    Vertex ``(i, j)`` (``i + j <= n``) sits at ``O + (i/n) OA + (j/n) OB``;
    the grid index of that vertex is returned by :func:`reference_grid_index`.
    """
    check_shape_range(alpha, theta)
    if int(n) != n or n < 1:
        raise MeshError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    O, A, B = reference_vertices(alpha, theta, h)
    ij = [(i, j) for j in range(n + 1) for i in range(n + 1 - j)]
    vertices = np.array([O + (i / n) * (A - O) + (j / n) * (B - O) for i, j in ij])

    tris = []
    for j in range(n):
        for i in range(n - j):
            tris.append((reference_grid_index(n, i, j), reference_grid_index(n, i + 1, j), reference_grid_index(n, i, j + 1)))
            if i + j + 2 <= n:
                tris.append(
                    (
                        reference_grid_index(n, i + 1, j),
                        reference_grid_index(n, i + 1, j + 1),
                        reference_grid_index(n, i, j + 1),
                    )
                )
    return Mesh(vertices, np.array(tris))


def reference_grid_index(n: int, i: int, j: int) -> int:
    # rows of constant j hold n + 1 - j vertices
    return j * (n + 1) - (j * (j - 1)) // 2 + i


def classify_shape(tri) -> TriangleShape:
    """Shape parameters (alpha, theta, h) of a triangle given by its three vertices.

    Edges are ranked by length; equal lengths are ordered by the sorted local
    vertex pair so the choice is deterministic.

    >>> s = classify_shape([(0, 0), (2, 0), (0, 1)])
    >>> round(s.alpha, 12), round(s.theta, 12), s.h
    (0.5, 1.570796326795, 2.0)
    """
    p = np.asarray(tri, dtype=float).reshape(3, 2)
    pairs = [(0, 1), (0, 2), (1, 2)]
    lengths = [math.dist(p[a], p[b]) for a, b in pairs]
    longest = max(lengths)
    area = abs(float(_signed_area(p)))
    if not longest > 0 or area <= 1e-14 * longest * longest:
        raise MeshError("degenerate triangle")

    order = sorted(range(3), key=lambda e: (lengths[e], pairs[e]))
    short, medium = pairs[order[0]], pairs[order[1]]
    shared = (set(short) & set(medium)).pop()
    u = p[(set(short) - {shared}).pop()] - p[shared]
    w = p[(set(medium) - {shared}).pop()] - p[shared]
    cos_t = float(np.dot(u, w)) / (lengths[order[0]] * lengths[order[1]])
    theta = math.acos(max(-1.0, min(1.0, cos_t)))
    h = lengths[order[1]]
    alpha = lengths[order[0]] / h
    return TriangleShape(alpha=min(alpha, 1.0), theta=theta, h=h)


def write_mesh(mesh: Mesh, stream: TextIO | None = None) -> str:
    """Serialise to the ``ncmesh v1`` text format; returns the text as well."""
    lines = [MESH_HEADER, f"{mesh.n_vertices} {mesh.n_triangles}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    text = "\n".join(lines) + "\n"
    if stream is not None:
        stream.write(text)
    return text


def read_mesh(stream: TextIO | str) -> Mesh:
    """Parse the ``ncmesh v1`` format. Errors name the offending 1-based line."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = [ln.rstrip("\r\n") for ln in stream]

    def fail(lineno: int, msg: str):
        raise MeshError(f"line {lineno}: {msg}")

    if not lines or lines[0].strip() != MESH_HEADER:
        fail(1, f"expected header {MESH_HEADER!r}")
    if len(lines) < 2:
        fail(2, "missing counts line")
    try:
        nv, nt = (int(t) for t in lines[1].split())
    except ValueError:
        fail(2, "counts line must be '<nv> <nt>'")
    if nv < 0 or nt < 0:
        fail(2, "negative counts")
    if len(lines) < 2 + nv + nt:
        fail(len(lines) + 1, f"expected {nv} vertex and {nt} triangle lines")

    vertices = np.empty((nv, 2))
    for r in range(nv):
        lineno = 3 + r
        parts = lines[2 + r].split()
        if len(parts) != 2:
            fail(lineno, "vertex line must hold two floats")
        try:
            vertices[r] = [float(parts[0]), float(parts[1])]
        except ValueError:
            fail(lineno, "unparseable vertex coordinate")
        if not np.all(np.isfinite(vertices[r])):
            fail(lineno, "non-finite vertex coordinate")

    triangles = np.empty((nt, 3), dtype=np.int64)
    for r in range(nt):
        lineno = 3 + nv + r
        parts = lines[2 + nv + r].split()
        if len(parts) != 3:
            fail(lineno, "triangle line must hold three indices")
        try:
            idx = [int(t) for t in parts]
        except ValueError:
            fail(lineno, "unparseable vertex index")
        if min(idx) < 0 or max(idx) >= nv:
            fail(lineno, f"vertex index out of range [0, {nv})")
        if _signed_area(vertices[idx]) <= 0.0:
            fail(lineno, "triangle is not counter-clockwise (orientation error)")
        triangles[r] = idx
    if any(ln.strip() for ln in lines[2 + nv + nt :]):
        fail(3 + nv + nt, "trailing content after triangle lines")
    return Mesh(vertices, triangles)

