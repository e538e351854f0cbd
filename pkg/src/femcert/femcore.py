"""Conforming and Crouzeix-Raviart P1 discretisations of -Laplace(u) = f.

The Crouzeix-Raviart (CR) basis function of local edge ``i`` is
``1 - 2*lambda_i``: it equals one at the midpoint of the edge opposite
vertex ``i`` and zero at the other two midpoints. Dirichlet DOFs are
eliminated from the system rather than penalised.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import ScalarField
from .quadrature import GAUSS7, TriangleRule, edge_gauss
from .trimesh import Mesh

log = logging.getLogger(__name__)

DIRECT_SOLVER_LIMIT = 200_000
RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    """Linear solve failed or did not reach the residual tolerance."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class DofMap:
    space: str  # "cr" | "conforming" | "p0"
    n_dofs: int
    dirichlet: np.ndarray

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.dirichlet)


def cr_dofmap(mesh: Mesh) -> DofMap:
    return DofMap("cr", mesh.n_edges, mesh.boundary_edges.copy())


def conforming_dofmap(mesh: Mesh) -> DofMap:
    return DofMap("conforming", mesh.n_vertices, mesh.boundary_vertices)


@dataclass(frozen=True, eq=False)
class PwConstant:
    mesh: Mesh
    values: np.ndarray

    def evaluate(self, bary: np.ndarray) -> np.ndarray:
        return np.repeat(self.values[:, None], len(bary), axis=1)


@dataclass(frozen=True, eq=False)
class CrSolution:
    mesh: Mesh
    values: np.ndarray

    def local_values(self) -> np.ndarray:
        """DOF values of each triangle's local edges, shape (nt, 3)."""
        return self.values[self.mesh.triangle_edges]

    def gradients(self) -> np.ndarray:
        """Element-wise constant gradient, shape (nt, 2)."""
        return -2.0 * np.einsum("ti,tid->td", self.local_values(), self.mesh.barycentric_gradients)

    def evaluate(self, bary: np.ndarray) -> np.ndarray:
        shape = 1.0 - 2.0 * np.asarray(bary, dtype=float)  # (nq, 3)
        return self.local_values() @ shape.T

    def vertex_values(self) -> np.ndarray:
        """Per-triangle values at the three vertices, shape (nt, 3)."""
        return self.evaluate(np.eye(3))

    def to_csv(self) -> str:
        mid = self.mesh.edge_midpoints
        rows = ["edge_index,midpoint_x1,midpoint_x2,value"]
        rows += [f"{e},{mid[e, 0]:.17g},{mid[e, 1]:.17g},{v:.17g}" for e, v in enumerate(self.values)]
        return "\n".join(rows) + "\n"


@dataclass(frozen=True, eq=False)
class ConformingSolution:
    mesh: Mesh
    values: np.ndarray

    def gradients(self) -> np.ndarray:
        local = self.values[self.mesh.triangles]
        return np.einsum("ti,tid->td", local, self.mesh.barycentric_gradients)

    def evaluate(self, bary: np.ndarray) -> np.ndarray:
        return self.values[self.mesh.triangles] @ np.asarray(bary, dtype=float).T

    def to_csv(self) -> str:
        v = self.mesh.vertices
        rows = ["vertex_index,x1,x2,value"]
        rows += [f"{i},{v[i, 0]:.17g},{v[i, 1]:.17g},{u:.17g}" for i, u in enumerate(self.values)]
        return "\n".join(rows) + "\n"


Load = Union[ScalarField, PwConstant, Callable]


# ---------------------------------------------------------------- assembly


def _assemble(rows: np.ndarray, local: np.ndarray, n: int) -> sp.csr_matrix:
    """Sum (nt, 3, 3) element matrices into an n x n CSR matrix; symmetric by construction."""
    sym = 0.5 * (local + np.transpose(local, (0, 2, 1)))
    I = np.repeat(rows, 3, axis=1).ravel()
    J = np.tile(rows, (1, 3)).ravel()
    return sp.csr_matrix((sym.ravel(), (I, J)), shape=(n, n))


def p1_element_stiffness(mesh: Mesh) -> np.ndarray:
    g = mesh.barycentric_gradients
    return mesh.areas[:, None, None] * np.einsum("tid,tjd->tij", g, g)


def p1_element_mass(mesh: Mesh) -> np.ndarray:
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return mesh.areas[:, None, None] * base[None]


def assemble_conforming(mesh: Mesh) -> tuple[sp.csr_matrix, DofMap]:
    return _assemble(mesh.triangles, p1_element_stiffness(mesh), mesh.n_vertices), conforming_dofmap(mesh)


def assemble_p1_mass(mesh: Mesh) -> sp.csr_matrix:
    return _assemble(mesh.triangles, p1_element_mass(mesh), mesh.n_vertices)


def assemble_cr(mesh: Mesh) -> tuple[sp.csr_matrix, DofMap]:
    """Unmasked CR stiffness matrix and its DOF map (one DOF per edge)."""
    local = 4.0 * p1_element_stiffness(mesh)
    return _assemble(mesh.triangle_edges, local, mesh.n_edges), cr_dofmap(mesh)


def _load_at_points(mesh: Mesh, f: Load, rule: TriangleRule) -> np.ndarray:
    if isinstance(f, PwConstant):
        return f.evaluate(rule.bary)
    x = mesh.map_points(rule.bary)
    return np.asarray(f(x[..., 0], x[..., 1]), dtype=float)


def load_vector_cr(mesh: Mesh, f: Load, rule: TriangleRule = GAUSS7) -> np.ndarray:
    """(f, psi_e) for every CR basis function. Piecewise-constant loads are integrated exactly."""
    if isinstance(f, PwConstant):
        local = np.repeat((f.values * mesh.areas / 3.0)[:, None], 3, axis=1)
    else:
        fq = _load_at_points(mesh, f, rule)
        shape = 1.0 - 2.0 * rule.bary  # (nq,3)
        local = mesh.areas[:, None] * ((fq * rule.weights) @ shape)
    return np.bincount(mesh.triangle_edges.ravel(), local.ravel(), minlength=mesh.n_edges)


def load_vector_conforming(mesh: Mesh, f: Load, rule: TriangleRule = GAUSS7) -> np.ndarray:
    if isinstance(f, PwConstant):
        local = np.repeat((f.values * mesh.areas / 3.0)[:, None], 3, axis=1)
    else:
        fq = _load_at_points(mesh, f, rule)
        local = mesh.areas[:, None] * ((fq * rule.weights) @ rule.bary)
    return np.bincount(mesh.triangles.ravel(), local.ravel(), minlength=mesh.n_vertices)


# ----------------------------------------------------------------- solvers


def solve_spd(A: sp.spmatrix, b: np.ndarray, direct_limit: int = DIRECT_SOLVER_LIMIT) -> np.ndarray:
    """Solve an SPD system: sparse LU below ``direct_limit`` unknowns, Jacobi-PCG above."""
    n = A.shape[0]
    if n == 0:
        return np.zeros(0)
    A = sp.csc_matrix(A)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    if n < direct_limit:
        try:
            x = spla.splu(A).solve(b)
        except RuntimeError as exc:
            raise SolverError(f"factorisation failed: {exc}") from exc
    else:
        d = A.diagonal()
        if np.any(d <= 0):
            raise SolverError("non-positive diagonal in SPD system")
        M = spla.LinearOperator((n, n), matvec=lambda r: r / d)
        x, info = spla.cg(A, b, rtol=1e-12, atol=0.0, M=M, maxiter=10 * n)
        if info != 0:
            res = np.linalg.norm(A @ x - b) / bnorm
            raise SolverError(f"conjugate gradients stopped with info={info}", res)
    res = np.linalg.norm(A @ x - b) / bnorm
    if not np.isfinite(res) or res > RESIDUAL_TOL:
        raise SolverError("solution does not meet the residual tolerance (singular system?)", res)
    return x


def _solve_reduced(A, b, dofmap: DofMap, boundary_values: np.ndarray, direct_limit: int) -> np.ndarray:
    free = dofmap.free
    u = np.where(dofmap.dirichlet, boundary_values, 0.0)
    rhs = b[free] - A[free][:, dofmap.dirichlet] @ u[dofmap.dirichlet]
    u[free] = solve_spd(A[free][:, free], rhs, direct_limit)
    return u


def edge_means(mesh: Mesh, v: Callable, edges: Optional[np.ndarray] = None, order: int = 5) -> np.ndarray:
    """Mean value of ``v`` along each edge by Gauss-Legendre quadrature."""
    edges = np.arange(mesh.n_edges) if edges is None else np.asarray(edges)
    t, w = edge_gauss(order)
    a = mesh.vertices[mesh.edges[edges, 0]]
    b = mesh.vertices[mesh.edges[edges, 1]]
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    return np.asarray(v(pts[..., 0], pts[..., 1]), dtype=float) @ w


def solve_poisson_cr(
    mesh: Mesh,
    f: Load,
    boundary: Optional[Callable] = None,
    direct_limit: int = DIRECT_SOLVER_LIMIT,
) -> CrSolution:
    """CR solution of (grad_h u_h, grad_h v_h) = (f, v_h).

    ``boundary`` optionally prescribes Dirichlet data g; boundary DOFs are
    set to the edge means of g (zero when omitted).
    """
    A, dofmap = assemble_cr(mesh)
    b = load_vector_cr(mesh, f)
    g = np.zeros(mesh.n_edges)
    if boundary is not None:
        bd = np.flatnonzero(dofmap.dirichlet)
        g[bd] = edge_means(mesh, boundary, bd)
    return CrSolution(mesh, _solve_reduced(A, b, dofmap, g, direct_limit))


def solve_poisson_conforming(
    mesh: Mesh,
    f: Load,
    boundary: Optional[Callable] = None,
    direct_limit: int = DIRECT_SOLVER_LIMIT,
) -> ConformingSolution:
    A, dofmap = assemble_conforming(mesh)
    b = load_vector_conforming(mesh, f)
    g = np.zeros(mesh.n_vertices)
    if boundary is not None:
        bd = dofmap.dirichlet
        g[bd] = boundary(mesh.vertices[bd, 0], mesh.vertices[bd, 1])
    return ConformingSolution(mesh, _solve_reduced(A, b, dofmap, g, direct_limit))


# ------------------------------------------------- projections, interpolants


def integrate(mesh: Mesh, values: np.ndarray, rule: TriangleRule) -> np.ndarray:
    """Per-triangle integrals of values sampled at the rule's points, shape (nt,)."""
    return mesh.areas * (values @ rule.weights)


def project_mean(mesh: Mesh, f: Load, rule: TriangleRule = GAUSS7) -> PwConstant:
    """Q_h f: the element means of f."""
    if isinstance(f, PwConstant):
        return f
    return PwConstant(mesh, _load_at_points(mesh, f, rule) @ rule.weights)


def interpolate_cr(mesh: Mesh, v: Callable, order: int = 5) -> CrSolution:
    """CR interpolant preserving the edge integrals of v (DOF = edge mean)."""
    return CrSolution(mesh, edge_means(mesh, v, order=order))


def average_to_vertices(u: CrSolution) -> ConformingSolution:
    """Conforming P1 field from nodal averaging of a CR field; zero on the boundary."""
    mesh = u.mesh
    vals = u.vertex_values()
    total = np.bincount(mesh.triangles.ravel(), vals.ravel(), minlength=mesh.n_vertices)
    count = np.bincount(mesh.triangles.ravel(), minlength=mesh.n_vertices)
    avg = total / np.maximum(count, 1)
    avg[mesh.boundary_vertices] = 0.0
    return ConformingSolution(mesh, avg)


# ------------------------------------------------------------- error norms


def energy_error(mesh: Mesh, numeric, exact: ScalarField, rule: TriangleRule = GAUSS7) -> float:
    """||grad u - grad_h u_h|| over the mesh."""
    x = mesh.map_points(rule.bary)
    diff = exact.grad(x[..., 0], x[..., 1]) - numeric.gradients()[:, None, :]
    return float(np.sqrt(integrate(mesh, np.sum(diff**2, axis=-1), rule).sum()))


def l2_error(mesh: Mesh, numeric, exact: ScalarField, rule: TriangleRule = GAUSS7) -> float:
    x = mesh.map_points(rule.bary)
    diff = exact(x[..., 0], x[..., 1]) - numeric.evaluate(rule.bary)
    return float(np.sqrt(integrate(mesh, diff**2, rule).sum()))


def l2_norm(mesh: Mesh, f: Callable, rule: TriangleRule = GAUSS7) -> float:
    x = mesh.map_points(rule.bary)
    return float(np.sqrt(integrate(mesh, np.asarray(f(x[..., 0], x[..., 1])) ** 2, rule).sum()))


def h1_seminorm(mesh: Mesh, f: ScalarField, rule: TriangleRule = GAUSS7) -> float:
    x = mesh.map_points(rule.bary)
    return float(np.sqrt(integrate(mesh, np.sum(f.grad(x[..., 0], x[..., 1]) ** 2, axis=-1), rule).sum()))


def oscillation(mesh: Mesh, f: Load, fbar: PwConstant, rule: TriangleRule = GAUSS7) -> float:
    """||f - Q_h f||."""
    diff = _load_at_points(mesh, f, rule) - fbar.values[:, None]
    return float(np.sqrt(integrate(mesh, diff**2, rule).sum()))
