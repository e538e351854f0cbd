"""Bubble enrichment of the CR solution and the Raviart-Thomas flux post-process.

With u* the CR solution for the element-mean load fbar, the enriched solution
is u* + a_K phi_K with a_K = -fbar_K / 2 and the quadratic bubble

    phi_K(x) = |x - G|^2 / 2 - sum_i |x_i - G|^2 / 12

whose edge means vanish. Its broken gradient

    p_h = grad u* - (fbar_K / 2) (x - G)

lies in the lowest-order Raviart-Thomas space and, together with the
element means of the enriched solution, solves the RT mixed system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .femcore import (
    CrSolution,
    Load,
    PwConstant,
    assemble_cr,
    load_vector_cr,
    project_mean,
    solve_poisson_cr,
    solve_spd,
)
from .quadrature import MIDPOINT3, TriangleRule
from .trimesh import Mesh

CONFORMITY_TOL = 1e-10


class FluxConformityError(ValueError):
    """The post-processed flux has normal jumps: u* and fbar do not belong together."""


def _vertex_spread(points: np.ndarray) -> np.ndarray:
    """sum_i |x_i - G|^2 for triangles given as (..., 3, 2)."""
    g = points.mean(axis=-2, keepdims=True)
    return np.sum((points - g) ** 2, axis=(-2, -1))


def bubble_value(tri, x) -> np.ndarray:
    tri = np.asarray(tri, dtype=float)
    x = np.asarray(x, dtype=float)
    g = tri.mean(axis=0)
    return 0.5 * np.sum((x - g) ** 2, axis=-1) - _vertex_spread(tri) / 12.0


def bubble_gradient(tri, x) -> np.ndarray:
    return np.asarray(x, dtype=float) - np.asarray(tri, dtype=float).mean(axis=0)


@dataclass(frozen=True, eq=False)
class BubbleCoefficients:
    mesh: Mesh
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class RtFlux:
    """Per-triangle field p(x) = a_K + c_K (x - G_K); div p = 2 c_K."""

    mesh: Mesh
    a: np.ndarray
    c: np.ndarray
    fbar: np.ndarray

    def evaluate(self, bary: np.ndarray) -> np.ndarray:
        x = self.mesh.map_points(bary)
        return self.a[:, None, :] + self.c[:, None, None] * (x - self.mesh.centroids[:, None, :])

    def at(self, k: int, x) -> np.ndarray:
        return self.a[k] + self.c[k] * (np.asarray(x, dtype=float) - self.mesh.centroids[k])

    def divergence(self) -> np.ndarray:
        return 2.0 * self.c

    def max_magnitude(self) -> float:
        return float(np.max(np.linalg.norm(self.evaluate(np.eye(3)), axis=-1), initial=0.0))

    def normal_jumps(self) -> np.ndarray:
        """|p.n| jump across every interior edge (the normal component is constant on an edge)."""
        mesh = self.mesh
        interior = np.flatnonzero(~mesh.boundary_edges)
        mid = mesh.edge_midpoints[interior]
        n = mesh.edge_normals[interior]
        k1, k2 = mesh.edge_triangles[interior].T
        p1 = self.a[k1] + self.c[k1, None] * (mid - mesh.centroids[k1])
        p2 = self.a[k2] + self.c[k2, None] * (mid - mesh.centroids[k2])
        return np.abs(np.einsum("ij,ij->i", p1 - p2, n))

    def to_csv(self) -> str:
        rows = ["tri_index,ax,ay,c,fbar"]
        rows += [
            f"{k},{a[0]:.17g},{a[1]:.17g},{c:.17g},{f:.17g}"
            for k, (a, c, f) in enumerate(zip(self.a, self.c, self.fbar))
        ]
        return "\n".join(rows) + "\n"


@dataclass(frozen=True, eq=False)
class UBar:
    mesh: Mesh
    values: np.ndarray


def solve_modified_cr(mesh: Mesh, f: Load) -> CrSolution:
    """CR solution with the load replaced by its element means."""
    return solve_poisson_cr(mesh, project_mean(mesh, f))


def bubble_coefficients(mesh: Mesh, f: Load) -> BubbleCoefficients:
    return BubbleCoefficients(mesh, -0.5 * project_mean(mesh, f).values)


def bubble_coefficients_rayleigh(mesh: Mesh, fbar: PwConstant, rule: TriangleRule = MIDPOINT3) -> BubbleCoefficients:
    """Element-by-element solve of a_K (grad phi, grad phi)_K = (fbar, phi)_K by quadrature."""
    pts = mesh.triangle_points
    x = mesh.map_points(rule.bary)
    g = mesh.centroids[:, None, :]
    phi = 0.5 * np.sum((x - g) ** 2, axis=-1) - _vertex_spread(pts)[:, None] / 12.0
    load = mesh.areas * fbar.values * (phi @ rule.weights)
    energy = mesh.areas * (np.sum((x - g) ** 2, axis=-1) @ rule.weights)
    return BubbleCoefficients(mesh, load / energy)


def build_rt_flux(mesh: Mesh, u_star: CrSolution, fbar: PwConstant, check: bool = True) -> RtFlux:
    flux = RtFlux(mesh, u_star.gradients(), -0.5 * fbar.values, np.asarray(fbar.values, dtype=float))
    if check:
        jumps = flux.normal_jumps()
        scale = max(flux.max_magnitude(), 1.0e-300)
        worst = float(jumps.max(initial=0.0))
        if worst > CONFORMITY_TOL * scale:
            raise FluxConformityError(
                f"normal jump {worst:.3e} exceeds {CONFORMITY_TOL:g} x max|p| = {CONFORMITY_TOL * scale:.3e}"
            )
    return flux


def build_ubar(mesh: Mesh, u_star: CrSolution, fbar: PwConstant) -> UBar:
    """Element means of u* + a_K phi_K: u*(G) + fbar_K sum_i |x_i - G|^2 / 48."""
    centre = u_star.evaluate(np.full((1, 3), 1.0 / 3.0))[:, 0]
    return UBar(mesh, centre + fbar.values * _vertex_spread(mesh.triangle_points) / 48.0)


def enriched_mean(mesh: Mesh, u_star: CrSolution, coeffs: BubbleCoefficients, rule: TriangleRule) -> np.ndarray:
    """Element means of u* + a_K phi_K by quadrature (oracle for build_ubar)."""
    x = mesh.map_points(rule.bary)
    g = mesh.centroids[:, None, :]
    phi = 0.5 * np.sum((x - g) ** 2, axis=-1) - _vertex_spread(mesh.triangle_points)[:, None] / 12.0
    return (u_star.evaluate(rule.bary) + coeffs.values[:, None] * phi) @ rule.weights


# --------------------------------------------------------- mixed-system checks


def rt_basis_local(mesh: Mesh):
    """Per-triangle RT basis data for the edge opposite each local vertex.

    The basis field of edge e restricted to K is s (|e| / 2|K|) (x - P), where
    P is the vertex opposite e and s = +1 if the global normal of e points out
    of K. Its normal component on e is 1 and it vanishes on the other edges.
    Returns (scale (nt, 3), opposite vertices (nt, 3, 2)).
    """
    lengths = mesh.edge_lengths[mesh.triangle_edges]
    scale = mesh.triangle_edge_signs * lengths / (2.0 * mesh.areas[:, None])
    return scale, mesh.triangle_points


def mixed_residual(mesh: Mesh, p: RtFlux, ubar: UBar, fbar: PwConstant, rule: TriangleRule = MIDPOINT3) -> tuple[float, float]:
    """Residuals of the RT mixed system at the pair (p, ubar).

    r1 = max_e |(p, q_e) + (ubar, div q_e)| over the RT basis,
    r2 = max_K |div p + fbar_K|.
    """
    scale, verts = rt_basis_local(mesh)
    x = mesh.map_points(rule.bary)  # (nt,nq,2)
    pv = p.evaluate(rule.bary)  # (nt,nq,2)
    # (p, x - P_i)_K for every local i
    rel = x[:, :, None, :] - verts[:, None, :, :]  # (nt,nq,3,2)
    inner = mesh.areas[:, None] * np.einsum("tqd,tqid,q->ti", pv, rel, rule.weights)
    pq = scale * inner
    # div q = 2 * scale on K, so (ubar, div q)_K = 2 scale |K| ubar_K
    udiv = 2.0 * scale * mesh.areas[:, None] * ubar.values[:, None]
    per_edge = np.bincount(mesh.triangle_edges.ravel(), (pq + udiv).ravel(), minlength=mesh.n_edges)
    r1 = float(np.max(np.abs(per_edge), initial=0.0))
    r2 = float(np.max(np.abs(p.divergence() + fbar.values), initial=0.0))
    return r1, r2


def bubble_cross_stiffness(mesh: Mesh, rule: TriangleRule = MIDPOINT3) -> sp.csr_matrix:
    """(grad_h psi_e, grad phi_K) for CR basis psi_e and bubbles phi_K, by quadrature."""
    x = mesh.map_points(rule.bary)
    gphi = x - mesh.centroids[:, None, :]  # (nt,nq,2)
    gpsi = -2.0 * mesh.barycentric_gradients  # (nt,3,2)
    local = mesh.areas[:, None] * np.einsum("tid,tqd,q->ti", gpsi, gphi, rule.weights)
    rows = mesh.triangle_edges.ravel()
    cols = np.repeat(np.arange(mesh.n_triangles), 3)
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_edges, mesh.n_triangles))


def solve_enriched(mesh: Mesh, f: Load, rule: TriangleRule = MIDPOINT3) -> tuple[CrSolution, BubbleCoefficients]:
    """Direct Galerkin solve in CR + bubbles with load Q_h f (no decoupling assumed)."""
    fbar = project_mean(mesh, f)
    A, dofmap = assemble_cr(mesh)
    B = bubble_cross_stiffness(mesh, rule)
    x = mesh.map_points(rule.bary)
    g = mesh.centroids[:, None, :]
    r2 = np.sum((x - g) ** 2, axis=-1)
    phi = 0.5 * r2 - _vertex_spread(mesh.triangle_points)[:, None] / 12.0
    D = sp.diags(mesh.areas * (r2 @ rule.weights))
    free = dofmap.free
    K = sp.bmat([[A[free][:, free], B[free]], [B[free].T, D]], format="csr")
    rhs = np.concatenate([load_vector_cr(mesh, fbar)[free], mesh.areas * fbar.values * (phi @ rule.weights)])
    sol = solve_spd(K, rhs)
    u = np.zeros(mesh.n_edges)
    u[free] = sol[: len(free)]
    return CrSolution(mesh, u), BubbleCoefficients(mesh, sol[len(free):])

