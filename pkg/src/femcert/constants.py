"""Interpolation error constants on the reference triangle T(alpha, theta).

Constants are identified by string tags::

    "0"    ||v|| / |v|_1 over H^1 functions with zero mean
    "1".."3"  ... with zero integral over edge e1=OA, e2=OB, e3=AB
    "12", "123"  ... zero integral over several edges at once
    "4"    |v|_1 / |v|_2 over H^2 functions with zero integral on every edge
    "5"    ||v|| / |v|_2 over the same space
    "6"    closed-form Fortin interpolation constant

All values are for h = 1; a constant on T(alpha, theta, h) is h times the
value (h**2 for "5").
"""

from __future__ import annotations

import csv
import functools
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial import legendre as L

from .femcore import assemble_conforming, assemble_p1_mass
from .quadrature import collapsed_gauss, edge_gauss
from .trimesh import (
    check_shape_range,
    generate_reference_triangle_mesh,
    reference_grid_index,
    reference_vertices,
)

CONSTANT_IDS = ("0", "1", "2", "3", "12", "123", "4", "5", "6")
EIGEN_IDS = ("0", "1", "2", "3", "12", "123")
EDGE_SETS = {"1": (1,), "2": (2,), "3": (3,), "12": (1, 2), "123": (1, 2, 3)}

# Above this many unknowns the constrained eigenproblem switches from the
# dense null-space route to sparse shift-invert Lanczos.
DENSE_EIGEN_LIMIT = 1200

# Theorem bracket for C_{1,2} on the unit right isosceles triangle.
C12_PUBLISHED_BRACKET = (0.24641, 0.24647)


def constant_id(J) -> str:
    """Normalise a constant tag: 0, "4", "{1,2}", (1, 2, 3), "123" ..."""
    if isinstance(J, (tuple, list, set, frozenset)):
        tag = "".join(str(int(j)) for j in sorted(J))
    else:
        tag = str(J).strip().strip("{}").replace(",", "").replace(" ", "")
    if tag not in CONSTANT_IDS:
        raise ValueError(f"unknown constant id {J!r}; expected one of {CONSTANT_IDS}")
    return tag


@dataclass(frozen=True)
class ConstantEstimate:
    id: str
    alpha: float
    theta: float
    lower: float
    upper: float
    method: str
    n: Optional[int] = None
    poly_degree: Optional[int] = None
    h: float = 1.0

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError(f"C_{self.id}: lower {self.lower!r} exceeds upper {self.upper!r}")

    def scaled(self, h: float) -> "ConstantEstimate":
        """Estimate on T(alpha, theta, h) from the one at the current scale."""
        p = 2 if self.id == "5" else 1
        s = (h / self.h) ** p
        return replace(self, lower=self.lower * s, upper=self.upper * s, h=h)


# --------------------------------------------------------- exact constants


def c0_exact() -> float:
    """C_0 on the unit right isosceles triangle."""
    return 1.0 / math.pi


@functools.lru_cache(maxsize=None)
def _tan_root() -> float:
    """Smallest positive root t of t + tan(t) = 0; it lies in (pi/2, pi)."""
    lo, hi = math.pi / 2 + 1e-9, math.pi - 1e-9
    g = lambda t: t + math.tan(t)  # noqa: E731
    assert g(lo) < 0 < g(hi)
    while hi - lo > 1e-14:
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    for _ in range(3):
        t -= g(t) / (1.0 + 1.0 / math.cos(t) ** 2)
    return t


def solve_c1_transcendental() -> float:
    """Largest positive root of 1/mu + tan(1/mu) = 0, equal to C_1 = C_2."""
    return 1.0 / _tan_root()


def solve_c12_transcendental() -> float:
    """Largest positive root of 1/(2 mu) + tan(1/(2 mu)) = 0, equal to C_{1,2}."""
    return 1.0 / (2.0 * _tan_root())


def c6_closed_form(alpha: float, theta: float, c1: float, c2: float) -> float:
    """Fortin constant from the edge constants c1 = C_1(alpha, theta), c2 = C_2(alpha, theta).

    Nondecreasing in c1 and c2, so upper bounds for them give an upper bound.
    """
    check_shape_range(alpha, theta)
    if c1 <= 0 or c2 <= 0:
        raise ValueError("c1 and c2 must be positive")
    root = math.sqrt(max(c1 * c1 + c2 * c2 + 2 * c1 * c2 * math.cos(2 * theta), 0.0))
    inner = c1 * c1 + c2 * c2 + 2 * c1 * c2 * math.cos(theta) ** 2 + (c1 + c2) * root
    return math.sqrt(inner) / (math.sqrt(2.0) * math.sin(theta))


# ------------------------------------------------------------ upper bounds


def _is_right_angle(theta: float) -> bool:
    return abs(theta - math.pi / 2) <= 1e-12


def _area(p: np.ndarray) -> float:
    d1, d2 = p[1] - p[0], p[2] - p[0]
    return 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])


def _vertex_second_moment(alpha: float, theta: float, vertex: int) -> float:
    """Integral of |x - P|^2 over T(alpha, theta) for vertex P (0=O, 1=A, 2=B)."""
    p = reference_vertices(alpha, theta)
    area = _area(p)
    g = p.mean(axis=0)
    centred = area * np.sum((p - g) ** 2) / 12.0
    return centred + area * float(np.sum((g - p[vertex]) ** 2))


def c0_upper(alpha: float, theta: float) -> tuple[float, str]:
    check_shape_range(alpha, theta)
    diam = math.sqrt(1 + alpha * alpha - 2 * alpha * math.cos(theta))
    best = (diam / math.pi, "payne-weinberger:diam/pi")
    if _is_right_angle(theta):
        best = min(best, (1.0 / math.pi, "monotone-alpha:C0(1)=1/pi"))
    return best


def edge_constant_upper(i: int, alpha: float, theta: float) -> tuple[float, str]:
    """Upper bound for C_i, i in {1, 2, 3}.

    For zero mean on edge e_i opposite vertex P, the element mean of v equals
    -(1/2|T|) * int (x - P).grad v, so ||v||^2 <= (C_0^2 + ||x-P||^2/(4|T|)) |v|_1^2.
    """
    c0, how = c0_upper(alpha, theta)
    opposite = {1: 2, 2: 1, 3: 0}[i]
    area = 0.5 * alpha * math.sin(theta)
    best = (
        math.sqrt(c0 * c0 + _vertex_second_moment(alpha, theta, opposite) / (4 * area)),
        f"edge-mean-identity[{how}]",
    )
    if i in (1, 2) and _is_right_angle(theta):
        best = min(best, (solve_c1_transcendental(), "monotone-alpha:C1(1)=root(1/mu+tan(1/mu))"))
    return best


def c12_upper(alpha: float, theta: float) -> tuple[float, str]:
    if _is_right_angle(theta):
        return solve_c12_transcendental(), "monotone-alpha:C12(1)=root(1/(2mu)+tan(1/(2mu)))"
    c1, m1 = edge_constant_upper(1, alpha, theta)
    c2, m2 = edge_constant_upper(2, alpha, theta)
    return (c1, f"C12<=C1[{m1}]") if c1 <= c2 else (c2, f"C12<=C2[{m2}]")


def c123_upper(alpha: float, theta: float) -> tuple[float, str]:
    c12, m12 = c12_upper(alpha, theta)
    c3, m3 = edge_constant_upper(3, alpha, theta)
    return (c12, f"C123<=C12[{m12}]") if c12 <= c3 else (c3, f"C123<=C3[{m3}]")


def c6_upper(alpha: float, theta: float) -> tuple[float, str]:
    c1, m1 = edge_constant_upper(1, alpha, theta)
    c2, m2 = edge_constant_upper(2, alpha, theta)
    return c6_closed_form(alpha, theta, c1, c2), f"closed-form(c1[{m1}],c2[{m2}])"


def upper_bound(J, alpha: float, theta: float) -> tuple[float, str]:
    """Certified upper bound and its derivation chain for C_J(alpha, theta)."""
    J = constant_id(J)
    if J == "0":
        return c0_upper(alpha, theta)
    if J in ("1", "2", "3"):
        return edge_constant_upper(int(J), alpha, theta)
    if J == "12":
        return c12_upper(alpha, theta)
    if J == "123":
        return c123_upper(alpha, theta)
    if J == "4":
        c0, m = c0_upper(alpha, theta)
        return c0, f"chain-upper:C4<=C0[{m}]"
    if J == "5":
        c0, m0 = c0_upper(alpha, theta)
        c123, m123 = c123_upper(alpha, theta)
        return c0 * c123, f"chain-upper:C5<=C0*C123[{m0};{m123}]"
    return c6_upper(alpha, theta)


# ---------------------------------------------------- eigen lower bounds


def _edge_vertex_chains(n: int) -> dict[int, list[int]]:
    idx = functools.partial(reference_grid_index, n)
    return {
        1: [idx(i, 0) for i in range(n + 1)],
        2: [idx(0, j) for j in range(n + 1)],
        3: [idx(n - j, j) for j in range(n + 1)],
    }


def _constraint_rows(J: str, mesh, n: int, M) -> np.ndarray:
    if J == "0":
        return np.asarray(M @ np.ones(mesh.n_vertices))[None, :]
    chains = _edge_vertex_chains(n)
    rows = []
    for e in EDGE_SETS[J]:
        row = np.zeros(mesh.n_vertices)
        chain = chains[e]
        for a, b in zip(chain[:-1], chain[1:]):
            half = 0.5 * float(np.linalg.norm(mesh.vertices[b] - mesh.vertices[a]))
            row[a] += half
            row[b] += half
        rows.append(row)
    return np.array(rows)


def _min_eig_dense(A, M, C) -> float:
    k = C.shape[0]
    Q, _ = np.linalg.qr(C.T, mode="complete")
    Z = Q[:, k:]
    Az = Z.T @ (A @ Z)
    Mz = Z.T @ (M @ Z)
    Az = 0.5 * (Az + Az.T)
    Mz = 0.5 * (Mz + Mz.T)
    return float(sla.eigh(Az, Mz, subset_by_index=[0, 0], eigvals_only=True)[0])


def _min_eig_sparse(A, M, C) -> float:
    """Shift-invert Lanczos where the inverse solves the constrained saddle-point system."""
    n, k = A.shape[0], C.shape[0]
    K = sp.bmat([[A, sp.csr_matrix(C).T], [sp.csr_matrix(C), None]], format="csc")
    lu = spla.splu(K)

    def solve(b):
        return lu.solve(np.concatenate([b, np.zeros(k)]))[:n]

    op = spla.LinearOperator((n, n), matvec=solve, dtype=float)
    v0 = solve(M @ np.ones(n))
    vals = spla.eigsh(A, k=1, M=M, sigma=0.0, which="LM", OPinv=op, v0=v0, tol=1e-13, return_eigenvectors=False)
    return float(vals[0])


def eigen_constant_lower(J, alpha: float, theta: float, n: int, h: float = 1.0, method: str = "auto") -> float:
    """Rayleigh-Ritz lower bound for C_J(alpha, theta, h) from conforming P1 on an n x n subdivision.

    The discrete space is a subspace of the constrained Sobolev space, so its
    smallest eigenvalue overestimates the exact one and 1/sqrt(lambda_h)
    bounds the constant from below.
    """
    J = constant_id(J)
    if J not in EIGEN_IDS:
        raise ValueError(f"no eigenvalue characterisation for C_{J}")
    if n < 2:
        raise ValueError("n must be at least 2")
    mesh = generate_reference_triangle_mesh(alpha, theta, n, h)
    A, _ = assemble_conforming(mesh)
    M = assemble_p1_mass(mesh)
    C = _constraint_rows(J, mesh, n, M)
    if np.linalg.matrix_rank(C) < C.shape[0]:
        raise RuntimeError("rank-deficient constraint rows")
    if method == "auto":
        method = "dense" if mesh.n_vertices <= DENSE_EIGEN_LIMIT else "sparse"
    lam = _min_eig_dense(A, M, C) if method == "dense" else _min_eig_sparse(A, M, C)
    return 1.0 / math.sqrt(lam)


# ------------------------------------------------ C4 / C5 polynomial bracket


def _poly_basis(alpha: float, theta: float, h: float, degree: int):
    """Legendre tensor basis of total degree <= degree on the triangle's bounding box.

    Returns a function mapping points (m, 2) to values, gradients and the
    Hessian entries (xx, xy, yy), each of shape (m, nb).
    """
    p = reference_vertices(alpha, theta, h)
    lo, hi = p.min(axis=0), p.max(axis=0)
    centre, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    pairs = [(a, d - a) for d in range(degree + 1) for a in range(d + 1)]

    def leg(k, s, der):
        c = np.zeros(k + 1)
        c[k] = 1.0
        return L.legval(s, L.legder(c, der) if der else c)

    def evaluate(x):
        s = (x - centre) / half
        out = {}
        for key, (dx, dy) in {"v": (0, 0), "x": (1, 0), "y": (0, 1), "xx": (2, 0), "xy": (1, 1), "yy": (0, 2)}.items():
            cols = [leg(a, s[:, 0], dx) * leg(b, s[:, 1], dy) / (half[0] ** dx * half[1] ** dy) for a, b in pairs]
            out[key] = np.column_stack(cols)
        return out

    return evaluate, len(pairs)


def _polynomial_rayleigh_max(J: str, alpha: float, theta: float, degree: int, h: float) -> float:
    evaluate, nb = _poly_basis(alpha, theta, h, degree)
    p = reference_vertices(alpha, theta, h)
    area = _area(p)
    rule = collapsed_gauss(degree + 2)
    x = rule.bary @ p
    w = area * rule.weights
    B = evaluate(x)

    def gram(*keys_weights):
        return sum(c * (B[k].T * w) @ B[k] for k, c in keys_weights)

    mass = gram(("v", 1.0))
    stiff = gram(("x", 1.0), ("y", 1.0))
    hess = gram(("xx", 1.0), ("xy", 2.0), ("yy", 1.0))

    t, tw = edge_gauss(degree + 1)
    rows = []
    for a, b in ((0, 1), (0, 2), (1, 2)):
        pts = p[a] + t[:, None] * (p[b] - p[a])
        rows.append(np.linalg.norm(p[b] - p[a]) * (tw @ evaluate(pts)["v"]))
    C = np.array(rows)
    Q, _ = np.linalg.qr(C.T, mode="complete")
    Z = Q[:, 3:]
    top = Z.T @ (stiff if J == "4" else mass) @ Z
    bottom = Z.T @ hess @ Z
    top, bottom = 0.5 * (top + top.T), 0.5 * (bottom + bottom.T)
    try:
        vals = sla.eigh(top, bottom, eigvals_only=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"degenerate Gram matrix at degree {degree}; reduce poly_degree") from exc
    return math.sqrt(max(float(vals[-1]), 0.0))


def c45_bracket(J, alpha: float, theta: float, poly_degree: int, h: float = 1.0) -> ConstantEstimate:
    """[lower, upper] for C_4 or C_5.

    The lower end maximises the Rayleigh quotient over polynomials of total
    degree <= poly_degree with zero edge integrals; the upper end is the
    chain C_4 <= C_0, C_5 <= C_0 * C_{1,2,3}.
    """
    J = constant_id(J)
    if J not in ("4", "5"):
        raise ValueError("c45_bracket handles C_4 and C_5 only")
    if poly_degree < 2:
        raise ValueError("poly_degree must be at least 2")
    check_shape_range(alpha, theta)
    lower = _polynomial_rayleigh_max(J, alpha, theta, poly_degree, h)
    upper, how = upper_bound(J, alpha, theta)
    upper *= h * h if J == "5" else h
    return ConstantEstimate(J, alpha, theta, lower, upper, f"poly-lower+{how}", None, poly_degree, h)


# ------------------------------------------------------------------ atlas


def estimate(J, alpha: float, theta: float, n: int = 32, poly_degree: int = 8) -> ConstantEstimate:
    """Bracket for any constant at one shape (h = 1)."""
    J = constant_id(J)
    if J in ("4", "5"):
        return c45_bracket(J, alpha, theta, poly_degree)
    upper, how = upper_bound(J, alpha, theta)
    if J == "6":
        lower = c6_closed_form(
            alpha, theta, eigen_constant_lower("1", alpha, theta, n), eigen_constant_lower("2", alpha, theta, n)
        )
        return ConstantEstimate(J, alpha, theta, lower, upper, f"closed-form(eigen-lower)+{how}", n, None)
    lower = eigen_constant_lower(J, alpha, theta, n)
    return ConstantEstimate(J, alpha, theta, lower, upper, f"eigen-lower+chain-upper:{how}", n, None)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("FEMCERT_THREADS", "") or os.cpu_count() or 1))
    except ValueError:
        return 1


def constants_atlas(
    J: Iterable,
    alphas: Sequence[float],
    theta: float,
    n: int = 32,
    poly_degree: int = 8,
    workers: Optional[int] = None,
) -> list[ConstantEstimate]:
    """One estimate per (J, alpha); row order is J-major, then alpha as given."""
    ids = [constant_id(j) for j in J]
    for a in alphas:
        if not 0 < a <= 1:
            raise ValueError(f"alpha {a} outside (0, 1]")
    jobs = [(j, a) for j in ids for a in alphas]
    workers = workers or worker_count()
    if workers == 1:
        return [estimate(j, a, theta, n, poly_degree) for j, a in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda ja: estimate(ja[0], ja[1], theta, n, poly_degree), jobs))


ATLAS_COLUMNS = ["J", "alpha", "theta", "lower", "upper", "method", "n", "poly_degree"]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def atlas_to_csv(rows: Iterable[ConstantEstimate]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ATLAS_COLUMNS)
    for r in rows:
        writer.writerow([r.id, _fmt(r.alpha), _fmt(r.theta), _fmt(r.lower), _fmt(r.upper), r.method, _fmt(r.n), _fmt(r.poly_degree)])
    return buf.getvalue()
