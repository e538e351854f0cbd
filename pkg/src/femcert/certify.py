"""Computable a priori and a posteriori error bounds for the CR discretisation.

Global constants are the per-element maxima of certified upper bounds for
the shape constants, with h* the largest medium edge. The interpolation
estimates then use

    gamma0 = C0h * C12h,  gamma1 = C0h,  gamma2 = C6h,  gamma3 = C0h.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import constants
from .femcore import (
    ConformingSolution,
    average_to_vertices,
    energy_error,
    h1_seminorm,
    l2_error,
    l2_norm,
    oscillation,
    project_mean,
    solve_poisson_conforming,
    solve_poisson_cr,
)
from .fields import ScalarField
from .flux import RtFlux, build_rt_flux, solve_modified_cr
from .quadrature import GAUSS7, MIDPOINT3, TriangleRule
from .trimesh import Mesh, generate_friedrichs_keller

log = logging.getLogger(__name__)

MAX_ANGLE_WARNING_DEG = 150.0


@dataclass(frozen=True)
class GlobalConstants:
    h_star: float
    C0h: float
    C12h: float
    C6h: float
    gamma0: float
    gamma1: float
    gamma2: float
    gamma3: float
    max_angle: float = math.pi / 2
    methods: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_constants(cls, h_star, C0h, C12h, C6h, max_angle=math.pi / 2, methods=None):
        return cls(h_star, C0h, C12h, C6h, C0h * C12h, C0h, C6h, C0h, max_angle, dict(methods or {}))


def _max_angle(points: np.ndarray) -> float:
    best = 0.0
    for i in range(3):
        u = points[:, (i + 1) % 3] - points[:, i]
        w = points[:, (i + 2) % 3] - points[:, i]
        c = np.einsum("ij,ij->i", u, w) / (np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1))
        best = max(best, float(np.arccos(np.clip(c, -1.0, 1.0)).max(initial=0.0)))
    return best


def global_constants(mesh: Mesh) -> GlobalConstants:
    """Mesh-wide maxima of the certified upper bounds for C_0, C_{1,2}, C_6, and h*."""
    shapes = mesh.shapes()
    h_star = max(s.h for s in shapes)
    best = {"0": (0.0, ""), "12": (0.0, ""), "6": (0.0, "")}
    seen = set()
    for s in shapes:
        key = (round(s.alpha, 13), round(s.theta, 13))
        if key in seen:
            continue
        seen.add(key)
        for J in best:
            value = constants.upper_bound(J, s.alpha, s.theta)
            if value[0] > best[J][0]:
                best[J] = value
    return GlobalConstants.from_constants(
        h_star,
        best["0"][0],
        best["12"][0],
        best["6"][0],
        _max_angle(mesh.triangle_points),
        {J: m for J, (_, m) in best.items()},
    )


def apriori_energy_bound(
    gc: GlobalConstants,
    norm_f: float,
    seminorm_f1: Optional[float] = None,
    convex: bool = True,
    seminorm_u2: Optional[float] = None,
) -> float:
    """Bound on ||grad u - grad_h u_h||.

    ``|u|_2 <= ||f||`` is used on convex domains unless ``seminorm_u2`` is
    given. Supplying ``seminorm_f1`` selects the variant whose load term is
    gamma3^2 h* |f|_1 instead of gamma3 ||f||.
    """
    if norm_f < 0 or (seminorm_f1 is not None and seminorm_f1 < 0):
        raise ValueError("norms must be nonnegative")
    if seminorm_u2 is None:
        if not convex:
            raise ValueError("|u|_2 <= ||f|| needs a convex domain; pass seminorm_u2")
        seminorm_u2 = norm_f
    h = gc.h_star
    load = gc.gamma3 * norm_f if seminorm_f1 is None else gc.gamma3**2 * h * seminorm_f1
    return h * math.sqrt((gc.gamma1 * seminorm_u2) ** 2 + (gc.gamma2 * seminorm_u2 + load) ** 2)


def l2_bound_terms(gc: GlobalConstants, norm_grad_eh: float, norm_f: float, seminorm_f1: Optional[float] = None):
    """(h* A1, gamma3^2 h*^2 ||grad e||^2): linear and constant coefficients of e^2 <= b e + d."""
    h = gc.h_star
    if seminorm_f1 is None:
        data = gc.gamma0 * h * norm_f
    else:
        data = gc.gamma0 * gc.gamma3 * h * h * seminorm_f1
    a1 = (gc.gamma1 + gc.gamma2) * norm_grad_eh + gc.gamma1 * gc.gamma2 * h * norm_f + data
    return h * a1, (gc.gamma3 * h * norm_grad_eh) ** 2


def apriori_l2_bound(gc: GlobalConstants, norm_grad_eh: float, norm_f: float, seminorm_f1: Optional[float] = None) -> float:
    """Positive root of e^2 = b e + d, which bounds ||u - u_h||.

    ``norm_grad_eh`` is the (certified bound on the) broken energy error.
    """
    if norm_grad_eh < 0 or norm_f < 0:
        raise ValueError("norms must be nonnegative")
    b, d = l2_bound_terms(gc, norm_grad_eh, norm_f, seminorm_f1)
    return 0.5 * (b + math.sqrt(b * b + 4.0 * d))


def flux_estimator(mesh: Mesh, p: RtFlux, v: ConformingSolution, rule: TriangleRule = MIDPOINT3) -> float:
    """||grad v - p||; the integrand is quadratic so the midpoint rule is exact."""
    if v.mesh is not mesh or p.mesh is not mesh:
        raise ValueError("flux and conforming field live on different meshes")
    diff = v.gradients()[:, None, :] - p.evaluate(rule.bary)
    return float(np.sqrt(np.sum(mesh.areas * (np.sum(diff**2, axis=-1) @ rule.weights))))


def data_oscillation_term(
    mesh: Mesh, gc: GlobalConstants, f, seminorm_f1: Optional[float] = None
) -> float:
    """Bound on |u - u^h|_1: min(gamma3 h* ||f - Q_h f||, gamma3^2 h*^2 |f|_1)."""
    term = gc.gamma3 * gc.h_star * oscillation(mesh, f, project_mean(mesh, f))
    if seminorm_f1 is not None:
        term = min(term, gc.gamma3**2 * gc.h_star**2 * seminorm_f1)
    return term


def aposteriori_hypercircle(
    mesh: Mesh,
    p: RtFlux,
    v: ConformingSolution,
    gc: GlobalConstants,
    f,
    seminorm_f1: Optional[float] = None,
) -> tuple[float, float]:
    """(bound on ||grad u - p||, bound on ||grad u - (grad v + p)/2||)."""
    est = flux_estimator(mesh, p, v)
    osc = data_oscillation_term(mesh, gc, f, seminorm_f1)
    return osc + est, osc + 0.5 * est


def flux_error(mesh: Mesh, p: RtFlux, exact: ScalarField, rule: TriangleRule = GAUSS7) -> float:
    x = mesh.map_points(rule.bary)
    diff = exact.grad(x[..., 0], x[..., 1]) - p.evaluate(rule.bary)
    return float(np.sqrt(np.sum(mesh.areas * (np.sum(diff**2, axis=-1) @ rule.weights))))


def midpoint_error(mesh: Mesh, p: RtFlux, v: ConformingSolution, exact: ScalarField, rule: TriangleRule = GAUSS7) -> float:
    x = mesh.map_points(rule.bary)
    avg = 0.5 * (v.gradients()[:, None, :] + p.evaluate(rule.bary))
    diff = exact.grad(x[..., 0], x[..., 1]) - avg
    return float(np.sqrt(np.sum(mesh.areas * (np.sum(diff**2, axis=-1) @ rule.weights))))


# ------------------------------------------------------------------ reports


@dataclass
class BoundReport:
    N: Optional[int]
    h: float
    energy_err: Optional[float]
    l2_err: Optional[float]
    apriori_energy: Optional[float]
    apriori_l2: Optional[float]
    apost_flux: float
    apost_mid: float
    flux_err: Optional[float] = None
    mid_err: Optional[float] = None
    estimator: float = 0.0
    oscillation: float = 0.0
    constants: Optional[GlobalConstants] = None
    l2_surrogate: str = "apriori_energy"
    warnings: list = field(default_factory=list)

    @property
    def eff_energy(self) -> Optional[float]:
        return _ratio(self.apriori_energy, self.energy_err)

    @property
    def eff_apost(self) -> Optional[float]:
        return _ratio(self.apost_flux, self.flux_err)


def _ratio(a, b):
    if a is None or b is None:
        return None
    if b == 0:
        return math.nan
    return a / b


def is_unit_square(mesh: Mesh) -> bool:
    v = mesh.vertices
    return (
        np.allclose(v.min(axis=0), 0.0, atol=1e-14)
        and np.allclose(v.max(axis=0), 1.0, atol=1e-14)
        and abs(mesh.areas.sum() - 1.0) < 1e-12
    )


def certify_run(
    mesh: Mesh,
    f: ScalarField,
    exact: Optional[ScalarField] = None,
    convex: bool = True,
    N: Optional[int] = None,
    v_method: str = "conforming",
) -> BoundReport:
    """Solve, post-process and evaluate every bound on one mesh.

    Closed-form data norms attached to ``f`` are used on the unit square;
    otherwise they are computed by quadrature.
    """
    if is_unit_square(mesh) and f.norm is not None:
        norm_f, semi_f = f.norm, f.h1_seminorm
    else:
        norm_f = l2_norm(mesh, f)
        semi_f = h1_seminorm(mesh, f) if f.gradient is not None else None

    gc = global_constants(mesh)
    warnings = []
    if math.degrees(gc.max_angle) >= MAX_ANGLE_WARNING_DEG:
        msg = (
            f"maximum angle {math.degrees(gc.max_angle):.2f} deg >= {MAX_ANGLE_WARNING_DEG:g} deg: "
            f"Fortin constant C6h = {gc.C6h:.6g} inflates the a priori bounds"
        )
        log.warning(msg)
        warnings.append(msg)

    u_h = solve_poisson_cr(mesh, f)
    fbar = project_mean(mesh, f)
    u_star = solve_modified_cr(mesh, fbar)
    p = build_rt_flux(mesh, u_star, fbar)
    if v_method == "conforming":
        v = solve_poisson_conforming(mesh, fbar)
    elif v_method == "average":
        v = average_to_vertices(u_star)
    else:
        raise ValueError(f"unknown v_method {v_method!r}")

    if convex:
        apriori_energy = apriori_energy_bound(gc, norm_f, semi_f)
        apriori_l2 = apriori_l2_bound(gc, apriori_energy, norm_f, semi_f)
    else:
        apriori_energy = apriori_l2 = None
    est = flux_estimator(mesh, p, v)
    osc = data_oscillation_term(mesh, gc, f, semi_f)

    report = BoundReport(
        N=N,
        h=gc.h_star,
        energy_err=None,
        l2_err=None,
        apriori_energy=apriori_energy,
        apriori_l2=apriori_l2,
        apost_flux=osc + est,
        apost_mid=osc + 0.5 * est,
        estimator=est,
        oscillation=osc,
        constants=gc,
        warnings=warnings,
    )
    if exact is not None:
        report.energy_err = energy_error(mesh, u_h, exact)
        report.l2_err = l2_error(mesh, u_h, exact)
        report.flux_err = flux_error(mesh, p, exact)
        report.mid_err = midpoint_error(mesh, p, v, exact)
    return report


def convergence_study(
    f: ScalarField,
    exact: ScalarField,
    N_list: Sequence[int],
    workers: Optional[int] = None,
    v_method: str = "conforming",
) -> list[BoundReport]:
    """One report per Friedrichs-Keller mesh N x N of the unit square (convex)."""
    if not N_list:
        raise ValueError("N list must be nonempty")

    def run(N):
        return certify_run(generate_friedrichs_keller(N), f, exact, True, N, v_method)

    workers = workers or constants.worker_count()
    if workers == 1:
        return [run(N) for N in N_list]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, N_list))


def fitted_slope(h: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of log(values) against log(h)."""
    return float(np.polyfit(np.log(np.asarray(h, float)), np.log(np.asarray(values, float)), 1)[0])


REPORT_COLUMNS = [
    "N", "h", "energy_err", "l2_err", "apriori_energy", "apriori_l2",
    "apost_flux", "apost_mid", "eff_energy", "eff_apost",
]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def report_row(r: BoundReport) -> list[str]:
    return [_fmt(getattr(r, c)) for c in REPORT_COLUMNS]


def reports_to_csv(reports: Sequence[BoundReport], slopes: bool = True) -> str:
    """Convergence CSV; with ``slopes`` a footer row ``slope,,...`` holds log-log fits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in reports:
        w.writerow(report_row(r))
    if slopes and len(reports) >= 2:
        h = [r.h for r in reports]
        footer = ["slope", ""]
        for c in REPORT_COLUMNS[2:8]:
            vals = [getattr(r, c) for r in reports]
            ok = all(v is not None and v > 0 for v in vals)
            footer.append(_fmt(fitted_slope(h, vals)) if ok else "")
        footer += ["", ""]
        w.writerow(footer)
    return buf.getvalue()
