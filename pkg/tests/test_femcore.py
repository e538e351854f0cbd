import math

import numpy as np
import pytest
from scipy.spatial import Delaunay

from femcert.certify import fitted_slope
from femcert.femcore import (
    PwConstant,
    SolverError,
    assemble_conforming,
    assemble_cr,
    energy_error,
    interpolate_cr,
    l2_error,
    l2_norm,
    load_vector_cr,
    project_mean,
    solve_poisson_conforming,
    solve_poisson_cr,
    solve_spd,
)
from femcert.fields import ScalarField, constant, linear, parse_builtin, quadratic, sinsin
from femcert.quadrature import GAUSS7, MIDPOINT3, collapsed_gauss, edge_gauss
from femcert.trimesh import Mesh, generate_friedrichs_keller, reference_vertices

UNIT = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


def _monomial_integral(a, b):
    # integral of x^a y^b over the unit right triangle
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("rule, degree", [(MIDPOINT3, 2), (GAUSS7, 5), (collapsed_gauss(5), 8)])
def test_quadrature_exactness(rule, degree):
    x = UNIT.map_points(rule.bary)[0]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            got = 0.5 * np.sum(rule.weights * x[:, 0] ** a * x[:, 1] ** b)
            assert got == pytest.approx(_monomial_integral(a, b), rel=1e-13, abs=1e-16)


def test_edge_gauss():
    t, w = edge_gauss(4)
    assert w.sum() == pytest.approx(1.0)
    assert np.sum(w * t**7) == pytest.approx(1 / 8)


def test_stiffness_symmetric_with_zero_row_sums():
    m = generate_friedrichs_keller(3)
    for A in (assemble_cr(m)[0], assemble_conforming(m)[0]):
        assert abs(A - A.T).max() < 1e-14
        np.testing.assert_allclose(np.asarray(A.sum(axis=1)).ravel(), 0.0, atol=1e-13)


def test_reduced_sizes():
    _, dm = assemble_cr(UNIT)
    assert len(dm.free) == 0
    _, dm = assemble_cr(generate_friedrichs_keller(2))
    assert len(dm.free) == 8


def test_empty_system_solves_to_zero():
    u = solve_poisson_cr(UNIT, constant(1.0))
    np.testing.assert_array_equal(u.values, 0.0)


def test_zero_load():
    m = generate_friedrichs_keller(4)
    assert np.all(solve_poisson_cr(m, constant(0.0)).values == 0)
    assert np.all(solve_poisson_conforming(m, constant(0.0)).values == 0)


def test_galerkin_orthogonality():
    m = generate_friedrichs_keller(8)
    f = sinsin()
    u = solve_poisson_cr(m, f)
    A, dm = assemble_cr(m)
    b = load_vector_cr(m, f)
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = np.zeros(m.n_edges)
        v[dm.free] = rng.standard_normal(len(dm.free))
        lhs, rhs = v @ (A @ u.values), v @ b
        assert abs(lhs - rhs) <= 1e-9 * max(1.0, np.abs(b).sum() * np.abs(v).max())


def test_cr_reproduces_linear_solution():
    # u = 1 + 2 x1 - x2 with f = 0 and its own boundary data
    u = linear(1.0, 2.0, -1.0)
    rng = np.random.default_rng(3)
    pts = rng.random((30, 2))
    pts = np.vstack([pts, [[0, 0], [1, 0], [0, 1], [1, 1]]])
    tri = Delaunay(pts).simplices
    tri = np.array([t if np.linalg.det(np.stack([pts[t[1]] - pts[t[0]], pts[t[2]] - pts[t[0]]])) > 0 else t[[0, 2, 1]] for t in tri])
    m = Mesh(pts, tri)
    uh = solve_poisson_cr(m, constant(0.0), boundary=u)
    assert energy_error(m, uh, u) < 1e-12
    assert l2_error(m, uh, u) < 1e-12
    uc = solve_poisson_conforming(m, constant(0.0), boundary=u)
    assert energy_error(m, uc, u) < 1e-12


def test_project_mean_examples():
    assert np.all(project_mean(generate_friedrichs_keller(2), constant(3.0)).values == pytest.approx(3.0))
    assert project_mean(UNIT, lambda x, y: x).values[0] == pytest.approx(1 / 3)


def test_project_mean_against_tensor_rule():
    m = generate_friedrichs_keller(2)
    f = sinsin()
    k = int(np.argmin(np.linalg.norm(m.centroids - [0.25, 0.25], axis=1)))
    g7 = project_mean(m, f).values[k]
    assert g7 == pytest.approx(float(np.sum(GAUSS7.weights * f(*m.map_points(GAUSS7.bary)[k].T))), abs=1e-15)
    fine = project_mean(m, f, collapsed_gauss(20)).values[k]
    # a degree-5 rule on h = 1/2 is accurate to a few 1e-6; the 25-point tensor rule to 1e-7
    assert g7 == pytest.approx(fine, abs=5e-6)
    assert project_mean(m, f, collapsed_gauss(5)).values[k] == pytest.approx(fine, abs=1e-7)


def test_interpolate_cr():
    dof = interpolate_cr(UNIT, lambda x, y: x**2)
    e = int(np.flatnonzero((UNIT.edges == [0, 1]).all(axis=1))[0])
    assert dof.values[e] == pytest.approx(1 / 3)
    v = linear(0.3, -1.0, 2.0)
    m = generate_friedrichs_keller(3)
    assert l2_error(m, interpolate_cr(m, v), v) < 1e-14


def test_exact_field_norms():
    m = generate_friedrichs_keller(32)
    u = sinsin().exact_solution
    assert l2_norm(m, u) == pytest.approx(1 / (4 * math.pi**2), rel=1e-4)
    assert l2_norm(m, sinsin()) == pytest.approx(0.5, rel=1e-4)
    q = quadratic([1, 2, -1, 0.5, 0.25, -3])
    assert l2_norm(m, q) == pytest.approx(q.norm, rel=1e-12)


def test_parse_builtin():
    assert parse_builtin("builtin:const:2.5")(0.3, 0.1) == 2.5
    assert parse_builtin("builtin:sinsin").norm == 0.5
    with pytest.raises(ValueError):
        parse_builtin("builtin:cosh")


def test_convergence_rates():
    f = sinsin()
    u = f.exact_solution
    hs, e_cr, l_cr, e_c = [], [], [], []
    for N in (4, 8, 16, 32):
        m = generate_friedrichs_keller(N)
        uh = solve_poisson_cr(m, f)
        hs.append(1 / N)
        e_cr.append(energy_error(m, uh, u))
        l_cr.append(l2_error(m, uh, u))
        e_c.append(energy_error(m, solve_poisson_conforming(m, f), u))
    assert fitted_slope(hs, e_cr) == pytest.approx(1.0, abs=0.1)
    assert fitted_slope(hs, l_cr) == pytest.approx(2.0, abs=0.15)
    assert fitted_slope(hs, e_c) == pytest.approx(1.0, abs=0.1)


def test_own_field_has_zero_error():
    m = generate_friedrichs_keller(4)
    uh = solve_poisson_cr(m, sinsin())
    # a P1 field per element evaluated through the same solution object
    assert energy_error(m, uh, _as_field(uh)) < 1e-13


def _as_field(uh):
    m = uh.mesh

    def locate(x1, x2):
        # points handed to the field are the mapped quadrature points of each triangle
        return np.broadcast_to(np.arange(m.n_triangles)[:, None], np.shape(x1))

    g = uh.gradients()
    return ScalarField(lambda x1, x2: np.zeros(np.shape(x1)), lambda x1, x2: (g[locate(x1, x2), 0], g[locate(x1, x2), 1]))


def test_iterative_path_matches_direct():
    m = generate_friedrichs_keller(16)
    f = sinsin()
    direct = solve_poisson_cr(m, f)
    cg = solve_poisson_cr(m, f, direct_limit=1)
    np.testing.assert_allclose(cg.values, direct.values, atol=1e-12)


def test_singular_system_raises():
    A, _ = assemble_cr(generate_friedrichs_keller(2))
    b = np.ones(A.shape[0])
    with pytest.raises(SolverError):
        solve_spd(A, b)


def test_pw_constant_load_integrates_exactly():
    m = Mesh(reference_vertices(0.6, 2.0), np.array([[0, 1, 2]]))
    fbar = PwConstant(m, np.array([2.0]))
    exact = load_vector_cr(m, fbar)
    quad = load_vector_cr(m, lambda x, y: 2.0 + 0 * x)
    np.testing.assert_allclose(exact, quad, rtol=1e-14)
