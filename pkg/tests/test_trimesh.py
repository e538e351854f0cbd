import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from femcert.trimesh import (
    Mesh,
    MeshError,
    TriangleShape,
    classify_shape,
    generate_friedrichs_keller,
    generate_reference_triangle_mesh,
    read_mesh,
    reference_grid_index,
    reference_vertices,
    write_mesh,
)


@pytest.mark.parametrize("N, nv, nt, ne", [(1, 4, 2, 5), (2, 9, 8, 16), (4, 25, 32, 56)])
def test_fk_counts(N, nv, nt, ne):
    m = generate_friedrichs_keller(N)
    assert (m.n_vertices, m.n_triangles, m.n_edges) == (nv, nt, ne)
    # Euler characteristic of a disc
    assert m.n_vertices - m.n_edges + m.n_triangles == 1


def test_fk_edge_directions():
    m = generate_friedrichs_keller(2)
    d = m.vertices[m.edges[:, 1]] - m.vertices[m.edges[:, 0]]
    horizontal = np.sum(np.isclose(d[:, 1], 0))
    vertical = np.sum(np.isclose(d[:, 0], 0))
    assert (horizontal, vertical, m.n_edges - horizontal - vertical) == (6, 6, 4)


def test_fk_shapes_are_congruent():
    m = generate_friedrichs_keller(4)
    for s in m.shapes():
        assert s.alpha == pytest.approx(1.0)
        assert s.theta == pytest.approx(math.pi / 2)
        assert s.h == pytest.approx(0.25)


def test_fk_rejects_bad_N():
    with pytest.raises(MeshError):
        generate_friedrichs_keller(0)
    with pytest.raises(MeshError):
        generate_friedrichs_keller(2.5)


def test_fk_boundary():
    m = generate_friedrichs_keller(3)
    assert m.boundary_edges.sum() == 12
    assert m.boundary_vertices.sum() == 12
    assert m.areas.sum() == pytest.approx(1.0)


def test_reference_mesh_subdivision():
    m = generate_reference_triangle_mesh(1.0, math.pi / 2, 2)
    assert m.n_triangles == 4
    for s in m.shapes():
        assert (s.alpha, s.h) == pytest.approx((1.0, 0.5))
        assert s.theta == pytest.approx(math.pi / 2)
    assert generate_reference_triangle_mesh(1.0, math.pi / 2, 20).n_triangles == 400


def test_reference_mesh_single():
    m = generate_reference_triangle_mesh(0.5, math.pi / 2, 1)
    np.testing.assert_allclose(m.vertices, [[0, 0], [1, 0], [0, 0.5]], atol=1e-16)


@pytest.mark.parametrize("alpha, theta", [(0.3, 2.0), (1.0, math.pi / 3), (0.7, 2.9)])
def test_reference_mesh_area_and_grid(alpha, theta):
    n = 5
    m = generate_reference_triangle_mesh(alpha, theta, n)
    O, A, B = reference_vertices(alpha, theta)
    assert m.areas.sum() == pytest.approx(0.5 * alpha * math.sin(theta))
    np.testing.assert_allclose(m.vertices[reference_grid_index(n, n, 0)], A, atol=1e-15)
    np.testing.assert_allclose(m.vertices[reference_grid_index(n, 0, n)], B, atol=1e-15)
    assert len(m.vertices) == reference_grid_index(n, 0, n) + 1


def test_shape_range():
    with pytest.raises(MeshError):
        TriangleShape(1.2, 2.0, 1.0)
    with pytest.raises(MeshError):
        TriangleShape(1.0, 0.5, 1.0)
    with pytest.raises(MeshError):
        TriangleShape(0.5, math.pi, 1.0)
    TriangleShape(1.0, math.pi / 3, 1.0)


@pytest.mark.parametrize(
    "tri, expected",
    [
        ([(0, 0), (1, 0), (0, 1)], (1.0, math.pi / 2, 1.0)),
        ([(0, 0), (2, 0), (0, 1)], (0.5, math.pi / 2, 2.0)),
        ([(0, 0), (1, 0), (0.5, math.sqrt(3) / 2)], (1.0, math.pi / 3, 1.0)),
    ],
)
def test_classify_examples(tri, expected):
    s = classify_shape(tri)
    assert (s.alpha, s.theta, s.h) == pytest.approx(expected, abs=1e-12)


def test_classify_degenerate():
    with pytest.raises(MeshError):
        classify_shape([(0, 0), (1, 0), (2, 0)])


@settings(max_examples=60, deadline=None)
@given(
    alpha=st.floats(0.05, 1.0),
    t=st.floats(0.0, 0.97),
    h=st.floats(0.1, 10.0),
    phi=st.floats(0, 2 * math.pi),
    shift=st.tuples(st.floats(-5, 5), st.floats(-5, 5)),
)
def test_classify_inverts_reference_under_rigid_motion(alpha, t, h, phi, shift):
    lo = math.acos(alpha / 2)
    theta = lo + t * (math.pi - lo)
    tri = reference_vertices(alpha, theta, h)
    R = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
    moved = tri @ R.T + np.array(shift)
    s = classify_shape(moved)
    assert s.h == pytest.approx(h, rel=1e-9)
    assert s.alpha == pytest.approx(alpha, rel=1e-7, abs=1e-9)
    # with alpha = 1 the two shorter edges tie and theta stays defined by the same vertex
    assert s.theta == pytest.approx(theta, abs=1e-6)


def test_normals_and_signs():
    m = generate_friedrichs_keller(3)
    n = m.edge_normals
    np.testing.assert_allclose(np.linalg.norm(n, axis=1), 1.0)
    t = m.vertices[m.edges[:, 1]] - m.vertices[m.edges[:, 0]]
    np.testing.assert_allclose(np.einsum("ij,ij->i", n, t), 0.0, atol=1e-15)
    # boundary normals point out of the square
    bd = m.boundary_edges
    out = m.edge_midpoints[bd] - 0.5
    assert np.all(np.einsum("ij,ij->i", n[bd], out) > 0)
    # the signs flip between the two neighbours of an interior edge
    signs = m.triangle_edge_signs
    for e in np.flatnonzero(~bd):
        k1, k2 = m.edge_triangles[e]
        s1 = signs[k1][list(m.triangle_edges[k1]).index(e)]
        s2 = signs[k2][list(m.triangle_edges[k2]).index(e)]
        assert s1 == -s2


def test_mesh_rejects_clockwise():
    with pytest.raises(MeshError, match="counter-clockwise"):
        Mesh(np.array([[0, 0], [0, 1], [1, 0]]), np.array([[0, 1, 2]]))


def test_io_round_trip():
    m = generate_friedrichs_keller(1)
    text = write_mesh(m)
    assert read_mesh(text).same_structure(m)
    buf = io.StringIO()
    write_mesh(generate_friedrichs_keller(3), buf)
    buf.seek(0)
    assert read_mesh(buf).same_structure(generate_friedrichs_keller(3))


def test_io_index_out_of_range():
    text = "ncmesh v1\n3 1\n0 0\n1 0\n0 1\n0 1 3\n"
    with pytest.raises(MeshError, match="line 6"):
        read_mesh(text)


def test_io_orientation():
    text = "ncmesh v1\n3 1\n0 0\n1 0\n0 1\n0 2 1\n"
    with pytest.raises(MeshError, match="orientation"):
        read_mesh(text)


@pytest.mark.parametrize(
    "text, line",
    [
        ("mesh\n", 1),
        ("ncmesh v1\nx y\n", 2),
        ("ncmesh v1\n3 1\n0 0\n1 0\n", 5),
        ("ncmesh v1\n3 1\n0 0\n1 0\n0 1\n0 1 2\nextra\n", 7),
    ],
)
def test_io_malformed(text, line):
    with pytest.raises(MeshError, match=f"line {line}"):
        read_mesh(text)
