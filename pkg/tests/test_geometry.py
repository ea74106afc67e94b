import numpy as np
import pytest

from hmaplab.errors import ConfigurationError, DomainError
from hmaplab.geometry import (
    DIRECTIONS,
    build_ball_grid,
    build_icosphere,
    check_unit,
    exp_chart,
    from_lat_lon,
    geodesic_ball,
    geodesic_distance,
    lat_lon,
    normalize_rows,
    signed_solid_angle,
)


@pytest.mark.parametrize("level", [0, 1, 3])
def test_icosphere_counts(level):
    m = build_icosphere(level)
    assert m.n_vertices == 10 * 4**level + 2
    assert m.n_triangles == 20 * 4**level
    assert np.allclose(np.linalg.norm(m.vertices, axis=1), 1.0, atol=1e-15)


def test_icosphere_area_and_orientation(sphere4):
    assert sphere4.areas.sum() == pytest.approx(4 * np.pi, abs=1e-12)
    assert (sphere4.areas > 0).all()
    assert sphere4.flat_areas.sum() < 4 * np.pi
    assert sphere4.vertex_areas.sum() == pytest.approx(4 * np.pi, abs=1e-12)


def test_icosphere_level_bounds():
    with pytest.raises(ConfigurationError):
        build_icosphere(-1)
    with pytest.raises(ConfigurationError):
        build_icosphere(9)


def test_mesh_size_halves(sphere3, sphere4):
    assert sphere4.mesh_size == pytest.approx(sphere3.mesh_size / 2, rel=0.1)


def test_geodesic_distance_known_values():
    a = np.array([[0, 0, 1.0], [1, 0, 0.0], [1, 0, 0.0]])
    b = np.array([[0, 0, -1.0], [0, 1, 0.0], [1, 0, 0.0]])
    assert np.allclose(geodesic_distance(a, b), [np.pi, np.pi / 2, 0.0])


def test_solid_angle_octant():
    e = np.eye(3)
    omega = signed_solid_angle(e[0:1], e[1:2], e[2:3])
    assert omega[0] == pytest.approx(np.pi / 2)
    assert signed_solid_angle(e[0:1], e[2:3], e[1:2])[0] == pytest.approx(-np.pi / 2)


def test_locate_returns_convex_weights(sphere4, rng):
    pts = normalize_rows(rng.normal(size=(500, 3)))
    tri, w = sphere4.locate(pts)
    assert (w >= -1e-12).all()
    assert np.allclose(w.sum(axis=1), 1.0)
    # the weights reproduce the point up to the flat-facet projection
    flat = np.einsum("ij,ijk->ik", w, sphere4.vertices[sphere4.triangles[tri]])
    assert np.allclose(normalize_rows(flat), pts, atol=1e-12)


def test_locate_at_vertices_is_exact(sphere3):
    tri, w = sphere3.locate(sphere3.vertices)
    corners = sphere3.triangles[tri]
    hit = corners[np.arange(len(tri)), np.argmax(w, axis=1)]
    assert np.array_equal(hit, np.arange(sphere3.n_vertices))


def test_interpolation_matrix_rows_sum_to_one(sphere3, rng):
    pts = normalize_rows(rng.normal(size=(50, 3)))
    A = sphere3.interpolation_matrix(pts)
    assert np.allclose(np.asarray(A.sum(axis=1)).ravel(), 1.0)


def test_check_unit_rejects_non_unit():
    with pytest.raises(DomainError):
        check_unit([1.0, 1.0, 0.0])
    assert np.array_equal(check_unit([0, 0, 1.0]), [0, 0, 1.0])


def test_geodesic_ball_membership(sphere4):
    x = from_lat_lon(30, 40)
    b = geodesic_ball(sphere4, x, 0.5)
    d = geodesic_distance(sphere4.vertices, x[None, :])
    assert np.array_equal(np.sort(b.indices), np.nonzero(d < 0.5)[0])
    assert len(b) == b.mask.sum()
    # lumped vertex area against the spherical cap area
    assert b.area == pytest.approx(2 * np.pi * (1 - np.cos(0.5)), rel=0.05)
    assert "," not in b.label()
    with pytest.raises(DomainError):
        geodesic_ball(sphere4, x, 0.0)
    with pytest.raises(DomainError):
        geodesic_ball(sphere4, x, np.pi + 0.1)


def test_lat_lon_round_trip():
    for lat, lon in [(0, 0), (45, -120), (-80, 10)]:
        la, lo = lat_lon(from_lat_lon(lat, lon))
        assert la == pytest.approx(lat) and lo == pytest.approx(lon)


def test_exp_chart_round_trip_and_isometry(rng):
    x = from_lat_lon(20, 70)
    ch = exp_chart(x)
    q = normalize_rows(x + 0.3 * rng.normal(size=(100, 3)))
    y = ch.forward(q)
    assert np.allclose(ch.inverse(y), q, atol=1e-13)
    assert np.allclose(np.linalg.norm(y, axis=1), geodesic_distance(q, x[None, :]), atol=1e-13)


def test_ball_grid_structure(ball16):
    b = ball16
    h = b.spacing
    assert h == pytest.approx(2 / 16)
    inner = b.nodes[: b.n_interior]
    assert (np.linalg.norm(inner, axis=1) < 1).all()
    assert np.allclose(np.linalg.norm(b.nodes[b.n_interior :], axis=1), 1.0, atol=1e-14)
    assert b.neighbors.shape == (b.n_interior, len(DIRECTIONS))
    assert (b.weights > 0).all()
    assert b.total_volume == pytest.approx(4 * np.pi / 3, rel=0.02)


def test_ball_grid_edges_are_unique(ball16):
    i, j, w = ball16.edges
    pairs = {(min(a, c), max(a, c)) for a, c in zip(i.tolist(), j.tolist())}
    assert len(pairs) == len(i)
    assert (w > 0).all()


def test_ball_colors_are_a_proper_two_coloring(ball16):
    b = ball16
    col = b.colors
    nbr = b.neighbors
    inner = nbr < b.n_interior
    rows = np.repeat(np.arange(b.n_interior)[:, None], 6, axis=1)
    assert (col[rows[inner]] != col[nbr[inner]]).all()


def test_ball_trace_reproduces_identity(ball16):
    vals = ball16.trace(ball16.sphere.vertices)
    assert np.allclose(vals, ball16.nodes[ball16.n_interior :], atol=5e-3)
    assert np.allclose(np.linalg.norm(vals, axis=1), 1.0)


def test_ball_grid_rejects_coarse_resolution():
    with pytest.raises(ConfigurationError):
        build_ball_grid(4)
