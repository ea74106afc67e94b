import warnings

import numpy as np
import pytest

from hmaplab.errors import DomainError
from hmaplab.geometry import build_ball_grid, from_lat_lon, geodesic_ball, normalize_rows
from hmaplab.maps import standard_map
from hmaplab.sobolev import (
    BallMap,
    SphereMap,
    boundary_values,
    degree,
    dirichlet_energy,
    w1p_distance,
    w1p_norm,
)


def test_sphere_map_rejects_non_unit(sphere3):
    with pytest.raises(DomainError):
        SphereMap(sphere3, 2 * sphere3.vertices)
    with pytest.raises(DomainError):
        SphereMap(sphere3, sphere3.vertices[:-1])


def test_sphere_map_values_are_read_only(sphere3):
    f = SphereMap.identity(sphere3)
    with pytest.raises(ValueError):
        f.values[0, 0] = 0.0


def test_sample_at_vertices_is_identity(sphere3):
    f = SphereMap.identity(sphere3)
    assert np.allclose(f.sample(sphere3.vertices), sphere3.vertices, atol=1e-14)


@pytest.mark.parametrize("spec,k", [("identity", 1), ("constant", 0), ("antipodal", -1), ("wrap:2", 2), ("wrap:3", 3)])
def test_degree_of_standard_maps(sphere4, spec, k):
    d = degree(standard_map(sphere4, spec))
    assert d.degree == k
    assert abs(d.raw - k) < 0.02


def test_degree_warns_on_underresolved_map(sphere3):
    with pytest.warns(UserWarning):
        degree(standard_map(sphere3, "wrap:12"))


def test_identity_norm_parts(sphere5):
    rep = w1p_norm(SphereMap.identity(sphere5), 1.0)
    # |id| = 1 and |grad id| = sqrt(2) pointwise
    assert rep.lp_part == pytest.approx(4 * np.pi, rel=1e-12)
    assert rep.seminorm_part == pytest.approx(np.sqrt(2) * 4 * np.pi, rel=2e-3)
    assert rep.total == pytest.approx(rep.lp_part + rep.seminorm_part)


def test_constant_norm_has_no_gradient(sphere4):
    rep = w1p_norm(SphereMap.constant(sphere4, [0, 1, 0]), 1.5)
    assert rep.seminorm_part == 0.0
    assert rep.lp_part == pytest.approx((4 * np.pi) ** (1 / 1.5))
    assert rep.total**1.5 == pytest.approx(rep.lp_part**1.5 + rep.seminorm_part**1.5)


def test_norm_rejects_bad_exponent(sphere3):
    with pytest.raises(DomainError):
        w1p_norm(SphereMap.identity(sphere3), 2.0)


def test_region_norm_is_smaller(sphere4):
    f = SphereMap.identity(sphere4)
    region = geodesic_ball(sphere4, from_lat_lon(10, 20), 0.6)
    local = w1p_norm(f, 1.0, region)
    assert 0 < local.total < w1p_norm(f, 1.0).total
    assert local.region_id == region.label()


def test_support_restriction_matches_full_norm(sphere4, rng):
    diff = np.zeros((sphere4.n_vertices, 3))
    idx = rng.choice(sphere4.n_vertices, 40, replace=False)
    diff[idx] = rng.normal(size=(40, 3))
    full = w1p_norm(diff, 1.0, mesh=sphere4)
    region = geodesic_ball(sphere4, from_lat_lon(0, 0), 2.0)
    a = w1p_norm(diff, 1.0, region, mesh=sphere4)
    b = w1p_norm(diff, 1.0, region, mesh=sphere4, support=idx)
    assert full.total > 0
    assert a.total == pytest.approx(b.total, rel=1e-12)


def test_distance_is_symmetric_and_zero_on_diagonal(sphere4):
    f = SphereMap.identity(sphere4)
    g = standard_map(sphere4, "wrap:2")
    assert w1p_distance(f, f) == 0.0
    assert w1p_distance(f, g) == pytest.approx(w1p_distance(g, f))


def test_distance_requires_same_mesh(sphere3, sphere4):
    with pytest.raises(DomainError):
        w1p_distance(SphereMap.identity(sphere3), SphereMap.identity(sphere4))


def test_dirichlet_energy_of_constant_is_zero(ball16):
    u = BallMap(ball16, np.tile([0.0, 0.0, 1.0], (ball16.n_nodes, 1)))
    assert dirichlet_energy(u) == 0.0


def test_dirichlet_energy_of_linear_field():
    # a field with |grad u|^2 = 1 (up to normalization) integrates to the ball volume
    ball = build_ball_grid(24)
    eps = 1e-3
    v = normalize_rows(np.column_stack([eps * ball.nodes[:, 0], np.zeros(ball.n_nodes), np.ones(ball.n_nodes)]))
    e = dirichlet_energy(BallMap(ball, v)) / eps**2
    assert e == pytest.approx(4 * np.pi / 3, rel=0.02)


def test_boundary_values_need_matching_sphere(ball16, sphere3):
    with pytest.raises(DomainError):
        boundary_values(ball16, SphereMap.identity(sphere3))
    vals = boundary_values(ball16, SphereMap.identity(ball16.sphere))
    assert vals.shape == (ball16.n_boundary, 3)


def test_dirichlet_energy_rejects_raw_arrays(ball16):
    with warnings.catch_warnings():
        with pytest.raises(DomainError):
            dirichlet_energy(np.zeros((ball16.n_nodes, 3)))
