"""Randomized invariants of the geometric primitives."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hmaplab.geometry import build_icosphere, exp_chart, geodesic_ball, geodesic_distance, normalize_rows
from hmaplab.homotopy import phi_rescale

MESH = build_icosphere(3)

vec = arrays(np.float64, 3, elements=st.floats(-1, 1)).filter(lambda v: np.linalg.norm(v) > 0.1)
unit = vec.map(lambda v: v / np.linalg.norm(v))


@settings(max_examples=100, deadline=None)
@given(unit, unit, unit)
def test_triangle_inequality(a, b, c):
    d = lambda p, q: geodesic_distance(p[None, :], q[None, :])[0]
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-12


@settings(max_examples=100, deadline=None)
@given(unit, unit)
def test_distance_symmetric_and_bounded(a, b):
    ab = geodesic_distance(a[None, :], b[None, :])[0]
    assert ab == geodesic_distance(b[None, :], a[None, :])[0]
    assert 0.0 <= ab <= np.pi


@settings(max_examples=40, deadline=None)
@given(unit, st.floats(0.05, 1.5), st.floats(0.05, 1.5))
def test_geodesic_ball_monotone(x, r1, r2):
    small, big = sorted((r1, r2))
    a = geodesic_ball(MESH, x, small).mask
    b = geodesic_ball(MESH, x, big).mask
    assert not (a & ~b).any()


@settings(max_examples=50, deadline=None)
@given(unit, unit, st.floats(0.0, 1.0))
def test_great_circles_through_center_are_chart_lines(x, v, s):
    # geodesics from x map to rays in the exp chart
    v = v - (v @ x) * x
    if np.linalg.norm(v) < 1e-3:
        return
    v /= np.linalg.norm(v)
    ch = exp_chart(x)
    ts = np.array([0.2, 0.5, 1.0]) * (0.2 + 2.5 * s)
    pts = np.cos(ts)[:, None] * x + np.sin(ts)[:, None] * v
    y = ch.forward(pts)
    assert np.allclose(normalize_rows(y), normalize_rows(y[-1:]), atol=1e-9)
    assert np.allclose(np.linalg.norm(y, axis=1), ts, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.01, 0.78), st.floats(0.01, 1.0), unit)
def test_phi_rescale_fixes_far_points_and_is_monotone(t, r, frac, x):
    m = phi_rescale(t, r, frac * r, x)
    rho = np.linspace(0.0, 3.0 * r, 301)
    prof = m.profile(rho)
    assert (np.diff(prof) > 0).all()
    far = rho >= 2 * r
    assert np.array_equal(prof[far], rho[far])
    pts = MESH.vertices
    img, moved = m.apply(pts)
    outside = geodesic_distance(pts, x[None, :]) >= 2 * r
    assert np.array_equal(img[outside], pts[outside])
    assert not moved[outside].any()
