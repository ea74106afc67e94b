"""Controlled homotopies between sphere maps that agree outside a small ball.

The pieces are:

* ``CollapseMap`` (Psi): squeezes B_{r/2}(x) onto S^2 minus the antipode of x,
  sends the circle of radius r/2 to the antipode and is the identity outside
  B_r(x).
* ``RescaleMap`` (Phi_t): a radial chart map concentrating B_r(x) into B_tau(x)
  while fixing everything outside B_{2r}(x).
* Map families (``MapFamily`` subclasses), continuous in a parameter s in
  [0, 1]. ``ControlledHomotopy`` composes them into the three-phase path H.
* ``HomotopyPath``: a family plus sample times and optional norm reports.

Families are evaluated lazily so that fine meshes with many samples do not
need every sample in memory. Wherever a construction is the identity on a
vertex (outside the relevant ball, or at the parameter endpoints) the value is
copied, never recomputed, so the exactness properties hold bit for bit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateInputError, DomainError, PreconditionError, ResolutionError, TopologyError
from .geometry import (
    ChartMap,
    TriangulatedSphere,
    VertexSet,
    check_unit,
    exp_chart,
    geodesic_ball,
    geodesic_distance,
    normalize_rows,
)
from .sobolev import NormReport, SphereMap, degree, w1p_norm

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES = 60
DEFAULT_C_BOUND = 20.0
MIN_BALL_VERTICES = 200
NORTH = np.array([0.0, 0.0, 1.0])
SOUTH = np.array([0.0, 0.0, -1.0])


def smoothstep(s):
    """Quintic smoothstep, clipped to [0, 1]: C^2 with flat ends."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (s * (6.0 * s - 15.0) + 10.0)


def _check_radius(r: float, upper: float = np.pi / 4) -> float:
    r = float(r)
    if not 0.0 < r < upper:
        raise DomainError(f"radius must lie in (0, {upper:.6g}), got {r!r}")
    return r


# --- rotations and stereographic charts ---------------------------------------


def rotate_towards(a: np.ndarray, b: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Apply, row by row, the minimal rotation taking unit ``a`` to unit ``b`` to ``v``.

    Rows of ``a`` and ``b`` must not be antipodal.
    """
    a, b, v = np.broadcast_arrays(np.atleast_2d(a), np.atleast_2d(b), np.atleast_2d(v))
    k = np.cross(a, b)
    c = np.einsum("ij,ij->i", a, b)
    kv = np.cross(k, v)
    return v + kv + np.cross(k, kv) / (1.0 + c)[:, None]


def rotation_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal rotation taking unit ``a`` to unit ``b``; a half turn when they are antipodal."""
    c = float(a @ b)
    if c < -1.0 + 1e-12:
        axis = np.zeros(3)
        axis[int(np.argmin(np.abs(a)))] = 1.0
        axis -= (axis @ a) * a
        axis /= np.linalg.norm(axis)
        return 2.0 * np.outer(axis, axis) - np.eye(3)
    k = np.cross(a, b)
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + kx + kx @ kx / (1.0 + c)


def _rotation_to_north(q: np.ndarray) -> np.ndarray:
    return rotation_matrix(q, NORTH)


@dataclass(frozen=True)
class Stereographic:
    """Stereographic coordinate from the pole ``q``: q goes to infinity."""

    pole: np.ndarray

    @cached_property
    def _rot(self) -> np.ndarray:
        return _rotation_to_north(self.pole)

    def forward(self, p: np.ndarray) -> np.ndarray:
        pr = np.atleast_2d(p) @ self._rot.T
        with np.errstate(divide="ignore", invalid="ignore"):
            w = (pr[:, 0] + 1j * pr[:, 1]) / (1.0 - pr[:, 2])
        w[pr[:, 2] >= 1.0] = np.inf
        return w

    def inverse(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=complex)
        inf = ~np.isfinite(w)
        w = np.where(inf, 0.0, w)
        m2 = (w * np.conj(w)).real
        out = np.stack([2.0 * w.real, 2.0 * w.imag, m2 - 1.0], axis=1) / (m2 + 1.0)[:, None]
        out[inf] = NORTH
        return out @ self._rot


def south_stereo_inverse(w: np.ndarray) -> np.ndarray:
    """Inverse stereographic projection with 0 -> south pole, infinity -> north pole."""
    w = np.asarray(w, dtype=complex)
    inf = ~np.isfinite(w)
    w = np.where(inf, 0.0, w)
    m2 = (w * np.conj(w)).real
    out = np.stack([2.0 * w.real, 2.0 * w.imag, m2 - 1.0], axis=1) / (m2 + 1.0)[:, None]
    out[inf] = NORTH
    return out


# --- point maps ---------------------------------------------------------------


class _RadialChartMap:
    """Shared machinery for maps acting radially in the exp chart at ``center``."""

    center: np.ndarray
    chart: ChartMap
    outer: float  # identity at and beyond this geodesic radius

    def _profile(self, rho: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def is_identity(self) -> bool:
        return False

    def apply(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Images of ``points`` and a mask of the points actually moved."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = points.copy()
        rho = geodesic_distance(points, self.center[None, :])
        moved = rho < self.outer
        if self.is_identity() or not moved.any():
            return out, np.zeros(len(points), dtype=bool)
        y = self.chart.forward(points[moved])
        rr = rho[moved]
        new = self._profile(rr)
        scale = np.divide(new, rr, out=np.zeros_like(rr), where=rr > 0)
        img = self.chart.inverse(y * scale[:, None])
        zero = rr == 0
        if zero.any():
            # the center is fixed by every radial profile used here
            img[zero] = self.center
        out[moved] = img
        return out, moved


@dataclass(frozen=True, eq=False)
class CollapseMap(_RadialChartMap):
    """The map Psi of radius ``r`` at ``center`` and its homotopy Psi_s to the identity.

    Radial profile d(rho): 2*pi*rho/r on [0, r/2] (so the circle of radius r/2
    lands on the antipode), then r + (pi - r)*smoothstep((r - rho)/(r/2)) on
    [r/2, r], and rho beyond. Psi_s uses (1 - s)*rho + s*d(rho).
    """

    center: np.ndarray
    radius: float
    s: float = 1.0

    @cached_property
    def chart(self) -> ChartMap:
        return exp_chart(self.center)

    @property
    def outer(self) -> float:
        return self.radius

    @property
    def antipode(self) -> np.ndarray:
        return -self.center

    def is_identity(self) -> bool:
        return self.s == 0.0

    def full_profile(self, rho: np.ndarray) -> np.ndarray:
        r = self.radius
        rho = np.asarray(rho, dtype=float)
        inner = 2.0 * np.pi * rho / r
        ann = r + (np.pi - r) * smoothstep((r - rho) / (0.5 * r))
        return np.where(rho <= 0.5 * r, inner, np.where(rho < r, ann, rho))

    def _profile(self, rho):
        if self.s == 1.0:
            return self.full_profile(rho)
        return (1.0 - self.s) * rho + self.s * self.full_profile(rho)

    def at(self, s: float) -> "CollapseMap":
        return CollapseMap(self.center, self.radius, float(s))


def collapse_map(r: float, x, mesh: TriangulatedSphere | None = None) -> CollapseMap:
    """Collapse map of radius r at x (``mesh`` is accepted for symmetry with other builders)."""
    return CollapseMap(check_unit(x), _check_radius(r))


@dataclass(frozen=True, eq=False)
class RescaleMap(_RadialChartMap):
    """Phi_t: in the exp chart, y -> r*y/rho0 for |y| <= rho0 and a linear
    stretch of [rho0, 2r] onto [r, 2r] beyond, with rho0 = (1 - t)*r + t*tau.
    The identity outside B_{2r}.
    """

    t: float
    r: float
    tau: float
    center: np.ndarray

    @cached_property
    def chart(self) -> ChartMap:
        return exp_chart(self.center)

    @property
    def outer(self) -> float:
        return 2.0 * self.r

    @property
    def rho0(self) -> float:
        return (1.0 - self.t) * self.r + self.t * self.tau

    def is_identity(self) -> bool:
        # rho0 == r makes both branches the identity
        return self.t == 0.0 or self.rho0 == self.r

    def inner_branch(self, rho):
        return self.r * np.asarray(rho, dtype=float) / self.rho0

    def outer_branch(self, rho):
        # equal to r/(2r - rho0)*(rho - rho0) + r, written so that rho = 2r gives 2r exactly
        r2 = 2.0 * self.r
        return r2 - self.r * (r2 - np.asarray(rho, dtype=float)) / (r2 - self.rho0)

    def _profile(self, rho):
        rho = np.asarray(rho, dtype=float)
        return np.where(rho <= self.rho0, self.inner_branch(rho), self.outer_branch(rho))

    def profile(self, rho):
        """Radial profile on [0, inf), the identity beyond 2r."""
        rho = np.asarray(rho, dtype=float)
        if self.is_identity():
            return rho.copy()
        return np.where(rho >= 2.0 * self.r, rho, self._profile(rho))

    def chart_image(self, y: np.ndarray) -> np.ndarray:
        """Phi_t written in chart coordinates."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        rho = np.linalg.norm(y, axis=1)
        new = self.profile(rho)
        scale = np.divide(new, rho, out=np.ones_like(rho), where=rho > 0)
        out = y * scale[:, None]
        keep = (rho >= 2.0 * self.r) | self.is_identity()
        out[keep] = y[keep]
        return out


def phi_rescale(t: float, r: float, tau: float, x, mesh: TriangulatedSphere | None = None) -> RescaleMap:
    t, tau = float(t), float(tau)
    r = _check_radius(r)
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t!r}")
    if not 0.0 < tau <= r:
        raise DomainError(f"tau must lie in (0, r], got tau={tau!r}, r={r!r}")
    return RescaleMap(t, r, tau, check_unit(x))


# --- map families -------------------------------------------------------------


def _map_eval(f: SphereMap, points: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Values of ``f`` at points; rows with ``idx >= 0`` are those vertices exactly."""
    out = np.empty((len(points), 3))
    exact = idx >= 0
    out[exact] = f.values[idx[exact]]
    if (~exact).any():
        out[~exact] = f.sample(points[~exact])
    return out


def _compose(point_map: _RadialChartMap, points: np.ndarray, idx: np.ndarray):
    """Push ``points`` through ``point_map``; moved points lose their vertex identity."""
    img, moved = point_map.apply(points)
    idx = np.where(moved, -1, idx)
    return img, idx


class MapFamily:
    """A continuous family s -> F_s of sphere maps on one mesh.

    Subclasses implement ``evaluate(s, points, idx)`` for arbitrary unit points
    (``idx`` holds the vertex index of a point or -1) and set ``support``: the
    vertex indices outside of which every F_s equals ``start``.
    """

    start: SphereMap
    end: SphereMap

    @property
    def mesh(self) -> TriangulatedSphere:
        return self.start.mesh

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.mesh.n_vertices)

    def evaluate(self, s: float, points: np.ndarray, idx: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def at(self, s: float) -> SphereMap:
        s = float(s)
        if s == 0.0:
            return self.start
        if s == 1.0:
            return self.end
        vals = self.start.values.copy()
        sup = self.support
        vals[sup] = self.evaluate(s, self.mesh.vertices[sup], sup)
        return SphereMap(self.mesh, vals)


class FunctionHomotopy(MapFamily):
    """Family given by a callable ``func(s, points) -> unit vectors``."""

    def __init__(self, mesh: TriangulatedSphere, func: Callable[[float, np.ndarray], np.ndarray]):
        self.func = func
        self.start = SphereMap(mesh, normalize_rows(func(0.0, mesh.vertices)))
        self.end = SphereMap(mesh, normalize_rows(func(1.0, mesh.vertices)))

    def evaluate(self, s, points, idx):
        if s == 0.0:
            return _map_eval(self.start, points, idx)
        if s == 1.0:
            return _map_eval(self.end, points, idx)
        return normalize_rows(self.func(s, points))


def _slerp(a: np.ndarray, b: np.ndarray, s: float) -> np.ndarray:
    c = np.clip(np.einsum("ij,ij->i", a, b), -1.0, 1.0)
    perp = b - c[:, None] * a
    n = np.linalg.norm(perp, axis=1)
    theta = np.arccos(c)
    out = a.copy()
    ok = n > 1e-15
    out[ok] = np.cos(s * theta[ok])[:, None] * a[ok] + np.sin(s * theta[ok])[:, None] * perp[ok] / n[ok, None]
    return normalize_rows(out)


class GeodesicHomotopy(MapFamily):
    """Pointwise constant-speed great-circle interpolation from ``start`` to ``end``."""

    def __init__(self, start: SphereMap, end: SphereMap):
        if not start.same_mesh(end):
            raise DomainError("maps live on different meshes")
        c = np.einsum("ij,ij->i", start.values, end.values)
        if c.min() <= -1.0 + 1e-9:
            raise PreconditionError("endpoints are antipodal somewhere; supply a homotopy explicitly")
        self.start, self.end = start, end
        self._support = np.nonzero(np.any(start.values != end.values, axis=1))[0]

    @property
    def support(self):
        return self._support

    def evaluate(self, s, points, idx):
        a = _map_eval(self.start, points, idx)
        if s == 0.0:
            return a
        b = _map_eval(self.end, points, idx)
        if s == 1.0:
            return b
        return _slerp(a, b, s)


class SampledHomotopy(MapFamily):
    """Family through given maps at equally spaced parameters, geodesic in between."""

    def __init__(self, maps: Sequence[SphereMap]):
        if len(maps) < 2:
            raise DomainError("need at least two maps")
        self.maps = list(maps)
        self.start, self.end = self.maps[0], self.maps[-1]
        diff = np.zeros(self.mesh.n_vertices, dtype=bool)
        for m in self.maps[1:]:
            if not m.same_mesh(self.start):
                raise DomainError("maps live on different meshes")
            diff |= np.any(m.values != self.start.values, axis=1)
        self._support = np.nonzero(diff)[0]

    @property
    def support(self):
        return self._support

    def evaluate(self, s, points, idx):
        n = len(self.maps) - 1
        j = min(int(np.floor(s * n)), n - 1)
        local = s * n - j
        a = _map_eval(self.maps[j], points, idx)
        if local == 0.0:
            return a
        b = _map_eval(self.maps[j + 1], points, idx)
        return _slerp(a, b, local)


class DipoleHomotopy(MapFamily):
    """Grows a +1/-1 bubble pair inside B_r(x) on top of ``start``.

    In the exp chart at x (complex coordinate z) the bubble is the
    stereographic value

        w = chi(|z|) * lam2 / ((z - a) * conj(z - b)),   a = -b = (r/4) e1,

    with lam2 = r*strength * |a - b| so that each pole has chart scale
    r*strength. chi is 1 on |z| <= r/2 and decays to 0 at |z| = r by a
    smoothstep. The value is sigma^{-1}(w) (0 -> south pole) rotated so that
    w = 0 gives back the original map. For s in [0, 1/2] a single concentric
    bubble grows (w = chi*(1-sigma)*lam2/(|z|^2 + sigma*lam2), sigma = 1 - 2s);
    for s in [1/2, 1] its two poles separate to +-a.
    """

    def __init__(self, start: SphereMap, x, r: float, strength: float, min_vertices: int = MIN_BALL_VERTICES):
        self.start = start
        self.x = check_unit(x)
        self.r = _check_radius(r)
        self.strength = float(strength)
        if self.strength < 0:
            raise DomainError("strength must be non-negative")
        ball = geodesic_ball(start.mesh, self.x, self.r)
        if len(ball) < min_vertices:
            raise ResolutionError(
                f"B_r(x) holds {len(ball)} vertices, fewer than the {min_vertices} needed to resolve a dipole"
            )
        self.ball = ball
        self.chart = exp_chart(self.x)
        self.center_value = start.sample(self.x[None, :])[0]
        self._frame = rotation_matrix(SOUTH, self.center_value)
        self.lam2 = self.r * self.strength * (0.5 * self.r)
        self.end = self.at_formula(1.0)

    @property
    def support(self):
        return self.ball.indices

    def _w(self, s: float, z: np.ndarray) -> np.ndarray:
        r = self.r
        rho = np.abs(z)
        chi = 1.0 - smoothstep((rho - 0.5 * r) / (0.5 * r))
        a = 0.25 * r
        with np.errstate(divide="ignore", invalid="ignore"):
            if s <= 0.5:
                sigma = 1.0 - 2.0 * s
                w = chi * (1.0 - sigma) * self.lam2 / (rho * rho + sigma * self.lam2)
                w = w.astype(complex)
            else:
                sep = (2.0 * s - 1.0) * a
                w = chi * self.lam2 / ((z - sep) * np.conj(z + sep))
        w = np.where(rho >= r, 0.0, w)
        return w

    def _values(self, s: float, points: np.ndarray, base: np.ndarray) -> np.ndarray:
        out = base.copy()
        if self.strength == 0.0 or s == 0.0:
            return out
        rho = geodesic_distance(points, self.x[None, :])
        inside = rho < self.r
        if not inside.any():
            return out
        y = self.chart.forward(points[inside])
        w = self._w(s, y[:, 0] + 1j * y[:, 1])
        bubble = south_stereo_inverse(w)
        c = self.center_value
        if np.min(base[inside] @ c) < -0.9:
            raise DomainError("the map turns by more than ~150 degrees inside B_r(x); the dipole blend is undefined")
        val = bubble @ self._frame.T
        val = rotate_towards(c[None, :], base[inside], val)
        out[inside] = normalize_rows(val)
        return out

    def at_formula(self, s: float) -> SphereMap:
        vals = self.start.values.copy()
        sup = self.support
        vals[sup] = self._values(s, self.start.mesh.vertices[sup], self.start.values[sup])
        return SphereMap(self.start.mesh, vals)

    def evaluate(self, s, points, idx):
        base = _map_eval(self.start, points, idx)
        if s == 1.0 and (idx >= 0).all():
            return self.end.values[idx]
        return self._values(s, points, base)


def bubble_insert(phi: SphereMap, x, r: float, strength: float) -> SphereMap:
    """phi with a degree-neutral dipole inserted in B_r(x) (equal to phi outside)."""
    return DipoleHomotopy(phi, x, r, strength).end


def _far_pole(points: np.ndarray) -> np.ndarray:
    """A candidate direction maximizing the minimum distance to ``points``."""
    g = (1.0 + np.sqrt(5.0)) / 2.0
    cands = [np.array(v, dtype=float) for v in [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]]
    for a in (-1, 1):
        for b in (-1, 1):
            cands += [np.array([0, a, b * g]), np.array([a, b * g, 0]), np.array([b * g, 0, a])]
    cands = normalize_rows(np.array(cands, dtype=float))
    score = (cands @ points.T).max(axis=1)
    return cands[int(np.argmin(score))]


class StationaryHomotopy(MapFamily):
    """A homotopy with the endpoints of ``inner`` that is stationary outside B_r(x).

    Three stages of equal length: start -> start∘Psi (via Psi_s), then the
    inner homotopy pulled back by Psi on B_{r/2} and patched on the annulus,
    then end∘Psi -> end. On the annulus the patch translates start∘Psi in a
    stereographic chart by lambda(rho)*(sigma(gamma(s)) - sigma(P)), where
    gamma(s) is the inner homotopy at the antipode, P its fixed start value,
    and lambda falls from 1 at rho = r/2 to 0 at rho = 3r/4. This matches the
    inner ball on the circle rho = r/2 and start∘Psi near rho = r.
    """

    def __init__(self, inner: MapFamily, r: float, x, probe_samples: int = 64):
        self.inner = inner
        self.r = _check_radius(r)
        self.x = check_unit(x)
        self.start, self.end = inner.start, inner.end
        self.collapse = CollapseMap(self.x, self.r)
        self.ball = geodesic_ball(self.mesh, self.x, self.r)
        anti = -self.x[None, :]
        no_idx = np.array([-1])
        self.anchor = inner.evaluate(0.0, anti, no_idx)[0]
        ss = np.linspace(0.0, 1.0, probe_samples + 1)
        gam = np.array([inner.evaluate(s, anti, no_idx)[0] for s in ss])
        self.stereo = Stereographic(_far_pole(np.vstack([gam, self.anchor])))
        self._anchor_w = self.stereo.forward(self.anchor[None, :])[0]

    @property
    def support(self):
        return self.ball.indices

    def _gamma(self, s):
        return self.inner.evaluate(s, -self.x[None, :], np.array([-1]))[0]

    def evaluate(self, s, points, idx):
        if s <= 1.0 / 3.0:
            psi_s = self.collapse.at(3.0 * s)
            img, j = _compose(psi_s, points, idx)
            return _map_eval(self.start, img, j)
        if s >= 2.0 / 3.0:
            psi_s = self.collapse.at(1.0 - 3.0 * (s - 2.0 / 3.0))
            img, j = _compose(psi_s, points, idx)
            return _map_eval(self.end, img, j)
        sm = 3.0 * (s - 1.0 / 3.0)
        img, j = _compose(self.collapse, points, idx)
        out = _map_eval(self.start, img, j)
        rho = geodesic_distance(points, self.x[None, :])
        r = self.r
        inner = rho <= 0.5 * r
        if inner.any():
            out[inner] = self.inner.evaluate(sm, img[inner], j[inner])
        shift = self.stereo.forward(self._gamma(sm)[None, :])[0] - self._anchor_w
        ann = (rho > 0.5 * r) & (rho < 0.75 * r)
        if ann.any() and shift != 0:
            lam = 1.0 - smoothstep((rho[ann] - 0.5 * r) / (0.25 * r))
            w = self.stereo.forward(out[ann])
            moved = self.stereo.inverse(w + lam * shift)
            out[ann] = normalize_rows(moved)
        return out


class ControlledHomotopy(MapFamily):
    """The three-phase path: phi∘Phi_{3t}, then G_{3(t-1/3)}∘Phi_1, then psi∘Phi_{1-3(t-2/3)}."""

    def __init__(self, phi: SphereMap, psi: SphereMap, inner: MapFamily, r: float, x, tau: float):
        self.start, self.end = phi, psi
        self.inner = inner
        self.r, self.x, self.tau = float(r), check_unit(x), float(tau)
        self.ball2 = geodesic_ball(phi.mesh, self.x, 2.0 * self.r)

    @property
    def support(self):
        return self.ball2.indices

    def rescale(self, t: float) -> RescaleMap:
        return phi_rescale(t, self.r, self.tau, self.x)

    def evaluate(self, t, points, idx):
        if t <= 1.0 / 3.0:
            img, j = _compose(self.rescale(3.0 * t), points, idx)
            return _map_eval(self.start, img, j)
        if t >= 2.0 / 3.0:
            img, j = _compose(self.rescale(max(0.0, 1.0 - 3.0 * (t - 2.0 / 3.0))), points, idx)
            return _map_eval(self.end, img, j)
        img, j = _compose(self.rescale(1.0), points, idx)
        return self.inner.evaluate(3.0 * (t - 1.0 / 3.0), img, j)


# --- paths --------------------------------------------------------------------


@dataclass(eq=False)
class HomotopyPath:
    """Samples of a map family at ``times`` (k = 0..K), with construction metadata.

    ``norms[k]`` and ``local_norms[k]`` (when computed) report phi - H_{t_k}
    on the whole sphere and on B_{2r}(x).
    """

    family: MapFamily
    times: np.ndarray
    r: float | None = None
    x: np.ndarray | None = None
    tau: float | None = None
    p: float | None = None
    norms: list[NormReport] | None = None
    local_norms: list[NormReport] | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def uniform(cls, family: MapFamily, K: int = DEFAULT_SAMPLES, **kw) -> "HomotopyPath":
        if K < 1:
            raise DomainError("K must be at least 1")
        return cls(family, np.linspace(0.0, 1.0, K + 1), **kw)

    @property
    def K(self) -> int:
        return len(self.times) - 1

    @property
    def phi(self) -> SphereMap:
        return self.family.start

    @property
    def psi(self) -> SphereMap:
        return self.family.end

    @property
    def mesh(self) -> TriangulatedSphere:
        return self.family.mesh

    def sample(self, k: int) -> SphereMap:
        return self.family.at(self.times[k])

    def at(self, t: float) -> SphereMap:
        return self.family.at(t)

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self):
        for k in range(len(self.times)):
            yield self.times[k], self.sample(k)

    def compute_norms(self, p: float, region: VertexSet | None = None) -> None:
        """Attach W^{1,p} reports of phi - H_{t_k}, globally and on ``region``."""
        phi = self.phi.values
        sup = np.asarray(self.family.support)
        glob, loc = [], []
        for _, h in self:
            diff = phi - h.values
            glob.append(w1p_norm(diff, p, mesh=self.mesh, support=sup))
            if region is not None:
                loc.append(w1p_norm(diff, p, region, mesh=self.mesh, support=sup))
        self.p = p
        self.norms = glob
        self.local_norms = loc if region is not None else None


def _outside_equal(a: np.ndarray, b: np.ndarray, mask: np.ndarray, tol: float = 0.0) -> bool:
    d = np.abs(a[~mask] - b[~mask])
    return bool(d.size == 0 or d.max() <= tol)


def is_stationary(G: HomotopyPath, ball: VertexSet) -> bool:
    """Whether every sample of G equals phi outside ``ball``.

    Families copy ``start`` outside their declared support, so a support
    inside the ball settles the question without evaluating samples.
    """
    if np.all(ball.mask[np.asarray(G.family.support, dtype=np.int64)]):
        return True
    phi = G.phi.values
    return all(_outside_equal(h.values, phi, ball.mask) for _, h in G)


def stationary_homotopy(G: HomotopyPath, r: float, x) -> HomotopyPath:
    """A homotopy with G's endpoints that equals phi outside B_r(x) at every sample.

    Returned unchanged when G already has that property.
    """
    x = check_unit(x)
    r = _check_radius(r)
    ball = geodesic_ball(G.mesh, x, r)
    if not _outside_equal(G.phi.values, G.psi.values, ball.mask, 1e-12):
        raise PreconditionError("endpoints differ outside B_r(x)")
    if is_stationary(G, ball):
        return G
    fam = StationaryHomotopy(G.family, r, x)
    K = 3 * max(1, int(np.ceil(G.K / 3)))
    return HomotopyPath.uniform(fam, K, r=r, x=x)


def tau_rule(norm_phi: float, norm_psi: float, c1: float, r: float, p: float) -> float:
    """tau = min(r, ((|phi| + |psi|) / C1)^(p/(2-p)))."""
    if c1 <= 0.0:
        raise DegenerateInputError("C1 = sup_s |G_s| on B_2r vanishes")
    tau = ((norm_phi + norm_psi) / c1) ** (p / (2.0 - p))
    return float(min(r, tau))


def _local_norms(G: HomotopyPath, p: float, region: VertexSet) -> list[float]:
    return [w1p_norm(h, p, region).total for _, h in G]


def choose_tau(phi: SphereMap, psi: SphereMap, G: HomotopyPath, r: float, x, p: float) -> float:
    region = geodesic_ball(phi.mesh, check_unit(x), 2.0 * _check_radius(r))
    n_phi = w1p_norm(phi, p, region).total
    n_psi = w1p_norm(psi, p, region).total
    c1 = max(_local_norms(G, p, region))
    tau = tau_rule(n_phi, n_psi, c1, r, p)
    logger.debug("tau rule: |phi|=%.6g |psi|=%.6g C1=%.6g -> tau=%.6g (r=%.6g)", n_phi, n_psi, c1, tau, r)
    return tau


def build_homotopy(
    phi: SphereMap,
    psi: SphereMap,
    G: HomotopyPath | None,
    r: float,
    x,
    p: float = 1.0,
    K: int = DEFAULT_SAMPLES,
    tau: float | None = None,
    compute_norms: bool = True,
) -> HomotopyPath:
    """The controlled homotopy H from phi to psi (phi = psi outside B_r(x)).

    ``G`` defaults to the geodesic homotopy between the endpoints. It is made
    stationary outside B_r(x) first when needed.
    """
    x = check_unit(x)
    r = _check_radius(r)
    if not phi.same_mesh(psi):
        raise DomainError("phi and psi live on different meshes")
    ball = geodesic_ball(phi.mesh, x, r)
    if not _outside_equal(phi.values, psi.values, ball.mask, 1e-12):
        raise PreconditionError("phi and psi differ outside B_r(x)")
    d_phi, d_psi = degree(phi).degree, degree(psi).degree
    if d_phi != d_psi:
        raise TopologyError(f"deg phi = {d_phi} but deg psi = {d_psi}")
    if G is None:
        G = HomotopyPath.uniform(GeodesicHomotopy(phi, psi), K)
    if G.phi is not phi and not np.array_equal(G.phi.values, phi.values):
        raise PreconditionError("G does not start at phi")
    if G.psi is not psi and not np.array_equal(G.psi.values, psi.values):
        raise PreconditionError("G does not end at psi")
    G = stationary_homotopy(G, r, x)
    if tau is None:
        tau = choose_tau(phi, psi, G, r, x, p)
    fam = ControlledHomotopy(phi, psi, G.family, r, x, tau)
    H = HomotopyPath.uniform(fam, K, r=r, x=x, tau=tau, p=p)
    if compute_norms:
        H.compute_norms(p, fam.ball2)
    return H


@dataclass(frozen=True)
class EstimateReport:
    sup_norm: float
    local_norms: np.ndarray
    norm_phi_2r: float
    norm_psi_2r: float
    observed_C: float
    bound: float

    @property
    def violated(self) -> bool:
        return self.observed_C > self.bound


def verify_estimate(H: HomotopyPath, bound: float = DEFAULT_C_BOUND) -> EstimateReport:
    """Observed C = sup_k |phi - H_k| / (|phi|_{B_2r} + |psi|_{B_2r}); report only."""
    if H.norms is None or H.p is None or H.r is None:
        raise DomainError("homotopy carries no norm reports; build it with compute_norms=True")
    region = geodesic_ball(H.mesh, H.x, 2.0 * H.r)
    n_phi = w1p_norm(H.phi, H.p, region).total
    n_psi = w1p_norm(H.psi, H.p, region).total
    sup = max(n.total for n in H.norms)
    local = np.array([n.total for n in H.local_norms]) if H.local_norms is not None else np.array([])
    denom = n_phi + n_psi
    c = sup / denom if denom > 0 else np.inf
    if c > bound:
        logger.warning("observed C = %.4g exceeds the bound %.4g", c, bound)
    return EstimateReport(sup, local, n_phi, n_psi, float(c), float(bound))
