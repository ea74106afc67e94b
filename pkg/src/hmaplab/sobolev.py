"""Dirichlet energy on the ball, W^{1,p} norms on the sphere, and degree."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import DomainError, ResolutionError
from .geometry import BallMesh, TriangulatedSphere, VertexSet, geodesic_distance, normalize_rows, signed_solid_angle

logger = logging.getLogger(__name__)

UNIT_TOL = 1e-12
DEGREE_TOL = 0.1


def _check_unit_rows(values: np.ndarray, what: str) -> None:
    # |v|^2 - 1 is about twice |v| - 1 near the sphere
    dev = np.abs(np.einsum("ij,ij->i", values, values) - 1.0)
    if dev.size and dev.max() > 2.0 * UNIT_TOL:
        raise DomainError(f"{what} values must be unit vectors (max deviation {dev.max() / 2:.3e})")


@dataclass(frozen=True, eq=False)
class SphereMap:
    """A map S^2 -> S^2 given by one unit vector per mesh vertex."""

    mesh: TriangulatedSphere
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.n_vertices, 3):
            raise DomainError(f"expected values of shape ({self.mesh.n_vertices}, 3), got {v.shape}")
        _check_unit_rows(v, "SphereMap")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, mesh: TriangulatedSphere, func: Callable[[np.ndarray], np.ndarray]) -> "SphereMap":
        """Evaluate ``func`` on the vertices and renormalize."""
        return cls(mesh, normalize_rows(np.asarray(func(mesh.vertices), dtype=float)))

    @classmethod
    def identity(cls, mesh: TriangulatedSphere) -> "SphereMap":
        return cls(mesh, mesh.vertices)

    @classmethod
    def constant(cls, mesh: TriangulatedSphere, c) -> "SphereMap":
        c = np.asarray(c, dtype=float)
        c = c / np.linalg.norm(c)
        return cls(mesh, np.tile(c, (mesh.n_vertices, 1)))

    def with_values(self, values: np.ndarray) -> "SphereMap":
        return SphereMap(self.mesh, values)

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Values at arbitrary unit points by barycentric interpolation, renormalized."""
        points = np.atleast_2d(points)
        tri, w = self.mesh.locate(points)
        corners = self.values[self.mesh.triangles[tri]]
        out = np.einsum("ij,ijk->ik", w, corners)
        n = np.linalg.norm(out, axis=1)
        bad = n < 1e-8
        if bad.any():
            # corners nearly cancel: fall back to the heaviest corner
            out[bad] = corners[bad, np.argmax(w[bad], axis=1)]
            n[bad] = 1.0
        return out / n[:, None]

    def same_mesh(self, other: "SphereMap") -> bool:
        return self.mesh is other.mesh


@dataclass(frozen=True, eq=False)
class BallMap:
    """A unit-vector field on the nodes of a BallMesh."""

    mesh: BallMesh
    values: np.ndarray
    datum: SphereMap | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.n_nodes, 3):
            raise DomainError(f"expected values of shape ({self.mesh.n_nodes}, 3), got {v.shape}")
        _check_unit_rows(v, "BallMap")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def interior(self) -> np.ndarray:
        return self.values[: self.mesh.n_interior]

    @property
    def boundary(self) -> np.ndarray:
        return self.values[self.mesh.n_interior :]


@dataclass(frozen=True)
class NormReport:
    """Full W^{1,p} norm split into its two parts; ``total**p = lp**p + seminorm**p``."""

    p: float
    region_id: str
    lp_part: float
    seminorm_part: float
    total: float

    def csv_row(self) -> str:
        return f"{self.p!r},{self.region_id},{self.lp_part!r},{self.seminorm_part!r},{self.total!r}"


class DegreeResult(NamedTuple):
    degree: int
    raw: float


def boundary_values(mesh: BallMesh, datum: SphereMap) -> np.ndarray:
    """Trace of ``datum`` on the ball's boundary nodes."""
    if datum.mesh is not mesh.sphere:
        raise DomainError("datum lives on a different sphere mesh than the ball's trace sphere")
    return mesh.trace(datum.values)


def edge_energy(mesh: BallMesh, values: np.ndarray) -> float:
    i, j, w = mesh.edges
    d = values[i] - values[j]
    return float(np.sum(w * np.einsum("ij,ij->i", d, d)))


def dirichlet_energy(u: BallMap) -> float:
    """Discrete E(u) = sum over lattice edges of weight * |u_i - u_j|^2.

    Full edges have weight h, cut edges at the sphere weight h^2/s, so the sum
    is a first-order quadrature of the integral of |grad u|^2 over the ball.
    """
    if not isinstance(u, BallMap):
        raise DomainError("dirichlet_energy expects a BallMap")
    if u.values.shape[0] != u.mesh.n_nodes:
        raise DomainError("BallMap values do not match its mesh")
    return edge_energy(u.mesh, u.values)


def _field(f, mesh: TriangulatedSphere | None) -> tuple[TriangulatedSphere, np.ndarray]:
    if isinstance(f, SphereMap):
        return f.mesh, f.values
    if mesh is None:
        raise DomainError("a raw vector field needs an explicit mesh")
    f = np.asarray(f, dtype=float)
    if f.shape != (mesh.n_vertices, 3):
        raise DomainError(f"field shape {f.shape} does not match mesh with {mesh.n_vertices} vertices")
    return mesh, f


def _check_p(p: float) -> float:
    p = float(p)
    if not 1.0 <= p < 2.0:
        raise DomainError(f"p must lie in [1, 2), got {p!r}")
    return p


def _norm_parts(mesh: TriangulatedSphere, vals: np.ndarray, verts: np.ndarray, tris: np.ndarray, p: float):
    """L^p and gradient parts (to the power p) over the given vertex and triangle subsets."""
    mag = np.sqrt(np.einsum("ij,ij->i", vals[verts], vals[verts]))
    lp_p = float(np.sum(mesh.vertex_areas[verts] * mag**p))
    t = mesh.triangles[tris]
    fa = vals[t[:, 0]]
    d1 = vals[t[:, 1]] - fa
    d2 = vals[t[:, 2]] - fa
    inv = mesh.inverse_gram[tris]
    grad2 = (
        inv[:, 0] * np.einsum("ij,ij->i", d1, d1)
        + 2.0 * inv[:, 1] * np.einsum("ij,ij->i", d1, d2)
        + inv[:, 2] * np.einsum("ij,ij->i", d2, d2)
    )
    grad = np.sqrt(np.maximum(grad2, 0.0))
    semi_p = float(np.sum(mesh.areas[tris] * grad**p))
    return lp_p, semi_p


def support_triangles(mesh: TriangulatedSphere, verts: np.ndarray) -> np.ndarray:
    """Sorted ids of the triangles with at least one corner in ``verts``."""
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    mask[verts] = True
    return np.nonzero(mask[mesh.triangles].any(axis=1))[0]


def w1p_norm(
    f,
    p: float = 1.0,
    region: VertexSet | None = None,
    mesh: TriangulatedSphere | None = None,
    support: np.ndarray | None = None,
) -> NormReport:
    """Full W^{1,p} norm of a vector field on the sphere (or on ``region``).

    ``f`` is a SphereMap or an (n_vertices, 3) array such as a difference of
    two maps. The gradient is constant per triangle (computed in the flat facet)
    and weighted with the spherical triangle area; the L^p part is lumped to
    vertices. A region keeps its vertices and the triangles with all three
    corners inside. ``support`` may list the vertices outside of which ``f``
    is known to vanish; only those and their triangles are then visited.
    """
    p = _check_p(p)
    mesh, vals = _field(f, mesh)
    if region is not None and region.mesh is not mesh:
        raise DomainError("region belongs to a different mesh")
    if region is not None:
        verts = region.indices
        tris = region.triangle_ids
        if support is not None:
            keep = np.zeros(mesh.n_vertices, dtype=bool)
            keep[support] = True
            verts = verts[keep[verts]]
            tris = tris[keep[mesh.triangles[tris]].any(axis=1)]
    else:
        if support is None:
            support = np.nonzero(np.any(vals != 0.0, axis=1))[0]
        verts = np.asarray(support)
        tris = support_triangles(mesh, verts)
    lp_p, semi_p = _norm_parts(mesh, vals, verts, tris, p)
    region_id = "S2" if region is None else region.label()
    return NormReport(p, region_id, lp_p ** (1.0 / p), semi_p ** (1.0 / p), (lp_p + semi_p) ** (1.0 / p))


def w1p_distance(f: SphereMap, g: SphereMap, p: float = 1.0, region: VertexSet | None = None) -> float:
    """W^{1,p} norm of the extrinsic difference f - g."""
    if not f.same_mesh(g):
        raise DomainError("maps live on different meshes")
    return w1p_norm(f.values - g.values, p, region, mesh=f.mesh).total


def degree(f: SphereMap) -> DegreeResult:
    """Degree as the total signed area of the image triangles over 4*pi."""
    a, b, c = (f.values[f.mesh.triangles[:, k]] for k in range(3))
    spread = np.maximum.reduce([geodesic_distance(a, b), geodesic_distance(b, c), geodesic_distance(c, a)])
    if spread.max() > np.pi / 2:
        warnings.warn(
            f"{int((spread > np.pi / 2).sum())} image triangles span more than pi/2; the mesh may not resolve the map",
            stacklevel=2,
        )
    raw = float(np.sum(signed_solid_angle(a, b, c)) / (4.0 * np.pi))
    k = int(round(raw))
    if abs(raw - k) > DEGREE_TOL:
        raise ResolutionError(f"raw degree {raw:.4f} is not within {DEGREE_TOL} of an integer")
    return DegreeResult(k, raw)
