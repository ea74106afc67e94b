"""Discretizations of the sphere S^2 and the ball B^3.

The sphere is an icosphere (subdivided icosahedron) so that no point of S^2 is
privileged; the ball is a Cartesian lattice clipped to |x| < 1 whose boundary
nodes are the points where lattice edges leave the ball.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .errors import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

MAX_LEVEL = 8
UNIT_TOL = 1e-12

# lattice directions in neighbor-slot order: (axis, sign)
DIRECTIONS = ((0, -1), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def normalize_rows(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def geodesic_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Great-circle distance between unit vectors (atan2 form, accurate near 0 and pi)."""
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    return np.arctan2(cross, np.sum(a * b, axis=-1))


def signed_solid_angle(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Signed area of the geodesic triangle (a, b, c) on S^2.

    Van Oosterom-Strackee formula; positive for counter-clockwise triangles seen
    from outside. Rows must be unit vectors.
    """
    num = np.einsum("ij,ij->i", a, np.cross(b, c))
    den = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum("ij,ij->i", c, a)
    return 2.0 * np.arctan2(num, den)


def _icosahedron() -> tuple[np.ndarray, np.ndarray]:
    g = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, g, 0], [1, g, 0], [-1, -g, 0], [1, -g, 0],
            [0, -1, g], [0, 1, g], [0, -1, -g], [0, 1, -g],
            [g, 0, -1], [g, 0, 1], [-g, 0, -1], [-g, 0, 1],
        ],
        dtype=float,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    verts = normalize_rows(verts)
    det = np.einsum("ij,ij->i", verts[faces[:, 0]], np.cross(verts[faces[:, 1]], verts[faces[:, 2]]))
    flip = det < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return verts, faces


def _subdivide(verts: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    pairs = np.concatenate([np.stack([a, b], 1), np.stack([b, c], 1), np.stack([c, a], 1)])
    pairs.sort(axis=1)
    uniq, inv = np.unique(pairs, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    mids = normalize_rows(verts[uniq[:, 0]] + verts[uniq[:, 1]])
    base = len(verts)
    nf = len(faces)
    ab = base + inv[:nf]
    bc = base + inv[nf : 2 * nf]
    ca = base + inv[2 * nf :]
    new_faces = np.concatenate(
        [
            np.stack([a, ab, ca], 1),
            np.stack([ab, b, bc], 1),
            np.stack([ca, bc, c], 1),
            np.stack([ab, bc, ca], 1),
        ]
    )
    return np.concatenate([verts, mids]), new_faces


@dataclass(frozen=True, eq=False)
class TriangulatedSphere:
    """Geodesic triangulation of S^2.

    ``areas`` are the exact spherical areas of the geodesic triangles (they sum
    to 4*pi up to rounding); ``flat_areas`` are the areas of the planar facets.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    level: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(np.asarray(self.vertices, dtype=float)))
        object.__setattr__(self, "triangles", _frozen(np.asarray(self.triangles, dtype=np.int64)))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        t = self.triangles
        return self.vertices[t[:, 0]], self.vertices[t[:, 1]], self.vertices[t[:, 2]]

    @cached_property
    def areas(self) -> np.ndarray:
        return _frozen(signed_solid_angle(*self.corners()))

    @cached_property
    def flat_areas(self) -> np.ndarray:
        a, b, c = self.corners()
        return _frozen(0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1))

    @cached_property
    def vertex_areas(self) -> np.ndarray:
        """Lumped (one third of incident spherical triangle areas) vertex areas."""
        va = np.zeros(self.n_vertices)
        for k in range(3):
            np.add.at(va, self.triangles[:, k], self.areas / 3.0)
        return _frozen(va)

    @cached_property
    def inverse_gram(self) -> np.ndarray:
        """Per-triangle inverse of the Gram matrix of the edge vectors (b-a, c-a).

        For a piecewise-linear field F, the squared gradient on a triangle is
        ``sum_c d_c^T G^{-1} d_c`` with ``d_c = (F_b - F_a, F_c - F_a)[c]``.
        """
        a, b, c = self.corners()
        e1, e2 = b - a, c - a
        g11 = np.einsum("ij,ij->i", e1, e1)
        g12 = np.einsum("ij,ij->i", e1, e2)
        g22 = np.einsum("ij,ij->i", e2, e2)
        det = g11 * g22 - g12 * g12
        inv = np.stack([g22, -g12, g11], axis=1) / det[:, None]
        return _frozen(inv)

    @cached_property
    def edges(self) -> np.ndarray:
        t = self.triangles
        pairs = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        pairs.sort(axis=1)
        return _frozen(np.unique(pairs, axis=0))

    @cached_property
    def mesh_size(self) -> float:
        """Longest edge, measured as a geodesic length."""
        e = self.edges
        return float(geodesic_distance(self.vertices[e[:, 0]], self.vertices[e[:, 1]]).max())

    @cached_property
    def _tree(self) -> cKDTree:
        return cKDTree(self.vertices)

    @cached_property
    def _incidence(self) -> np.ndarray:
        """(n_vertices, max_valence) incident triangle ids, padded with -1."""
        flat = self.triangles.reshape(-1)
        tri_ids = np.repeat(np.arange(self.n_triangles), 3)
        order = np.argsort(flat, kind="stable")
        flat, tri_ids = flat[order], tri_ids[order]
        counts = np.bincount(flat, minlength=self.n_vertices)
        width = int(counts.max())
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        slot = np.arange(len(flat)) - np.repeat(starts, counts)
        inc = -np.ones((self.n_vertices, width), dtype=np.int64)
        inc[flat, slot] = tri_ids
        return inc

    def _try_triangles(self, points, cand):
        """For each point, first candidate triangle containing it (or -1) plus weights."""
        n = len(points)
        found = -np.ones(n, dtype=np.int64)
        weights = np.zeros((n, 3))
        for col in range(cand.shape[1]):
            pending = (found < 0) & (cand[:, col] >= 0)
            if not pending.any():
                continue
            idx = np.nonzero(pending)[0]
            tri = self.triangles[cand[idx, col]]
            p = points[idx]
            a, b, c = self.vertices[tri[:, 0]], self.vertices[tri[:, 1]], self.vertices[tri[:, 2]]
            w0 = np.einsum("ij,ij->i", p, np.cross(b, c))
            w1 = np.einsum("ij,ij->i", p, np.cross(c, a))
            w2 = np.einsum("ij,ij->i", p, np.cross(a, b))
            w = np.stack([w0, w1, w2], 1)
            ok = (w >= -1e-14).all(axis=1) & (w.sum(axis=1) > 0)
            hit = idx[ok]
            found[hit] = cand[hit, col]
            weights[hit] = w[ok] / w[ok].sum(axis=1, keepdims=True)
        return found, weights

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Containing triangle and barycentric weights of each (unit) point.

        Weights come from the central projection onto the flat facet. Points the
        search cannot place fall back to their nearest vertex.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        _, near = self._tree.query(points)
        found, weights = self._try_triangles(points, self._incidence[near])
        miss = np.nonzero(found < 0)[0]
        if len(miss):
            k = min(8, self.n_vertices)
            _, nearest = self._tree.query(points[miss], k=k)
            cand = self._incidence[nearest].reshape(len(miss), -1)
            f2, w2 = self._try_triangles(points[miss], cand)
            found[miss], weights[miss] = f2, w2
        miss = np.nonzero(found < 0)[0]
        if len(miss):
            # nearest-vertex fallback: a triangle holding that vertex with a one-hot weight
            v = near[miss]
            tri = self._incidence[v, 0]
            found[miss] = tri
            onehot = (self.triangles[tri] == v[:, None]).astype(float)
            weights[miss] = onehot
        return found, weights

    def interpolation_matrix(self, points: np.ndarray) -> sparse.csr_matrix:
        tri, w = self.locate(points)
        rows = np.repeat(np.arange(len(tri)), 3)
        cols = self.triangles[tri].reshape(-1)
        return sparse.csr_matrix((w.reshape(-1), (rows, cols)), shape=(len(tri), self.n_vertices))

    def nearest_vertex(self, points: np.ndarray) -> np.ndarray:
        _, near = self._tree.query(np.atleast_2d(points))
        return near


def build_icosphere(subdivision_level: int) -> TriangulatedSphere:
    """Icosphere with ``10 * 4**level + 2`` vertices."""
    if not isinstance(subdivision_level, (int, np.integer)) or not 0 <= subdivision_level <= MAX_LEVEL:
        raise ConfigurationError(f"subdivision level must be an integer in [0, {MAX_LEVEL}], got {subdivision_level!r}")
    verts, faces = _icosahedron()
    for _ in range(int(subdivision_level)):
        verts, faces = _subdivide(verts, faces)
    return TriangulatedSphere(verts, faces, level=int(subdivision_level))


@dataclass(frozen=True, eq=False)
class VertexSet:
    """Vertices of a mesh inside the open geodesic ball B_radius(center)."""

    mesh: TriangulatedSphere
    indices: np.ndarray
    center: np.ndarray
    radius: float

    @cached_property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.mesh.n_vertices, dtype=bool)
        m[self.indices] = True
        return _frozen(m)

    @cached_property
    def triangle_mask(self) -> np.ndarray:
        """Triangles with all three corners in the set."""
        return _frozen(self.mask[self.mesh.triangles].all(axis=1))

    @cached_property
    def triangle_ids(self) -> np.ndarray:
        return _frozen(np.nonzero(self.triangle_mask)[0])

    @property
    def area(self) -> float:
        return float(self.mesh.vertex_areas[self.indices].sum())

    def __len__(self) -> int:
        return len(self.indices)

    def label(self) -> str:
        lat, lon = lat_lon(self.center)
        return f"ball:{lat:.6g}:{lon:.6g}:{self.radius:.6g}"


def check_unit(x, name="x") -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(3)
    if abs(np.linalg.norm(x) - 1.0) > UNIT_TOL:
        raise DomainError(f"{name} must be a unit vector, |{name}| = {np.linalg.norm(x)!r}")
    return x


def geodesic_ball(mesh: TriangulatedSphere, x, rho: float) -> VertexSet:
    x = check_unit(x)
    if not 0.0 < rho < np.pi:
        raise DomainError(f"geodesic radius must lie in (0, pi), got {rho!r}")
    d = geodesic_distance(mesh.vertices, x[None, :])
    return VertexSet(mesh, _frozen(np.nonzero(d < rho)[0]), _frozen(x.copy()), float(rho))


def lat_lon(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(np.degrees(np.arcsin(np.clip(x[2], -1, 1)))), float(np.degrees(np.arctan2(x[1], x[0])))


def from_lat_lon(lat_deg: float, lon_deg: float) -> np.ndarray:
    la, lo = np.radians(lat_deg), np.radians(lon_deg)
    if lat_deg == 90:
        return np.array([0.0, 0.0, 1.0])
    if lat_deg == -90:
        return np.array([0.0, 0.0, -1.0])
    v = np.array([np.cos(la) * np.cos(lo), np.cos(la) * np.sin(lo), np.sin(la)])
    return v / np.linalg.norm(v)


@dataclass(frozen=True, eq=False)
class ChartMap:
    """Exponential chart of S^2 centred at ``center``.

    ``forward`` is the Riemannian logarithm written in the orthonormal tangent
    frame (e1, e2); ``inverse`` is the exponential map. Valid for geodesic
    distances below pi.
    """

    center: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    valid_radius: float = np.pi

    def forward(self, q: np.ndarray) -> np.ndarray:
        q = np.atleast_2d(np.asarray(q, dtype=float))
        x = self.center
        c = q @ x
        tangent = q - c[:, None] * x[None, :]
        s = np.linalg.norm(tangent, axis=1)
        theta = np.arctan2(s, c)
        scale = np.divide(theta, s, out=np.zeros_like(s), where=s > 0)
        return np.stack([tangent @ self.e1, tangent @ self.e2], axis=1) * scale[:, None]

    def inverse(self, y: np.ndarray) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        rho = np.linalg.norm(y, axis=1)
        sinc = np.where(rho > 0, np.sin(rho) / np.where(rho > 0, rho, 1.0), 1.0)
        dirs = y[:, :1] * self.e1[None, :] + y[:, 1:2] * self.e2[None, :]
        out = np.cos(rho)[:, None] * self.center[None, :] + sinc[:, None] * dirs
        return normalize_rows(out)


def exp_chart(x) -> ChartMap:
    x = check_unit(x)
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(x)))] = 1.0
    e1 = axis - (axis @ x) * x
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(x, e1)
    return ChartMap(_frozen(x.copy()), _frozen(e1), _frozen(e2))


@dataclass(frozen=True, eq=False)
class BallMesh:
    """Lattice discretization of the closed unit ball.

    Nodes ``0 .. n_interior-1`` are lattice points with |x| < 1; the remaining
    nodes are boundary nodes, one per lattice edge that leaves the ball, placed
    where that edge crosses the sphere. Every interior node has exactly six
    neighbors (slot order ``DIRECTIONS``). The energy weight of a full lattice
    edge is ``h`` and of a cut edge of length ``s`` it is ``h**2 / s``.

    ``halo_*`` describe exterior lattice points next to the ball; their values
    are borrowed from the nearest boundary node so that defect detection can
    close cubes that poke through the sphere.
    """

    resolution: int
    spacing: float
    nodes: np.ndarray
    n_interior: int
    lattice_index: np.ndarray
    neighbors: np.ndarray
    weights: np.ndarray
    cell_volumes: np.ndarray
    cut_lengths: np.ndarray
    index_grid: np.ndarray
    grid_offset: int
    halo_lattice: np.ndarray
    halo_source: np.ndarray
    sphere: TriangulatedSphere
    trace_map: np.ndarray
    trace_matrix: sparse.csr_matrix = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.arange(self.n_interior, self.n_nodes)

    @property
    def n_boundary(self) -> int:
        return self.n_nodes - self.n_interior

    @cached_property
    def colors(self) -> np.ndarray:
        return _frozen(self.lattice_index.sum(axis=1) % 2)

    @cached_property
    def sweep_order(self) -> np.ndarray:
        """Red-black order: all even-parity interior nodes, then all odd ones."""
        c = self.colors
        return _frozen(np.concatenate([np.nonzero(c == 0)[0], np.nonzero(c == 1)[0]]).astype(np.int64))

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Each lattice/cut edge once: (i, j, weight), fixed traversal order."""
        rows, cols, ws = [], [], []
        nint = self.n_interior
        for k in range(6):
            j = self.neighbors[:, k]
            keep = (j >= nint) | ((j < nint) & (np.arange(nint) < j))
            rows.append(np.nonzero(keep)[0])
            cols.append(j[keep])
            ws.append(self.weights[keep, k])
        return _frozen(np.concatenate(rows)), _frozen(np.concatenate(cols)), _frozen(np.concatenate(ws))

    @property
    def total_volume(self) -> float:
        return float(self.cell_volumes.sum())

    def lattice_points(self, ijk: np.ndarray) -> np.ndarray:
        return -1.0 + self.spacing * np.asarray(ijk, dtype=float)

    def trace(self, values: np.ndarray) -> np.ndarray:
        """Boundary-node values of a per-vertex field on ``sphere`` (renormalized)."""
        out = self.trace_matrix @ np.asarray(values, dtype=float)
        norms = np.linalg.norm(out, axis=1)
        bad = norms < 1e-8
        if bad.any():
            out[bad] = np.asarray(values)[self.trace_map[bad]]
            norms[bad] = 1.0
        return out / norms[:, None]


def build_ball_grid(resolution: int, sphere: TriangulatedSphere | None = None, halo_depth: int = 2) -> BallMesh:
    """Lattice ``x_i = -1 + i*h``, ``h = 2/N``, i = 0..N, clipped to the open ball.

    ``sphere`` is the mesh the trace operator maps onto (default: icosphere of
    level 5).
    """
    if not isinstance(resolution, (int, np.integer)) or resolution < 8:
        raise ConfigurationError(f"ball resolution must be an integer >= 8, got {resolution!r}")
    if sphere is None:
        sphere = build_icosphere(5)
    n = int(resolution)
    h = 2.0 / n
    pad = int(halo_depth)
    m = n + 1 + 2 * pad
    ax = -1.0 + h * (np.arange(m) - pad)
    gx, gy, gz = np.meshgrid(ax, ax, ax, indexing="ij")
    radius = np.sqrt(gx**2 + gy**2 + gz**2)
    inside = radius < 1.0 - UNIT_TOL
    index_grid = -np.ones(inside.shape, dtype=np.int64)
    ijk = np.argwhere(inside)
    nint = len(ijk)
    index_grid[inside] = np.arange(nint)
    pos = np.stack([gx[inside], gy[inside], gz[inside]], axis=1)

    neighbors = np.zeros((nint, 6), dtype=np.int64)
    weights = np.zeros((nint, 6))
    cut = np.zeros((nint, 6))
    extent = np.zeros((nint, 3))
    bpos = []
    nb = 0
    for k, (axis, sign) in enumerate(DIRECTIONS):
        nbr_ijk = ijk.copy()
        nbr_ijk[:, axis] += sign
        tgt = index_grid[nbr_ijk[:, 0], nbr_ijk[:, 1], nbr_ijk[:, 2]]
        interior = tgt >= 0
        neighbors[interior, k] = tgt[interior]
        weights[interior, k] = h
        cut[interior, k] = h
        extent[interior, axis] += 0.5 * h
        rows = np.nonzero(~interior)[0]
        x = pos[rows]
        xa = x[:, axis]
        # |x + s*sign*e_axis| = 1 with s > 0
        s = -sign * xa + np.sqrt(xa**2 + 1.0 - np.sum(x**2, axis=1))
        s = np.minimum(s, h)
        q = x.copy()
        q[:, axis] += sign * s
        q = normalize_rows(q)
        neighbors[rows, k] = nint + nb + np.arange(len(rows))
        weights[rows, k] = h * h / s
        cut[rows, k] = s
        extent[rows, axis] += s
        bpos.append(q)
        nb += len(rows)
    bpos = np.concatenate(bpos)
    nodes = np.concatenate([pos, bpos])
    volumes = h * h * extent.sum(axis=1) / 3.0

    # halo: exterior lattice points within `pad` steps (Chebyshev) of the interior
    near = np.zeros(inside.shape, dtype=bool)
    for di in range(-pad, pad + 1):
        for dj in range(-pad, pad + 1):
            for dk in range(-pad, pad + 1):
                near |= np.roll(np.roll(np.roll(inside, di, 0), dj, 1), dk, 2)
    halo = near & ~inside
    halo_ijk = np.argwhere(halo)
    hp = np.stack([gx[halo], gy[halo], gz[halo]], axis=1)
    _, src = cKDTree(bpos).query(normalize_rows(hp))
    trace_matrix = sphere.interpolation_matrix(bpos)
    trace_map = sphere.nearest_vertex(bpos)
    logger.debug("ball grid N=%d: %d interior, %d boundary, %d halo nodes", n, nint, nb, len(halo_ijk))
    return BallMesh(
        resolution=n,
        spacing=h,
        nodes=_frozen(nodes),
        n_interior=nint,
        lattice_index=_frozen(ijk),
        neighbors=_frozen(neighbors),
        weights=_frozen(weights),
        cell_volumes=_frozen(volumes),
        cut_lengths=_frozen(cut),
        index_grid=_frozen(index_grid),
        grid_offset=pad,
        halo_lattice=_frozen(halo_ijk),
        halo_source=_frozen(nint + src),
        sphere=sphere,
        trace_map=_frozen(trace_map),
        trace_matrix=trace_matrix,
    )
