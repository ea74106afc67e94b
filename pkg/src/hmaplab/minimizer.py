"""Energy minimization on the lattice ball, defect detection and the transition search."""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import kernels
from .errors import DomainError, InconclusiveError, PreconditionError
from .geometry import BallMesh, normalize_rows, signed_solid_angle
from .homotopy import HomotopyPath
from .sobolev import BallMap, SphereMap, boundary_values, edge_energy

logger = logging.getLogger(__name__)

REFLECT_Z = np.array([1.0, 1.0, -1.0])
INITS = ("radial", "constant", "north", "south", "mirrored", "random", "supplied")


@dataclass(frozen=True)
class MinimizeOptions:
    """Knobs for ``minimize``.

    ``tol`` bounds the relative energy decrease of the last sweep. When
    ``residual_tol`` is set, the run also continues until ``el_residual`` is
    below it. ``init`` picks the starting field (see ``INITS``); ``initial``
    supplies one for ``"supplied"`` (and is mirrored for ``"mirrored"`` when
    given). ``step`` is ``"relaxation"`` (pointwise Gauss-Seidel) or
    ``"gradient"`` (projected gradient with backtracking from ``step_size``).
    """

    max_iterations: int = 20000
    tol: float = 1e-8
    residual_tol: float | None = None
    check_every: int = 25
    step: str = "relaxation"
    step_size: float = 0.5
    init: str = "radial"
    constant: tuple = (0.0, 0.0, -1.0)
    initial: object = None
    seed: int = 0
    tilt: float = 0.5

    def __post_init__(self):
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be at least 1")
        if self.step not in ("relaxation", "gradient"):
            raise DomainError(f"unknown step rule {self.step!r}")
        if self.init not in INITS:
            raise DomainError(f"unknown initialization {self.init!r}")


@dataclass
class MinimizeResult:
    u: BallMap
    energy: float
    iterations: int
    converged: bool
    history: np.ndarray
    init: str = ""

    def __iter__(self):
        return iter((self.u, self.energy, self.iterations))


def _interior_directions(mesh: BallMesh) -> np.ndarray:
    """node/|node| for interior nodes; the origin borrows the (1,1,1) diagonal direction."""
    pos = mesh.nodes[: mesh.n_interior]
    n = np.linalg.norm(pos, axis=1)
    q = pos.copy()
    zero = n == 0
    q[zero] = np.array([1.0, 1.0, 1.0])
    return normalize_rows(q)


def radial_extension(phi: SphereMap, mesh: BallMesh) -> BallMap:
    """u(x) = phi(x/|x|); the origin node takes the value of its diagonal neighbor direction."""
    inner = phi.sample(_interior_directions(mesh))
    values = np.concatenate([inner, boundary_values(mesh, phi)])
    return BallMap(mesh, values, phi)


def _initial_field(mesh: BallMesh, phi: SphereMap, opts: MinimizeOptions) -> np.ndarray:
    nint = mesh.n_interior
    bnd = boundary_values(mesh, phi)
    supplied = None
    if opts.initial is not None:
        supplied = opts.initial.values if isinstance(opts.initial, BallMap) else np.asarray(opts.initial, dtype=float)
        if supplied.shape != (mesh.n_nodes, 3):
            raise DomainError("supplied initial field does not match the mesh")
        supplied = supplied[:nint]
    init = opts.init
    if init == "supplied":
        if supplied is None:
            raise DomainError("init='supplied' needs opts.initial")
        inner = supplied.copy()
    elif init == "constant":
        c = np.asarray(opts.constant, dtype=float)
        inner = np.tile(c / np.linalg.norm(c), (nint, 1))
    else:
        radial = phi.sample(_interior_directions(mesh))
        if init == "radial":
            inner = radial
        elif init in ("north", "south"):
            sign = 1.0 if init == "north" else -1.0
            inner = normalize_rows(radial + sign * opts.tilt * np.array([0.0, 0.0, 1.0]))
        elif init == "mirrored":
            inner = (supplied if supplied is not None else radial) * REFLECT_Z
        else:  # random
            rng = np.random.default_rng(opts.seed)
            inner = normalize_rows(radial + 0.5 * rng.normal(size=radial.shape))
    inner = normalize_rows(inner)
    return np.ascontiguousarray(np.concatenate([inner, bnd]))


def tangential_laplacian(mesh: BallMesh, values: np.ndarray) -> np.ndarray:
    """Tangential part of Delta_h u at interior nodes (the normal part is |grad u|^2 u)."""
    nint = mesh.n_interior
    u = values[:nint]
    acc = np.zeros((nint, 3))
    for k in range(6):
        acc += mesh.weights[:, k, None] * (values[mesh.neighbors[:, k]] - u)
    lap = acc / mesh.cell_volumes[:, None]
    return lap - np.einsum("ij,ij->i", lap, u)[:, None] * u


def _residual_norm(mesh: BallMesh, values: np.ndarray, keep: np.ndarray | None = None) -> float:
    t = tangential_laplacian(mesh, values)
    dens = mesh.cell_volumes * np.einsum("ij,ij->i", t, t)
    if keep is not None:
        dens = dens[keep]
    return float(np.sqrt(np.sum(dens)))


def el_residual(u: BallMap, exclude=None, exclude_radius: float | None = None) -> float:
    """Discrete L^2 norm of the tangential part of -Delta_h u - |grad_h u|^2 u.

    Nodes within ``exclude_radius`` of a listed singularity (a
    ``SingularityReport`` or an array of points) are left out; the default
    radius is two lattice cells.
    """
    mesh = u.mesh
    keep = None
    if exclude is not None:
        pts = exclude.positions if isinstance(exclude, SingularityReport) else np.atleast_2d(exclude)
        if len(pts):
            rad = 2.0 * mesh.spacing if exclude_radius is None else exclude_radius
            d, _ = cKDTree(pts).query(mesh.nodes[: mesh.n_interior])
            keep = d > rad
    return _residual_norm(mesh, u.values, keep)


def _relax(mesh: BallMesh, values: np.ndarray, opts: MinimizeOptions, relax_fn=None):
    relax_fn = relax_fn or kernels.relax
    order = mesh.sweep_order
    n_first = int(np.count_nonzero(mesh.colors == 0))
    nbr, w = mesh.neighbors, mesh.weights
    energy = edge_energy(mesh, values)
    history = [energy]
    buf = np.zeros(max(1, opts.check_every))
    done = 0
    converged = False
    tol = opts.tol
    while done < opts.max_iterations:
        chunk = min(len(buf), opts.max_iterations - done)
        n = relax_fn(values, nbr, w, order, n_first, energy, tol, chunk, buf)
        history.extend(buf[:n].tolist())
        done += n
        energy = edge_energy(mesh, values)
        energy_ok = n < chunk or (n == chunk and history[-2] - history[-1] <= tol * history[-1])
        if energy_ok:
            if opts.residual_tol is None or _residual_norm(mesh, values) <= opts.residual_tol:
                converged = True
                break
            # energy has settled; keep sweeping until the residual criterion holds
            tol = 0.0
        if tol == 0.0 and opts.residual_tol is not None and _residual_norm(mesh, values) <= opts.residual_tol:
            converged = True
            break
    return values, energy, done, converged, np.array(history)


def _gradient(mesh: BallMesh, values: np.ndarray, opts: MinimizeOptions):
    nint = mesh.n_interior
    diag = mesh.weights.sum(axis=1)
    energy = edge_energy(mesh, values)
    history = [energy]
    alpha = opts.step_size
    converged = False
    it = 0
    while it < opts.max_iterations:
        acc = np.zeros((nint, 3))
        for k in range(6):
            acc += mesh.weights[:, k, None] * values[mesh.neighbors[:, k]]
        u = values[:nint]
        g = u - acc / diag[:, None]
        g -= np.einsum("ij,ij->i", g, u)[:, None] * u
        while True:
            trial = values.copy()
            trial[:nint] = normalize_rows(u - alpha * g)
            e = edge_energy(mesh, trial)
            if e <= energy or alpha < 1e-8:
                break
            alpha *= 0.5
        it += 1
        if e > energy:
            break
        dec = energy - e
        values, energy = trial, e
        history.append(energy)
        alpha = min(opts.step_size, 2.0 * alpha)
        if dec <= opts.tol * energy:
            if opts.residual_tol is None or _residual_norm(mesh, values) <= opts.residual_tol:
                converged = True
                break
    return values, energy, it, converged, np.array(history)


def minimize(mesh: BallMesh, phi: SphereMap, opts: MinimizeOptions | None = None) -> MinimizeResult:
    """Minimize the discrete Dirichlet energy with boundary trace ``phi``.

    Boundary nodes are never written. With the relaxation step every sweep
    lowers the energy, so the history is non-increasing.
    """
    opts = opts or MinimizeOptions()
    values = _initial_field(mesh, phi, opts)
    if opts.step == "relaxation":
        values, energy, its, conv, hist = _relax(mesh, values, opts)
    else:
        values, energy, its, conv, hist = _gradient(mesh, values, opts)
    if not conv:
        logger.warning("minimize stopped after %d iterations without meeting the tolerance", its)
    values[: mesh.n_interior] = normalize_rows(values[: mesh.n_interior])
    return MinimizeResult(BallMap(mesh, values, phi), energy, its, conv, hist, opts.init)


# --- singularities ------------------------------------------------------------

# the six faces of a unit cell as corner offsets, counter-clockwise seen from outside
_FACES = (
    ((0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 0)),
    ((1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1)),
    ((0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)),
    ((0, 1, 0), (0, 1, 1), (1, 1, 1), (1, 1, 0)),
    ((0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 0)),
    ((0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)),
)


@dataclass(frozen=True)
class SingularityReport:
    """Point defects: positions, integer local degrees, detection shell (cells)."""

    positions: np.ndarray
    degrees: np.ndarray
    shell: int
    skipped: int = 0

    @property
    def count(self) -> int:
        return len(self.degrees)

    @property
    def boundary_clearance(self) -> float:
        if self.count == 0:
            return float("inf")
        return float(np.min(1.0 - np.linalg.norm(self.positions, axis=1)))

    def csv(self) -> str:
        lines = ["x,y,z,local_degree"]
        lines += [f"{p[0]!r},{p[1]!r},{p[2]!r},{int(d)}" for p, d in zip(self.positions, self.degrees)]
        return "\n".join(lines) + "\n"


def lattice_field(u: BallMap) -> tuple[np.ndarray, np.ndarray]:
    """Values on the padded lattice (interior nodes plus halo) and a validity mask."""
    mesh = u.mesh
    shape = mesh.index_grid.shape
    full = np.zeros(shape + (3,))
    valid = mesh.index_grid >= 0
    full[valid] = u.values[mesh.index_grid[valid]]
    h = mesh.halo_lattice
    full[h[:, 0], h[:, 1], h[:, 2]] = u.values[mesh.halo_source]
    valid = valid.copy()
    valid[h[:, 0], h[:, 1], h[:, 2]] = True
    return full, valid


def cell_charges(u: BallMap) -> tuple[np.ndarray, np.ndarray]:
    """Degree of u on the boundary of every lattice cell with all corners known.

    Returns the charge array over the padded cell grid (zero where a corner is
    missing) and the matching validity mask.
    """
    full, valid = lattice_field(u)
    n = np.array(valid.shape) - 1
    cval = np.ones(tuple(n), dtype=bool)
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                cval &= valid[a : n[0] + a, b : n[1] + b, c : n[2] + c]
    cells = np.argwhere(cval)
    corner = {}
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                corner[(a, b, c)] = full[cells[:, 0] + a, cells[:, 1] + b, cells[:, 2] + c]
    total = np.zeros(len(cells))
    for f in _FACES:
        p, q, r, s = (corner[o] for o in f)
        total += signed_solid_angle(p, q, r) + signed_solid_angle(p, r, s)
    charge = np.zeros(tuple(n))
    charge[cval] = total / (4.0 * np.pi)
    return charge, cval


def _block_sums(a: np.ndarray, width: int) -> np.ndarray:
    """Sums of ``a`` over all width^3 blocks (block origin indexing)."""
    c = np.pad(np.cumsum(np.cumsum(np.cumsum(a, 0), 1), 2), ((1, 0), (1, 0), (1, 0)))
    w = width
    return (
        c[w:, w:, w:] - c[:-w, w:, w:] - c[w:, :-w, w:] - c[w:, w:, :-w]
        + c[:-w, :-w, w:] + c[:-w, w:, :-w] + c[w:, :-w, :-w] - c[:-w, :-w, :-w]
    )


def find_singularities(u: BallMap, shell: int = 1, merge_radius: int = 2) -> SingularityReport:
    """Locate point defects of ``u`` by local degree.

    For each interior node, the degree on the surface of the cube of half-width
    ``shell`` cells around it is the sum of the charges of the enclosed cells.
    Nodes with nonzero degree within ``merge_radius`` cells of each other form
    one defect; its degree is the total charge of the cells its nodes enclose
    and its position the charge-weighted mean of those cells' centers.
    """
    if shell < 1:
        raise DomainError("shell must be at least one cell")
    mesh = u.mesh
    charge, cval = cell_charges(u)
    width = 2 * shell
    block = _block_sums(charge, width)
    okb = _block_sums(cval.astype(np.int64), width) == width**3
    off = mesh.grid_offset
    ijk = mesh.lattice_index  # padded-grid indices of interior nodes
    org = ijk - shell  # block origin in cell coordinates
    inside = np.all((org >= 0) & (org < np.array(block.shape)), axis=1)
    ok = np.zeros(len(ijk), dtype=bool)
    ok[inside] = okb[org[inside, 0], org[inside, 1], org[inside, 2]]
    skipped = int(np.count_nonzero(~ok))
    if skipped:
        warnings.warn(f"{skipped} nodes skipped: their detection shell leaves the known lattice", stacklevel=2)
    deg = np.zeros(len(ijk))
    deg[ok] = block[org[ok, 0], org[ok, 1], org[ok, 2]]
    hits = np.nonzero(np.abs(deg) > 0.5)[0]
    if len(hits) == 0:
        return SingularityReport(np.zeros((0, 3)), np.zeros(0, dtype=int), shell, skipped)
    pts = ijk[hits].astype(float)
    pairs = cKDTree(pts).query_pairs(merge_radius + 1e-9, p=np.inf, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(hits), len(hits)))
    ncomp, label = connected_components(graph, directed=False)
    positions, degrees = [], []
    for c in range(ncomp):
        members = ijk[hits[label == c]] - shell
        mask = np.zeros(charge.shape, dtype=bool)
        for o in members:
            mask[o[0] : o[0] + width, o[1] : o[1] + width, o[2] : o[2] + width] = True
        q = charge[mask]
        d = int(round(float(q.sum())))
        if d == 0:
            continue
        cells = np.argwhere(mask)
        wts = np.abs(q)
        centers = mesh.lattice_points(cells - off + 0.5)
        pos = (wts[:, None] * centers).sum(axis=0) / wts.sum()
        if np.linalg.norm(pos) >= 1.0:
            logger.warning("dropping a defect located outside the ball at %s", pos)
            continue
        positions.append(pos)
        degrees.append(d)
    if not degrees:
        return SingularityReport(np.zeros((0, 3)), np.zeros(0, dtype=int), shell, skipped)
    order = np.lexsort(np.array(positions).T[::-1])
    return SingularityReport(np.array(positions)[order], np.array(degrees, dtype=int)[order], shell, skipped)


# --- transition search --------------------------------------------------------


@dataclass
class Evaluation:
    """All runs at one homotopy time and the counts over the minimizer set."""

    t: float
    runs: list
    reports: list
    energy_window: float

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.runs])

    @property
    def minimizer_set(self) -> np.ndarray:
        e = self.energies
        return np.nonzero(e <= e.min() * (1.0 + self.energy_window) + 1e-14)[0]

    @property
    def count_max(self) -> int:
        return max(self.reports[i].count for i in self.minimizer_set)

    @property
    def count_min(self) -> int:
        return min(self.reports[i].count for i in self.minimizer_set)

    def best(self, predicate=lambda rep: True) -> int:
        idx = [i for i in self.minimizer_set if predicate(self.reports[i])]
        if not idx:
            idx = list(self.minimizer_set)
        return min(idx, key=lambda i: self.runs[i].energy)


@dataclass
class TransitionResult:
    t_lo: float
    t_hi: float
    lower: MinimizeResult
    upper: MinimizeResult
    lower_report: SingularityReport
    upper_report: SingularityReport
    samples: list = field(default_factory=list)

    @property
    def t_star(self) -> float:
        return 0.5 * (self.t_lo + self.t_hi)

    @property
    def width(self) -> float:
        return self.t_hi - self.t_lo

    @property
    def count_lo(self) -> int:
        return self.lower_report.count

    @property
    def count_hi(self) -> int:
        return self.upper_report.count

    def block(self) -> str:
        return (
            "t_lo t_hi count_lo count_hi E_lo E_hi\n"
            f"{self.t_lo!r} {self.t_hi!r} {self.count_lo} {self.count_hi} {self.lower.energy!r} {self.upper.energy!r}\n"
        )


def _evaluate(H: HomotopyPath, mesh: BallMesh, opts: MinimizeOptions, t: float, inits, seeds, threads, window, shell):
    datum = H.at(t)
    jobs = [replace(opts, init=name) for name in inits]
    for k, s in enumerate(seeds):
        jobs.append(replace(opts, init="supplied", initial=s))
        jobs.append(replace(opts, init="mirrored", initial=s, seed=opts.seed + k))
    jobs = [replace(j, seed=opts.seed) if j.init == "random" else j for j in jobs]

    def run(o):
        res = minimize(mesh, datum, o)
        return res, find_singularities(res.u, shell)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(run, jobs))
    else:
        out = [run(o) for o in jobs]
    ev = Evaluation(float(t), [o[0] for o in out], [o[1] for o in out], window)
    logger.info("t=%.6f energies=%s counts=%s", t, np.round(ev.energies, 6).tolist(), [r.count for r in ev.reports])
    return ev


def bisect_transition(
    H: HomotopyPath,
    mesh: BallMesh,
    opts: MinimizeOptions | None = None,
    M: int = 0,
    steps: int = 7,
    inits=("radial", "constant", "random"),
    grid: int = 4,
    energy_window: float = 1e-3,
    shell: int = 1,
    threads: int = 1,
) -> TransitionResult:
    """Bracket the last time t at which every (found) minimizer has <= M defects.

    At each queried t the datum H_t is minimized from the ``inits`` plus
    continuation from the current bracket ends and their mirror images. Runs
    within ``energy_window`` (relative) of the lowest energy form the minimizer
    set; t is "low" when all of them have at most M defects. A coarse grid of
    ``grid`` interior times is checked for a single low-to-high crossing
    before bisecting.
    """
    opts = opts or MinimizeOptions()
    samples = []

    def ev_at(t, seeds=()):
        e = _evaluate(H, mesh, opts, t, inits, seeds, threads, energy_window, shell)
        samples.append((float(t), e.count_min, e.count_max))
        return e

    def fail(message):
        err = PreconditionError(message)
        err.samples = list(samples)
        return err

    lo = ev_at(0.0)
    if lo.count_max > M:
        raise fail(f"minimizers at t=0 have {lo.count_max} > M={M} defects")
    hi = ev_at(1.0)
    if hi.count_max <= M:
        raise fail(f"minimizers at t=1 have at most M={M} defects: no crossing")
    if grid > 0:
        evs = [lo] + [ev_at(t) for t in np.linspace(0.0, 1.0, grid + 2)[1:-1]] + [hi]
        low = [e.count_max <= M for e in evs]
        first_high = low.index(False)
        if any(low[first_high:]):
            raise InconclusiveError("defect count does not cross M monotonically", samples)
        lo, hi = evs[first_high - 1], evs[first_high]
    for _ in range(steps):
        seeds = [lo.runs[lo.best()].u, hi.runs[hi.best(lambda r: r.count > M)].u]
        mid = ev_at(0.5 * (lo.t + hi.t), seeds)
        if mid.count_max <= M:
            lo = mid
        else:
            hi = mid
    i_lo = lo.best()
    i_hi = hi.best(lambda r: r.count > M)
    return TransitionResult(lo.t, hi.t, lo.runs[i_lo], hi.runs[i_hi], lo.reports[i_lo], hi.reports[i_hi], samples)
