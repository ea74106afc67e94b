"""Plain-text file formats for meshes, maps, homotopies and reports.

Floats are written with ``repr`` so files round-trip exactly and reruns are
byte-identical.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .geometry import BallMesh, TriangulatedSphere, build_ball_grid, build_icosphere
from .homotopy import HomotopyPath
from .sobolev import BallMap, NormReport, SphereMap


def _fmt_rows(a: np.ndarray) -> str:
    return "".join(" ".join(repr(float(v)) for v in row) + "\n" for row in a)


def _read_lines(path) -> list[str]:
    with open(path) as fh:
        return [ln for ln in (l.strip() for l in fh) if ln]


def _header(lines: list[str], kind: str, path) -> list[str]:
    if not lines:
        raise ConfigurationError(f"{path}: empty file")
    head = lines[0].split()
    if len(head) < 3 or head[0] != kind or head[1] != "v1":
        raise ConfigurationError(f"{path}: expected a '{kind} v1' header, got {lines[0]!r}")
    return head


def write_sphere_mesh(path, mesh: TriangulatedSphere) -> None:
    with open(path, "w") as fh:
        fh.write(f"sphere-mesh v1 {mesh.n_vertices} {mesh.n_triangles}\n")
        fh.write(_fmt_rows(mesh.vertices))
        fh.write("".join(f"{a} {b} {c}\n" for a, b, c in mesh.triangles))


def read_sphere_mesh(path) -> TriangulatedSphere:
    lines = _read_lines(path)
    head = _header(lines, "sphere-mesh", path)
    nv, nt = int(head[2]), int(head[3])
    verts = np.array([[float(v) for v in ln.split()] for ln in lines[1 : 1 + nv]])
    tris = np.array([[int(v) for v in ln.split()] for ln in lines[1 + nv : 1 + nv + nt]], dtype=np.int64)
    level = icosphere_level(nv)
    return TriangulatedSphere(verts, tris, level=level)


def write_ball_mesh(path, mesh: BallMesh) -> None:
    with open(path, "w") as fh:
        fh.write(f"ball-mesh v1 {mesh.n_nodes} {mesh.resolution}\n")
        fh.write(_fmt_rows(mesh.nodes))


def read_ball_mesh(path, sphere: TriangulatedSphere | None = None) -> BallMesh:
    """Rebuild the lattice named in the header and check it against the stored nodes."""
    lines = _read_lines(path)
    head = _header(lines, "ball-mesh", path)
    n, res = int(head[2]), int(head[3])
    mesh = build_ball_grid(res, sphere)
    nodes = np.array([[float(v) for v in ln.split()] for ln in lines[1 : 1 + n]])
    if nodes.shape != mesh.nodes.shape or not np.array_equal(nodes, mesh.nodes):
        raise ConfigurationError(f"{path}: nodes do not match a resolution-{res} lattice")
    return mesh


def icosphere_level(n_vertices: int) -> int | None:
    for level in range(0, 9):
        if 10 * 4**level + 2 == n_vertices:
            return level
    return None


def write_sphere_map(path, f: SphereMap) -> None:
    with open(path, "w") as fh:
        fh.write(f"sphere-map v1 {f.mesh.n_vertices}\n")
        fh.write(_fmt_rows(f.values))


def read_sphere_map(path, mesh: TriangulatedSphere | None = None) -> SphereMap:
    """Read a map; without ``mesh`` the icosphere level is inferred from the vertex count."""
    lines = _read_lines(path)
    head = _header(lines, "sphere-map", path)
    n = int(head[2])
    if mesh is None:
        level = icosphere_level(n)
        if level is None:
            raise ConfigurationError(f"{path}: {n} vertices is not an icosphere size; pass the mesh")
        mesh = build_icosphere(level)
    vals = np.array([[float(v) for v in ln.split()] for ln in lines[1 : 1 + n]])
    return SphereMap(mesh, vals)


def write_ball_map(path, u: BallMap) -> None:
    with open(path, "w") as fh:
        fh.write(f"ball-map v1 {u.mesh.n_nodes}\n")
        fh.write(_fmt_rows(u.values))


def read_ball_map(path, mesh: BallMesh) -> BallMap:
    lines = _read_lines(path)
    head = _header(lines, "ball-map", path)
    n = int(head[2])
    vals = np.array([[float(v) for v in ln.split()] for ln in lines[1 : 1 + n]])
    return BallMap(mesh, vals)


NORM_HEADER = "p,region_id,lp,seminorm,total\n"


def norm_csv(reports: list[NormReport]) -> str:
    return NORM_HEADER + "".join(r.csv_row() + "\n" for r in reports)


def history_csv(history: np.ndarray) -> str:
    return "iteration,energy\n" + "".join(f"{k},{float(e)!r}\n" for k, e in enumerate(history))


def write_text(path, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)


def write_homotopy(directory, H: HomotopyPath, write_maps: bool = True) -> None:
    """Sample maps ``H_<k>.txt``, ``manifest.txt`` and ``homotopy.csv``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    x = ",".join(repr(float(v)) for v in H.x)
    write_text(d / "manifest.txt", f"homotopy v1 {H.K} {H.r!r} {x} {H.tau!r} {H.p!r}\n")
    rows = ["t,norm_total,norm_local"]
    for k, t in enumerate(H.times):
        tot = H.norms[k].total if H.norms else float("nan")
        loc = H.local_norms[k].total if H.local_norms else float("nan")
        rows.append(f"{float(t)!r},{tot!r},{loc!r}")
    write_text(d / "homotopy.csv", "\n".join(rows) + "\n")
    if write_maps:
        for k in range(len(H.times)):
            write_sphere_map(d / f"H_{k}.txt", H.sample(k))


def read_manifest(path) -> dict:
    lines = _read_lines(path)
    head = _header(lines, "homotopy", path)
    return {
        "K": int(head[2]),
        "r": float(head[3]),
        "x": np.array([float(v) for v in head[4].split(",")]),
        "tau": float(head[5]),
        "p": float(head[6]),
    }


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
