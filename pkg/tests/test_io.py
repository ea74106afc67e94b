import numpy as np
import pytest

from hmaplab import io
from hmaplab.errors import ConfigurationError
from hmaplab.geometry import from_lat_lon
from hmaplab.homotopy import DipoleHomotopy, HomotopyPath, build_homotopy
from hmaplab.maps import equatorial, standard_map, wrap
from hmaplab.minimizer import radial_extension
from hmaplab.sobolev import SphereMap


def test_sphere_mesh_round_trip(tmp_path, sphere3):
    io.write_sphere_mesh(tmp_path / "m.txt", sphere3)
    m = io.read_sphere_mesh(tmp_path / "m.txt")
    assert np.array_equal(m.vertices, sphere3.vertices)
    assert np.array_equal(m.triangles, sphere3.triangles)


def test_sphere_map_round_trip_is_exact(tmp_path, sphere4):
    f = standard_map(sphere4, "wrap:2")
    io.write_sphere_map(tmp_path / "f.txt", f)
    g = io.read_sphere_map(tmp_path / "f.txt")
    assert np.array_equal(g.values, f.values)
    assert g.mesh.n_vertices == sphere4.n_vertices


def test_sphere_map_without_icosphere_size(tmp_path):
    (tmp_path / "f.txt").write_text("sphere-map v1 5\n" + "0.0 0.0 1.0\n" * 5)
    with pytest.raises(ConfigurationError):
        io.read_sphere_map(tmp_path / "f.txt")


def test_bad_header(tmp_path):
    (tmp_path / "f.txt").write_text("nonsense\n")
    with pytest.raises(ConfigurationError):
        io.read_sphere_map(tmp_path / "f.txt")


def test_ball_mesh_and_map_round_trip(tmp_path, ball16):
    io.write_ball_mesh(tmp_path / "b.txt", ball16)
    b = io.read_ball_mesh(tmp_path / "b.txt", ball16.sphere)
    assert np.array_equal(b.nodes, ball16.nodes)
    u = radial_extension(SphereMap.identity(ball16.sphere), ball16)
    io.write_ball_map(tmp_path / "u.txt", u)
    v = io.read_ball_map(tmp_path / "u.txt", b)
    assert np.array_equal(v.values, u.values)


def test_homotopy_files(tmp_path, sphere5):
    phi = SphereMap.identity(sphere5)
    x = from_lat_lon(40, 10)
    D = DipoleHomotopy(phi, x, 0.5, 0.5)
    H = build_homotopy(phi, D.end, HomotopyPath.uniform(D, 4), 0.5, x, 1.0, K=4)
    io.write_homotopy(tmp_path, H)
    man = io.read_manifest(tmp_path / "manifest.txt")
    assert man["K"] == 4 and man["r"] == 0.5 and man["tau"] == H.tau
    assert np.array_equal(man["x"], x)
    rows = (tmp_path / "homotopy.csv").read_text().splitlines()
    assert rows[0] == "t,norm_total,norm_local" and len(rows) == 6
    last = io.read_sphere_map(tmp_path / "H_4.txt", sphere5)
    assert np.array_equal(last.values, H.psi.values)


def test_map_helpers_are_unit(sphere3):
    v = sphere3.vertices
    assert np.allclose(np.linalg.norm(wrap(v, 3), axis=1), 1.0)
    assert np.allclose(np.linalg.norm(equatorial(v, 2.0), axis=1), 1.0)
    with pytest.raises(ConfigurationError):
        standard_map(sphere3, "banana")
