"""Standard boundary maps used by the CLI and the tests."""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .geometry import TriangulatedSphere, normalize_rows
from .sobolev import SphereMap


def wrap(v: np.ndarray, k: int) -> np.ndarray:
    """Multiply the longitude by ``k`` (degree ``k``)."""
    rho = np.hypot(v[:, 0], v[:, 1])
    lon = np.arctan2(v[:, 1], v[:, 0])
    return np.stack([rho * np.cos(k * lon), rho * np.sin(k * lon), v[:, 2]], axis=1)


def equatorial(v: np.ndarray, alpha: float) -> np.ndarray:
    """(cos(alpha*z), sin(alpha*z), 0): values on the equator of the target."""
    a = alpha * v[:, 2]
    return np.stack([np.cos(a), np.sin(a), np.zeros_like(a)], axis=1)


def standard_map(mesh: TriangulatedSphere, spec: str) -> SphereMap:
    """Build a map from a short spec.

    ``identity``, ``antipodal``, ``constant:x,y,z``, ``wrap:k`` and
    ``equatorial:alpha`` are understood.
    """
    name, _, arg = spec.strip().partition(":")
    v = mesh.vertices
    try:
        if name == "identity":
            return SphereMap.identity(mesh)
        if name == "antipodal":
            return SphereMap(mesh, -v)
        if name == "constant":
            c = [float(t) for t in arg.split(",")] if arg else [0.0, 0.0, -1.0]
            return SphereMap.constant(mesh, c)
        if name == "wrap":
            return SphereMap(mesh, normalize_rows(wrap(v, int(arg))))
        if name == "equatorial":
            return SphereMap(mesh, equatorial(v, float(arg)))
    except ValueError as exc:
        raise ConfigurationError(f"bad map spec {spec!r}: {exc}") from exc
    raise ConfigurationError(f"unknown map spec {spec!r}")
