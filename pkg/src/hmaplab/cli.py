"""Command-line experiment harness.

Each subcommand reads a flat ``key = value`` config (``#`` starts a comment)
and writes plain-text results under ``--out``. Exit codes: 0 success,
1 other error, 2 resolution, 3 topology, 4 inconclusive.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .errors import ConfigurationError, HmapError, InconclusiveError, PreconditionError, ResolutionError, TopologyError
from .geometry import build_ball_grid, build_icosphere, from_lat_lon, geodesic_ball
from .homotopy import (
    DEFAULT_C_BOUND,
    DipoleHomotopy,
    HomotopyPath,
    build_homotopy,
    verify_estimate,
)
from .maps import standard_map
from .minimizer import MinimizeOptions, bisect_transition, find_singularities, minimize
from .sobolev import degree, w1p_distance, w1p_norm

logger = logging.getLogger("hmaplab")

EXIT_OK, EXIT_OTHER, EXIT_RESOLUTION, EXIT_TOPOLOGY, EXIT_INCONCLUSIVE = 0, 1, 2, 3, 4


@dataclass
class ExperimentConfig:
    """Flat key/value configuration with typed, validated accessors."""

    values: dict = field(default_factory=dict)
    source: str = "<defaults>"

    @classmethod
    def parse(cls, text: str, source: str = "<string>") -> "ExperimentConfig":
        vals = {}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{source}:{n}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            vals[k] = v
        return cls(vals, source)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigurationError(f"config file {path} does not exist")
        return cls.parse(p.read_text(), str(p))

    def get(self, key, default=None, kind=str, lo=None, hi=None):
        if key not in self.values:
            if default is None:
                raise ConfigurationError(f"{self.source}: missing key {key!r}")
            return default
        try:
            v = kind(self.values[key])
        except ValueError as exc:
            raise ConfigurationError(f"{self.source}: bad value for {key!r}: {self.values[key]!r}") from exc
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            raise ConfigurationError(f"{self.source}: {key}={v!r} outside [{lo}, {hi}]")
        return v

    def floats(self, key, default=None) -> list[float]:
        raw = self.values.get(key)
        if raw is None:
            if default is None:
                raise ConfigurationError(f"{self.source}: missing key {key!r}")
            return list(default)
        try:
            return [float(t) for t in raw.split(",") if t.strip()]
        except ValueError as exc:
            raise ConfigurationError(f"{self.source}: bad list for {key!r}") from exc

    def path(self, key) -> Path | None:
        if key not in self.values:
            return None
        p = Path(self.values[key])
        if not p.is_absolute() and self.source not in ("<string>", "<defaults>"):
            p = Path(self.source).parent / p
        if not p.exists():
            raise ConfigurationError(f"{self.source}: file for {key!r} not found: {p}")
        return p

    def center(self) -> np.ndarray:
        return from_lat_lon(self.get("lat", 90.0, float, -90, 90), self.get("lon", 0.0, float, -180, 360))


def _sphere(cfg: ExperimentConfig):
    return build_icosphere(cfg.get("level", 5, int, 0, 8))


def _map(cfg: ExperimentConfig, key: str, mesh, default: str | None = None):
    p = cfg.path(f"{key}_file")
    if p is not None:
        return io.read_sphere_map(p, mesh)
    return standard_map(mesh, cfg.get(key, default))


def _min_options(cfg: ExperimentConfig) -> MinimizeOptions:
    rt = cfg.values.get("residual_tol")
    return MinimizeOptions(
        max_iterations=cfg.get("max_iterations", 20000, int, 1),
        tol=cfg.get("tol", 1e-8, float, 0.0),
        residual_tol=float(rt) if rt else None,
        init=cfg.get("init", "radial"),
        seed=cfg.get("seed", 0, int),
        step=cfg.get("step", "relaxation"),
    )


def cmd_degree(args, cfg, out):
    path = args.map or cfg.path("map")
    if path is None:
        raise ConfigurationError("degree needs a map file (positional or config key 'map')")
    d = degree(io.read_sphere_map(path))
    print(f"degree {d.degree} raw {d.raw:.10f}")
    return EXIT_OK


def cmd_norm(args, cfg, out):
    mesh = _sphere(cfg)
    phi = _map(cfg, "phi", mesh, "identity")
    p = cfg.get("p", 1.0, float, 1.0, 1.999999)
    region = None
    if "rho" in cfg.values:
        region = geodesic_ball(mesh, cfg.center(), cfg.get("rho", kind=float))
    if "psi" in cfg.values or "psi_file" in cfg.values:
        psi = _map(cfg, "psi", mesh)
        rep = w1p_norm(phi.values - psi.values, p, region, mesh=mesh)
    else:
        rep = w1p_norm(phi, p, region)
    text = io.norm_csv([rep])
    io.write_text(out / "norm.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_minimize(args, cfg, out):
    mesh = _sphere(cfg)
    ball = build_ball_grid(cfg.get("resolution", 32, int, 8), mesh)
    phi = _map(cfg, "phi", mesh, "identity")
    res = minimize(ball, phi, _min_options(cfg))
    rep = find_singularities(res.u, cfg.get("shell", 1, int, 1))
    io.write_ball_map(out / "minimizer.txt", res.u)
    io.write_text(out / "energy.csv", io.history_csv(res.history))
    io.write_text(out / "singularities.csv", rep.csv())
    print(f"energy {res.energy!r} iterations {res.iterations} converged {res.converged} singularities {rep.count}")
    return EXIT_OK


def _dipole_homotopy(cfg, mesh, phi, r, strength, x, p, K):
    D = DipoleHomotopy(phi, x, r, strength)
    G = HomotopyPath.uniform(D, K)
    return build_homotopy(phi, D.end, G, r, x, p, K)


def cmd_homotopy(args, cfg, out):
    mesh = _sphere(cfg)
    phi = _map(cfg, "phi", mesh, "identity")
    x = cfg.center()
    p = cfg.get("p", 1.0, float, 1.0, 1.999999)
    K = cfg.get("K", 60, int, 3)
    bound = cfg.get("C_bound", DEFAULT_C_BOUND, float, 0.0)
    radii = cfg.floats("r", [0.2])
    strength = cfg.get("strength", 0.5, float, 0.0)
    sweep = ["r,sup_norm,observed_C"]
    worst = 0.0
    for r in radii:
        if "psi" in cfg.values or "psi_file" in cfg.values:
            psi = _map(cfg, "psi", mesh)
            H = build_homotopy(phi, psi, None, r, x, p, K)
        else:
            H = _dipole_homotopy(cfg, mesh, phi, r, strength, x, p, K)
        rep = verify_estimate(H, bound)
        sub = out if len(radii) == 1 else out / f"r_{r!r}"
        io.write_homotopy(sub, H, write_maps=cfg.get("write_maps", 1, int) != 0)
        sweep.append(f"{r!r},{rep.sup_norm!r},{rep.observed_C!r}")
        worst = max(worst, rep.observed_C)
        print(f"r {r!r} tau {H.tau!r} sup_norm {rep.sup_norm!r} observed_C {rep.observed_C!r}")
    io.write_text(out / "sweep.csv", "\n".join(sweep) + "\n")
    if worst > bound:
        print(f"estimate bound {bound!r} exceeded (observed C {worst!r})")
    return EXIT_OK


def _samples_table(samples) -> str:
    return "t,count_min,count_max\n" + "".join(f"{t!r},{a},{b}\n" for t, a, b in samples)


def run_nonuniqueness(cfg: ExperimentConfig, threads: int = 1):
    """Perturb, homotope and bisect, shrinking r until |phi - H_t*| < epsilon.

    Returns (TransitionResult, HomotopyPath, r, distance).
    """
    mesh = _sphere(cfg)
    ball = build_ball_grid(cfg.get("resolution", 32, int, 8), mesh)
    phi = _map(cfg, "phi", mesh, "constant:0,0,-1")
    x = cfg.center()
    p = cfg.get("p", 1.0, float, 1.0, 1.999999)
    K = cfg.get("K", 60, int, 3)
    r = cfg.get("r", 0.75, float)
    strength = cfg.get("strength", 0.5, float, 0.0)
    eps = cfg.get("epsilon", float("inf"), float, 0.0)
    shrinks = cfg.get("max_shrink", 3, int, 0)
    M = cfg.get("M", 0, int, 0)
    opts = _min_options(cfg)
    inits = tuple(s.strip() for s in cfg.get("inits", "radial,constant,random").split(","))
    for attempt in range(shrinks + 1):
        H = _dipole_homotopy(cfg, mesh, phi, r, strength, x, p, K)
        try:
            res = bisect_transition(
                H, ball, opts, M,
                steps=cfg.get("steps", 7, int, 1),
                inits=inits,
                grid=cfg.get("grid", 4, int, 0),
                energy_window=cfg.get("energy_window", 1e-3, float, 0.0),
                threads=threads,
            )
        except PreconditionError as exc:
            raise InconclusiveError(str(exc), getattr(exc, "samples", [])) from exc
        dist = w1p_distance(phi, H.at(res.t_star), p)
        logger.info("r=%.6g: t*=%.6f |phi - H_t*| = %.6g (epsilon %.6g)", r, res.t_star, dist, eps)
        if dist < eps:
            return res, H, r, dist
        if attempt == shrinks:
            break
        r *= 0.5
    raise InconclusiveError(f"|phi - H_t*| = {dist:.6g} is not below epsilon = {eps:.6g} after {shrinks} shrinks", res.samples)


def cmd_nonuniqueness(args, cfg, out):
    try:
        res, H, r, dist = run_nonuniqueness(cfg, args.threads)
    except InconclusiveError as exc:
        io.write_text(out / "samples.csv", _samples_table(exc.samples))
        print(f"inconclusive: {exc}")
        sys.stdout.write(_samples_table(exc.samples))
        return EXIT_INCONCLUSIVE
    io.write_text(out / "transition.txt", res.block())
    io.write_text(out / "samples.csv", _samples_table(res.samples))
    io.write_ball_map(out / "lower.txt", res.lower.u)
    io.write_ball_map(out / "upper.txt", res.upper.u)
    io.write_text(out / "lower_singularities.csv", res.lower_report.csv())
    io.write_text(out / "upper_singularities.csv", res.upper_report.csv())
    summary = (
        f"r {r!r}\nt_star {res.t_star!r}\nwidth {res.width!r}\n"
        f"count_lo {res.count_lo}\ncount_hi {res.count_hi}\n"
        f"E_lo {res.lower.energy!r}\nE_hi {res.upper.energy!r}\nw1p_distance_t_star {dist!r}\n"
    )
    io.write_text(out / "summary.txt", summary)
    sys.stdout.write(res.block())
    sys.stdout.write(summary)
    return EXIT_OK


def cmd_probe(args, cfg, out):
    mesh = _sphere(cfg)
    phi = _map(cfg, "phi", mesh, "identity")
    x = cfg.center()
    p = cfg.get("p", 1.0, float, 1.0, 1.999999)
    K = cfg.get("K", 60, int, 3)
    rows = ["r,strength,dist_phi_psi,sup_dist_phi_H"]
    for r in cfg.floats("r", [0.4, 0.2]):
        for s in cfg.floats("strength", [0.0, 0.25, 0.5, 1.0]):
            H = _dipole_homotopy(cfg, mesh, phi, r, s, x, p, K)
            d = w1p_distance(phi, H.psi, p)
            sup = max(n.total for n in H.norms)
            rows.append(f"{r!r},{s!r},{d!r},{sup!r}")
    text = "\n".join(rows) + "\n"
    io.write_text(out / "probe.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "degree": cmd_degree,
    "norm": cmd_norm,
    "minimize": cmd_minimize,
    "homotopy": cmd_homotopy,
    "nonuniqueness": cmd_nonuniqueness,
    "probe": cmd_probe,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hmaplab", description="Harmonic-map experiments on the 3-ball.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("map", nargs="?", help="map file (degree command)")
    ap.add_argument("--config", help="key = value configuration file")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--threads", type=int, default=None, help="worker threads for independent runs")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        if args.threads is None:
            args.threads = cfg.get("threads", 1, int, 1)
        out = io.ensure_dir(args.out)
        return COMMANDS[args.command](args, cfg, out)
    except ResolutionError as exc:
        print(f"resolution error: {exc}", file=sys.stderr)
        return EXIT_RESOLUTION
    except TopologyError as exc:
        print(f"topology error: {exc}", file=sys.stderr)
        return EXIT_TOPOLOGY
    except InconclusiveError as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except (HmapError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    raise SystemExit(main())
