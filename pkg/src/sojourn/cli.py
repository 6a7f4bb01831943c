"""Config-driven experiment runner.

Subcommands: ``geometry`` exports the shape function, the dilation field,
and rescaled-boundary polylines; ``flow`` exports seeded flow trajectories;
``identities`` runs every module invariant suite and prints a pass/fail
table; ``delay`` runs the full time-delay pipeline and writes the report;
``all`` chains the four.  Exit codes: 0 all checks pass, 2 a numerical
check failed, 3 the configuration or invocation is invalid.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import dilation, geometry, identities, scattering, serialize, spectral
from .config import (BUNDLED_SCENARIOS, ExperimentConfig, resolve_config,
                     save_config)
from .errors import BoundaryContamination, ConfigError, SojournError
from .timedelay import build_report

EXIT_OK = 0
EXIT_NUMERICAL = 2
EXIT_CONFIG = 3

FIELD_RASTER_HALF_WIDTH = 2.5
FIELD_RASTER_POINTS = 101
FLOW_DIRECTIONS = 12
FLOW_TIMES = np.linspace(-1.5, 1.5, 25)
BOUNDARY_SAMPLES = 720


def _raster(dimension: int) -> np.ndarray:
    axis = np.linspace(-FIELD_RASTER_HALF_WIDTH, FIELD_RASTER_HALF_WIDTH,
                       FIELD_RASTER_POINTS)
    if dimension == 1:
        return axis[:, None]
    meshes = np.meshgrid(*([axis] * dimension), indexing="ij")
    return np.stack(meshes, axis=-1).reshape(-1, dimension)


def run_geometry(config: ExperimentConfig, out_dir: Path) -> int:
    domain = config.domain.build()
    symbol = config.symbol.build()
    fld = dilation.vector_field(domain, symbol)
    d = domain.dimension
    pts = _raster(d)
    live = np.sum(pts * pts, axis=-1) > 0.0  # G and F are singular/defined
    pts = pts[live]                          # by continuity at the origin

    g_vals = geometry.g_sigma(domain, pts)
    axes = [f"x{j + 1}" for j in range(d)]
    serialize.write_csv(out_dir / "g_field.csv", axes + ["g"],
                        (list(p) + [v] for p, v in zip(pts, g_vals)))

    f_vals = fld(pts)
    serialize.write_csv(
        out_dir / "f_field.csv",
        [f"p{j + 1}" for j in range(d)] + [f"f{j + 1}" for j in range(d)],
        (list(p) + list(v) for p, v in zip(pts, f_vals)))

    rows = []
    for r in config.sojourn.radii:
        if d == 2:
            curve = geometry.tilde_boundary(domain, float(r),
                                            n_samples=BOUNDARY_SAMPLES)
        else:
            curve = np.array([[-float(r)], [float(r)]])
        for k, vertex in enumerate(curve):
            rows.append([float(r), k] + list(vertex))
    serialize.write_csv(out_dir / "tilde_boundaries.csv",
                        ["r", "vertex"] + axes, rows)
    print(f"[{config.scenario}] geometry: wrote g_field.csv, f_field.csv, "
          f"tilde_boundaries.csv ({len(pts)} raster points)")
    return EXIT_OK


def run_flow(config: ExperimentConfig, out_dir: Path) -> int:
    domain = config.domain.build()
    symbol = config.symbol.build()
    window = config.window.build()
    fld = dilation.vector_field(domain, symbol)
    d = domain.dimension

    rng = np.random.default_rng(config.seed)
    vecs = rng.standard_normal((FLOW_DIRECTIONS, d))
    units = vecs / np.linalg.norm(vecs, axis=-1, keepdims=True)
    lo = np.sqrt(2.0 * window.e_min) * 1.05
    hi = np.sqrt(2.0 * window.e_max) * 0.95
    starts = units * rng.uniform(lo, hi, size=(FLOW_DIRECTIONS, 1))

    rows = []
    for t in FLOW_TIMES:
        res = dilation.integrate_flow(fld, starts, float(t))
        for i in range(FLOW_DIRECTIONS):
            resid = dilation.implicit_residual(symbol, starts[i], res.xi[i],
                                               float(t)) if t else 0.0
            rows.append([i, float(t)] + list(starts[i]) + list(res.xi[i])
                        + [float(res.eta[i]), float(resid)])
    header = (["sample", "t"] + [f"p{j + 1}" for j in range(d)]
              + [f"xi{j + 1}" for j in range(d)]
              + ["eta", "implicit_residual"])
    serialize.write_csv(out_dir / "flow_trajectories.csv", header, rows)
    print(f"[{config.scenario}] flow: wrote flow_trajectories.csv "
          f"({FLOW_DIRECTIONS} samples x {len(FLOW_TIMES)} times)")
    return EXIT_OK


def run_identities(config: ExperimentConfig, out_dir: Path) -> int:
    results = identities.run_suites(config)
    serialize.write_csv(out_dir / "identities.csv", identities.TABLE_HEADER,
                        (r.row() for r in results))
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"[{config.scenario}] {r.suite:>10s} {r.name:<{width}s} "
              f"{r.status:4s} value={serialize.format_float(r.value)} "
              f"bound={serialize.format_float(r.bound)}")
    ok = identities.all_passed(results)
    print(f"[{config.scenario}] identities: "
          f"{sum(r.passed for r in results)}/{len(results)} passed")
    return EXIT_OK if ok else EXIT_NUMERICAL


def run_delay(config: ExperimentConfig, out_dir: Path) -> int:
    setup = config.build_setup()
    psi = config.build_state(setup)
    domain = config.domain.build()
    symbol = config.symbol.build()
    cfg = config.sojourn.build()

    spectral.save_snapshot(out_dir / "incoming_state.snap", psi)
    with warnings.catch_warnings():
        # boundary contamination is a warning for library use; an
        # experiment driver treats it as a numerical failure
        warnings.simplefilter("error", BoundaryContamination)
        report = build_report(setup, domain, symbol, psi, cfg)
        spectral.save_snapshot(out_dir / "scattered_state.snap",
                               scattering.s_apply(setup, psi))

    serialize.write_json(out_dir / "report.json", report.to_dict())
    serialize.write_csv(out_dir / "report.csv", ["r", "tau_r", "tau_in_r"],
                        ([r, tau, tau_in] for (r, tau), (_, tau_in)
                         in zip(report.tau_r, report.tau_in_r)))
    print(f"[{config.scenario}] delay: tau_infinity="
          f"{report.tau_infinity:.6f} +- {report.tau_uncertainty:.1e}, "
          f"wigner={report.wigner_value:.6f}, "
          f"lavine={report.lavine_value:.6f}")
    for name, gaps in report.discrepancies.items():
        print(f"[{config.scenario}]   {name}: rel {gaps['relative']:.2%}")
    return EXIT_OK


COMMANDS = {
    "geometry": (run_geometry,),
    "flow": (run_flow,),
    "identities": (run_identities,),
    "delay": (run_delay,),
    "all": (run_geometry, run_flow, run_identities, run_delay),
}


def run_scenario(command: str, config: ExperimentConfig, out_root) -> int:
    out_dir = Path(out_root) if out_root is not None \
        else Path(config.output_dir)
    out_dir = out_dir / config.scenario if out_root is not None else out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(config, out_dir / "config.json")
    code = EXIT_OK
    try:
        for step in COMMANDS[command]:
            code = max(code, step(config, out_dir))
    except (SojournError, BoundaryContamination) as exc:
        print(f"[{config.scenario}] numerical failure: "
              f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return code


def _parse_radii(text: str) -> tuple:
    try:
        radii = tuple(float(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"--radii expects comma-separated numbers, "
                          f"got {text!r}")
    return radii


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sojourn",
        description="Sojourn-time and time-delay experiments on star-shaped "
                    "regions")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in (
            ("geometry", "export shape function, dilation field, and "
                         "rescaled boundaries"),
            ("flow", "export seeded momentum-space flow trajectories"),
            ("identities", "run every module invariant suite"),
            ("delay", "run the full time-delay pipeline"),
            ("all", "run geometry, flow, identities, then delay")):
        cmd = sub.add_parser(name, help=blurb)
        cmd.add_argument("--config", action="append", required=True,
                         metavar="PATH",
                         help="scenario file, or a bundled name: "
                              + ", ".join(BUNDLED_SCENARIOS))
        cmd.add_argument("--out", default=None, metavar="DIR",
                         help="output root (default: each scenario's "
                              "output_dir)")
        cmd.add_argument("--jobs", type=int, default=1, metavar="N",
                         help="worker processes across scenarios")
        cmd.add_argument("--radii", default=None, metavar="LIST",
                         help="override sojourn radii, comma separated")
        cmd.add_argument("--grid", type=int, default=None, metavar="N",
                         help="override grid points per axis")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        configs = []
        for entry in args.config:
            cfg = resolve_config(entry)
            if args.radii is not None:
                cfg = cfg.with_radii(_parse_radii(args.radii))
            if args.grid is not None:
                cfg = cfg.with_grid_n(args.grid)
            configs.append(cfg)
        if not (args.jobs or 0) >= 1:
            raise ConfigError("--jobs must be at least 1")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(run_scenario, [args.command] * len(configs),
                                  configs, [args.out] * len(configs)))
    else:
        codes = [run_scenario(args.command, cfg, args.out)
                 for cfg in configs]
    return max(codes) if codes else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
