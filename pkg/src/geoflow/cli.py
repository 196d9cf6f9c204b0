"""``geoflow`` command line: mesh generation, runs from JSON configs, self-checks."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__
from .config import ConfigError, load_config
from .diagnostics import sphere_error, surface_area
from .mesh import MeshError, MeshParseError, generate, mesh_quality, save_mesh
from .schemes import RunStatus, run_flow

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

log = logging.getLogger("geoflow")


def thread_cap():
    """Worker threads allowed by GEOFLOW_THREADS (default 1)."""
    raw = os.environ.get("GEOFLOW_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        log.warning("ignoring GEOFLOW_THREADS=%r", raw)
        return 1


def _mesh_params(args):
    shape = args.shape
    if shape == "icosphere":
        return {"subdivisions": args.subdiv, "radius": args.radius}
    if shape == "dumbbell":
        return {"n_theta": args.n_theta, "n_phi": args.n_phi}
    if shape in ("cuboid", "openbox"):
        if args.dims is None:
            raise ValueError(f"--dims is required for {shape}")
        return {"dims": args.dims, "h": args.h}
    if shape == "cap":
        return {"n_rings": args.rings, "contact_angle_degrees": args.angle, "radius": args.radius}
    return {"nx": args.rings, "ny": args.rings}


def cmd_mesh_gen(args):
    try:
        mesh = generate(args.shape, **_mesh_params(args))
    except (ValueError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        save_mesh(mesh, args.output, args.format)
    except OSError as exc:
        print(f"error: cannot write {args.output}: {exc}", file=sys.stderr)
        return EXIT_IO
    q = mesh_quality(mesh)
    print(f"vertices: {mesh.n_vertices}")
    print(f"triangles: {mesh.n_triangles}")
    print(f"area: {surface_area(mesh):.10g}")
    print(f"sigma_max: {q.sigma_max:.6g}")
    print(f"boundary loops: {len(mesh.boundary_loops)}")
    return EXIT_OK


def cmd_run(args):
    try:
        cfg = load_config(args.config, threads=thread_cap())
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        result = run_flow(cfg)
    except (MeshParseError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, MeshError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    last = result.records[-1]
    log.info("status %s at step %d, t = %.6g", result.status.value, last.step, last.time)
    src = cfg.mesh if isinstance(cfg.mesh, dict) else {}
    if src.get("generator") == "icosphere" and cfg.scheme.value.endswith("MCF") and last.time < 0.25:
        log.info("sphere error at t = %.6g: %.6e", last.time, sphere_error(result.final_mesh, last.time))
    print(f"{result.status.value}: {len(result.records)} records, final time {last.time:.6g}")
    if result.message:
        print(result.message)
    return EXIT_SOLVER if result.status is RunStatus.SOLVER_FAILURE else EXIT_OK


def cmd_verify(args):
    from .verify import format_table, run_suite

    results = run_suite(args.suite)
    print(format_table(results))
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed} passed, {failed} failed")
    return EXIT_OK if failed == 0 else 1


def build_parser():
    p = argparse.ArgumentParser(prog="geoflow", description="Parametric finite element geometric flows.")
    p.add_argument("--version", action="version", version=f"geoflow {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    mesh = sub.add_parser("mesh", help="mesh utilities")
    msub = mesh.add_subparsers(dest="mesh_command", required=True)
    gen = msub.add_parser("gen", help="generate a benchmark mesh")
    gen.add_argument("--shape", required=True, choices=["icosphere", "dumbbell", "cuboid", "openbox", "cap", "flat"])
    gen.add_argument("--subdiv", type=int, default=4)
    gen.add_argument("--radius", type=float, default=1.0)
    gen.add_argument("--dims", type=float, nargs=3, metavar=("LX", "LY", "LZ"))
    gen.add_argument("--h", type=float, default=0.2, help="target edge length for boxes")
    gen.add_argument("--n-theta", type=int, default=43)
    gen.add_argument("--n-phi", type=int, default=26)
    gen.add_argument("--rings", type=int, default=8)
    gen.add_argument("--angle", type=float, default=90.0, help="cap contact angle in degrees")
    gen.add_argument("-o", "--output", required=True)
    gen.add_argument("--format", choices=["off", "obj", "vtk"], default=None)
    gen.set_defaults(func=cmd_mesh_gen)

    run = sub.add_parser("run", help="run a flow from a JSON config")
    run.add_argument("config")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="run the built-in invariant checks")
    ver.add_argument("--suite", choices=["fast", "full"], default="fast")
    ver.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
