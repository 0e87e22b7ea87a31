"""Command-line front end.

Subcommands:

* ``run``     time a configuration, print a summary, optionally emit CSV
* ``verify``  run the pipeline and the scalar oracle from one seed; exit
              status 1 when the max relative error exceeds 1e-13 per step
* ``plan``    print the register-transpose shuffle plan with its issue
              schedule, and a tile-schedule dump when block parameters
              are given

Defaults: ``--vl 4 --jam-k 1 --steps 16 --threads 1 --seed 12345``.
"""

from __future__ import annotations

import argparse
import sys

from .core import PRESET_NAMES, SpecError, GridError, make_stencil_spec
from .harness import (BenchConfig, UsageError, emit_csv, run_benchmark,
                      verify_tolerance)
from .simd import LatencyModel
from .tiling import TessellationError, format_schedule
from .timejam import BudgetError
from .transpose import build_transpose_plan, format_plan


def _parse_extents(text: str, what: str) -> tuple[int, ...]:
    try:
        parts = tuple(int(p) for p in text.lower().replace(",", "x").split("x"))
    except ValueError:
        raise UsageError(f"{what} {text!r}: expected N or NxM[xK]") from None
    if not parts or any(p <= 0 for p in parts):
        raise UsageError(f"{what} {text!r}: extents must be positive")
    return parts


def _add_common(p: argparse.ArgumentParser, need_method: bool) -> None:
    p.add_argument("--stencil", required=True, choices=PRESET_NAMES,
                   help="stencil preset")
    p.add_argument("--size", required=True,
                   help="interior extents: N (broadcast per dimension) or NxM[xK]")
    p.add_argument("--steps", type=int, default=16, help="time steps (default 16)")
    p.add_argument("--method", required=need_method,
                   choices=["scalar", "multiload", "reorg", "dlt", "transpose"],
                   help="update method")
    p.add_argument("--jam-k", type=int, default=1, dest="jam_k",
                   help="time-unroll factor, 1 or 2 (transpose only; default 1)")
    p.add_argument("--vl", type=int, default=4, help="vector lanes, 4 or 8 (default 4)")
    p.add_argument("--block", help="spatial block size B (or BxB2) for tiling")
    p.add_argument("--tile-height", type=int, dest="tile_height",
                   help="temporal tile height T_b")
    p.add_argument("--threads", type=int, default=1, help="tile workers (default 1)")
    p.add_argument("--seed", type=int, default=12345, help="grid seed (default 12345)")
    p.add_argument("--csv", dest="csv", help="append-style CSV output path")


def parse_cli(argv) -> argparse.Namespace:
    """Parse argv into a namespace with ``command`` plus a BenchConfig
    (``cfg``) for run/verify; unknown flags and invalid combinations are
    rejected with a usage message naming the conflict."""
    parser = argparse.ArgumentParser(
        prog="stencilbench",
        description="Stencil kernels over transpose layouts: benchmark, "
                    "verify, and inspect shuffle/tile plans.")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="time a configuration")
    _add_common(run_p, need_method=True)
    run_p.add_argument("--verify", action="store_true",
                       help="also compare against the scalar oracle")
    ver_p = sub.add_parser("verify", help="compare a pipeline against the oracle")
    _add_common(ver_p, need_method=True)
    plan_p = sub.add_parser("plan", help="print shuffle and tile schedules")
    plan_p.add_argument("--vl", type=int, default=4)
    plan_p.add_argument("--stencil", choices=PRESET_NAMES)
    plan_p.add_argument("--size")
    plan_p.add_argument("--steps", type=int, default=None)
    plan_p.add_argument("--jam-k", type=int, default=1, dest="jam_k")
    plan_p.add_argument("--block")
    plan_p.add_argument("--tile-height", type=int, dest="tile_height")
    args = parser.parse_args(argv)
    if args.command in ("run", "verify"):
        spec = make_stencil_spec(args.stencil)
        dims = _parse_extents(args.size, "--size")
        if len(dims) == 1 and spec.d > 1:
            dims = dims * spec.d
        block = _parse_extents(args.block, "--block") if args.block else None
        args.cfg = BenchConfig(
            stencil=args.stencil, dims=dims, steps=args.steps,
            method=args.method, vl=args.vl, jam_k=args.jam_k, block=block,
            tile_height=args.tile_height, workers=args.threads,
            seed=args.seed, csv_path=args.csv,
            verify=(args.command == "verify" or getattr(args, "verify", False)))
    return args


def _cmd_run(args) -> int:
    res = run_benchmark(args.cfg)
    cfg = args.cfg
    print(f"{cfg.stencil} {cfg.method} vl={cfg.vl} jam_k={cfg.jam_k} "
          f"size={'x'.join(map(str, cfg.dims))} steps={cfg.steps} "
          f"threads={cfg.workers}")
    print(f"  wall {res.seconds:.6f} s (layout {res.layout_seconds:.6f} s)  "
          f"{res.gflops:.3f} GFlop/s")
    c = res.counters
    print(f"  element loads {c.element_loads(cfg.vl)}  "
          f"stores {c.element_stores(cfg.vl)}  reorg ops {c.reorg_ops}")
    if res.max_rel_err is not None:
        print(f"  max rel err vs oracle: {res.max_rel_err:.3e}")
    if cfg.csv_path:
        emit_csv([res], cfg.csv_path)
        print(f"  csv -> {cfg.csv_path}")
    return 0


def _cmd_verify(args) -> int:
    res = run_benchmark(args.cfg)
    tol = verify_tolerance(args.cfg.steps)
    err = res.max_rel_err
    status = "PASS" if err <= tol else "FAIL"
    print(f"{status} {args.cfg.stencil} {args.cfg.method} "
          f"jam_k={args.cfg.jam_k}: max rel err {err:.3e} "
          f"(tolerance {tol:.3e} over {args.cfg.steps} steps)")
    if args.cfg.csv_path:
        emit_csv([res], args.cfg.csv_path)
    return 0 if err <= tol else 1


def _cmd_plan(args) -> int:
    plan = build_transpose_plan(args.vl)
    print(format_plan(plan, LatencyModel()))
    if args.block:
        if not (args.stencil and args.size and args.tile_height):
            raise UsageError("plan --block needs --stencil, --size and "
                             "--tile-height to shape the tile schedule")
        from .tiling import build_tessellation_1d, build_tessellation_2d
        spec = make_stencil_spec(args.stencil)
        dims = _parse_extents(args.size, "--size")
        if len(dims) == 1 and spec.d > 1:
            dims = dims * spec.d
        block = _parse_extents(args.block, "--block")
        if spec.d == 1:
            sched = build_tessellation_1d(dims[0], block[0], args.tile_height,
                                          spec.r, total_steps=args.steps)
        elif spec.d == 2:
            sched = build_tessellation_2d(dims, block * 2 if len(block) == 1
                                          else block, args.tile_height, spec.r,
                                          total_steps=args.steps)
        else:
            print("3D presets run spatially blocked with the time loop "
                  "outermost; no temporal tile schedule to dump")
            return 0
        print()
        print(format_schedule(sched, args.jam_k))
    return 0


def main(argv=None) -> int:
    try:
        args = parse_cli(argv if argv is not None else sys.argv[1:])
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "verify":
            return _cmd_verify(args)
        return _cmd_plan(args)
    except (UsageError, SpecError, GridError, BudgetError,
            TessellationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
