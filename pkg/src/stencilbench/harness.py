"""Benchmark harness: configuration, timing, verification, CSV emission.

A run seeds a grid deterministically (PCG64 from the configured seed,
uniform [0, 1) interior), converts it to the method's layout (timed
separately, but included in the total, so layout-conversion amortization
is observable), advances it the requested number of steps, and reports
wall time, GFlop/s, and the data-movement counters.  Verification runs
the scalar oracle from the same seed and reports the max relative error
over the interior.

GFlop/s is derived from the counters (point updates times flops per
point), which by construction equals interior points times steps for a
completed run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import GridBuffer, GridError, Layout, StencilSpec, alloc_grid, \
    alloc_like, flops_per_point, make_stencil_spec
from .kernels import Counters, METHODS, method_layout, scalar_step
from .tiling import TileSchedule, build_tessellation_1d, build_tessellation_2d
from .timejam import check_budget, jam_sweep
from .transpose import from_block_transpose, from_dlt, to_block_transpose, to_dlt

#: Verification is capped to sizes the oracle can sweep in reasonable time.
VERIFY_POINT_STEPS_LIMIT = 1 << 29

CSV_HEADER = ("stencil,method,vl,jam_k,size,steps,block,tile_height,threads,"
              "seconds,layout_seconds,gflops,max_rel_err,loads,stores,reorg_ops")


class UsageError(ValueError):
    """Invalid or conflicting benchmark configuration."""


@dataclass
class BenchConfig:
    stencil: str
    dims: tuple[int, ...]
    steps: int
    method: str
    vl: int = 4
    jam_k: int = 1
    block: tuple[int, ...] | None = None
    tile_height: int | None = None
    workers: int = 1
    seed: int = 12345
    csv_path: str | None = None
    verify: bool = False

    def spec(self) -> StencilSpec:
        return make_stencil_spec(self.stencil)


@dataclass
class BenchResult:
    config: BenchConfig
    seconds: float
    layout_seconds: float
    gflops: float
    counters: Counters
    max_rel_err: float | None = None
    tile_height_used: int | None = None

    def csv_row(self) -> str:
        cfg = self.config
        err = "" if self.max_rel_err is None else f"{self.max_rel_err:.17g}"
        block = "" if cfg.block is None else "x".join(map(str, cfg.block))
        th = "" if self.tile_height_used is None else str(self.tile_height_used)
        return ",".join([
            cfg.stencil, cfg.method, str(cfg.vl), str(cfg.jam_k),
            "x".join(map(str, cfg.dims)), str(cfg.steps), block, th,
            str(cfg.workers), f"{self.seconds:.17g}",
            f"{self.layout_seconds:.17g}", f"{self.gflops:.17g}", err,
            str(self.counters.element_loads(cfg.vl)),
            str(self.counters.element_stores(cfg.vl)),
            str(self.counters.reorg_ops),
        ])


def validate_config(cfg: BenchConfig) -> None:
    """Reject invalid combinations with a message naming the conflict."""
    spec = cfg.spec()
    if cfg.method not in METHODS:
        raise UsageError(f"--method {cfg.method}: unknown; "
                         f"choose from {', '.join(METHODS)}")
    if len(cfg.dims) != spec.d:
        raise UsageError(f"--size: {cfg.stencil} needs {spec.d} extents, "
                         f"got {len(cfg.dims)}")
    if cfg.steps < 1:
        raise UsageError(f"--steps {cfg.steps}: must be >= 1")
    if cfg.vl not in (4, 8):
        raise UsageError(f"--vl {cfg.vl}: supported vector lengths are 4 and 8")
    if cfg.jam_k not in (1, 2):
        raise UsageError(f"--jam-k {cfg.jam_k}: supported unroll factors are 1 and 2")
    if cfg.jam_k == 2:
        if cfg.method != "transpose":
            raise UsageError(f"--method {cfg.method} --jam-k 2: the time jam "
                             f"runs on the transpose layout only")
        if spec.d != 1:
            raise UsageError(f"--jam-k 2 with {cfg.stencil}: the register "
                             f"pipeline jams 1D stencils only")
        if cfg.steps % cfg.jam_k:
            raise UsageError(f"--steps {cfg.steps} --jam-k {cfg.jam_k}: steps "
                             f"must be divisible by the unroll factor")
        check_budget(spec, cfg.jam_k, cfg.vl)
    if cfg.block is not None:
        if cfg.method == "dlt":
            raise UsageError("--method dlt --block: tessellate tiling is not "
                             "supported for the dimension-lifted layout")
        if spec.d <= 2 and cfg.tile_height is None:
            raise UsageError("--block without --tile-height: temporal tiles "
                             "need a time height")
        if len(cfg.block) not in (1, spec.d):
            raise UsageError(f"--block: give 1 or {spec.d} extents")
    elif cfg.tile_height is not None:
        raise UsageError("--tile-height without --block")
    if cfg.workers < 1:
        raise UsageError(f"--threads {cfg.workers}: must be >= 1")


def _build_schedule(cfg: BenchConfig, spec: StencilSpec) -> TileSchedule | None:
    if cfg.block is None or spec.d == 3:
        return None
    block = cfg.block * spec.d if len(cfg.block) == 1 else cfg.block
    t_b = min(cfg.tile_height, cfg.steps)
    if spec.d == 1:
        return build_tessellation_1d(cfg.dims[0], block[0], t_b, spec.r,
                                     total_steps=cfg.steps)
    return build_tessellation_2d(cfg.dims, block, t_b, spec.r,
                                 total_steps=cfg.steps)


def seed_grid(cfg: BenchConfig, spec: StencilSpec,
              layout: Layout = Layout.NATURAL) -> GridBuffer:
    """Deterministically seeded natural grid, padded for ``layout``."""
    rng = np.random.default_rng(cfg.seed)
    grid = alloc_grid(spec, cfg.dims, Layout.NATURAL, cfg.vl,
                      pad_for=layout if layout is not Layout.NATURAL else None)
    grid.set_interior(rng.random(cfg.dims))
    return grid


def run_oracle(cfg: BenchConfig) -> np.ndarray:
    """T scalar-oracle steps from the configured seed."""
    spec = cfg.spec()
    a = seed_grid(cfg, spec)
    b = alloc_like(a)
    for _ in range(cfg.steps):
        scalar_step(a, b, spec)
        a, b = b, a
    return a.natural_interior()


def _warmup(cfg: BenchConfig, spec: StencilSpec) -> None:
    # One tiny sweep of the same method primes allocators and caches and
    # stays out of the timed region.
    small = max(4 * cfg.vl * cfg.vl, 8 * spec.r)
    wcfg = BenchConfig(cfg.stencil, (1,) * (spec.d - 1) + (small,), 1,
                       cfg.method, vl=cfg.vl, seed=cfg.seed)
    _execute(wcfg, spec, _build_schedule(wcfg, spec), Counters())


def _execute(cfg: BenchConfig, spec: StencilSpec,
             schedule: TileSchedule | None, counters: Counters
             ) -> tuple[np.ndarray, float, float]:
    """Run the configured pipeline; returns (result, total_s, layout_s)."""
    from .tiling import run_tiled

    layout = method_layout(cfg.method)
    grid = seed_grid(cfg, spec, layout)
    t_start = time.perf_counter()
    layout_s = 0.0
    if layout is Layout.BLOCK_TRANSPOSE:
        t0 = time.perf_counter()
        to_block_transpose(grid, cfg.vl)
        layout_s += time.perf_counter() - t0
    elif layout is Layout.DLT:
        t0 = time.perf_counter()
        to_dlt(grid, cfg.vl)
        layout_s += time.perf_counter() - t0
    if schedule is not None:
        run_tiled(grid, spec, schedule, cfg.method, jam_k=cfg.jam_k,
                  workers=cfg.workers, counters=counters)
        final = grid
    elif cfg.method == "transpose" and cfg.jam_k == 2:
        jam_sweep(grid, spec, cfg.jam_k, cfg.steps, counters)
        final = grid
    else:
        step = METHODS[cfg.method][1]
        other = alloc_like(grid)
        a, b = grid, other
        for _ in range(cfg.steps):
            step(a, b, spec, counters)
            a, b = b, a
        final = a
    if layout is Layout.BLOCK_TRANSPOSE:
        t0 = time.perf_counter()
        from_block_transpose(final)
        layout_s += time.perf_counter() - t0
    elif layout is Layout.DLT:
        t0 = time.perf_counter()
        from_dlt(final)
        layout_s += time.perf_counter() - t0
    total_s = time.perf_counter() - t_start
    return final.natural_interior(), total_s, layout_s


def max_rel_error(got: np.ndarray, want: np.ndarray) -> float:
    denom = np.maximum(np.abs(want), np.finfo(np.float64).tiny)
    return float(np.max(np.abs(got - want) / denom))


def run_benchmark(cfg: BenchConfig) -> BenchResult:
    """Execute one configuration and return timing, counters, and
    (when ``cfg.verify``) the max relative error against the oracle."""
    validate_config(cfg)
    spec = cfg.spec()
    schedule = _build_schedule(cfg, spec)
    _warmup(cfg, spec)
    counters = Counters()
    result, total_s, layout_s = _execute(cfg, spec, schedule, counters)
    flop_total = counters.point_updates * flops_per_point(spec)
    gflops = flop_total / max(total_s, 1e-12) / 1e9
    err = None
    if cfg.verify:
        err = max_rel_error(result, run_oracle(cfg))
    t_used = None
    if cfg.block is not None:
        t_used = 1 if spec.d == 3 else min(cfg.tile_height, cfg.steps)
    return BenchResult(cfg, total_s, layout_s, gflops, counters, err, t_used)


def verify(cfg: BenchConfig) -> float:
    """Run the pipeline and the oracle from one seed; return max rel error.

    Guarded: refuses problem sizes whose oracle sweep would be
    unreasonably large.
    """
    pts = 1
    for n in cfg.dims:
        pts *= n
    if pts * cfg.steps > VERIFY_POINT_STEPS_LIMIT:
        raise UsageError(
            f"verification of {pts} points x {cfg.steps} steps exceeds the "
            f"oracle guard ({VERIFY_POINT_STEPS_LIMIT} point-steps)")
    cfg.verify = True
    return run_benchmark(cfg).max_rel_err


def verify_tolerance(steps: int) -> float:
    """Accumulated per-step tolerance: 1e-13 relative per time step."""
    return 1e-13 * max(steps, 1)


def emit_csv(results, path: str) -> None:
    """Write results (header + one row each) with 17-significant-digit
    floats; field order is fixed and documented in CSV_HEADER."""
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(CSV_HEADER + "\n")
            for res in results:
                fh.write(res.csv_row() + "\n")
    except OSError as exc:
        raise UsageError(f"cannot write CSV to {path!r}: {exc}") from exc
