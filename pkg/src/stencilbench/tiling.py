"""Tessellate tiling: staged space-time tiles that cover every (point,
time level) exactly once, plus the parallel tile runner.

In 1D, stage 1 lays shrinking triangles over point bases [i*B, (i+1)*B];
the level-s update set of a triangle is [x0+r*s, x0+B-r*s] (endpoints
inclusive), so its final update counts form the profile min(dist/r, T_b)
peaking at the center.  Stage 2 lays expanding inverted triangles over
the shared base vertices (domain edges included, truncated); level s
covers [c-(r*s-1), c+(r*s-1)].  The per-level sets of the two stages
partition each level slab exactly, which makes one stage cycle advance
every point by exactly T_b levels with no redundant work.

In 2D the per-dimension shrink/expand profiles multiply: stage 1 is
shrink x shrink, stage 2 holds both mixed orientations (expand in one
dimension, shrink in the other - both families are needed for the
partition identity to hold), stage 3 is expand x expand: d+1 stages.

Execution keeps two level-parity arrays: values of time level t live in
``arrays[t % 2]``, so concurrent tiles never read a cell the current
level could overwrite.  B >= 2*r*T_b additionally keeps every cross-tile
read at least one stage-cycle away from any concurrent writer.  Within a
1D transpose-layout tile the interior advances through the register
pipeline k=2 levels per memory round trip; tile slopes and straddled
boundary vector sets fall back to single-level natural-order updates.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import GridBuffer, GridError, Layout, StencilSpec, unit_permutation
from .kernels import (Counters, METHODS, Range, method_layout, scalar_step,
                      transpose_layout_step)
from .timejam import ArrayEdges, boot, drain, pipeline_advance

SHRINK = "shrink"
EXPAND = "expand"


class TessellationError(ValueError):
    """Schedule constraints violated (named inequality in the message)."""


@dataclass(frozen=True)
class Tile:
    """One space-time tile: per-dimension profile over levels 1..T_b.

    ``modes[i]`` is shrink (triangle over base ``anchors[i]``..+B) or
    expand (inverted triangle around vertex ``anchors[i]``); ``growth``
    is the per-step per-side extent change: -r when shrinking, +r when
    expanding.
    """

    stage: int
    modes: tuple[str, ...]
    anchors: tuple[int, ...]
    sizes: tuple[int, ...]      # base B per dimension (shrink dims)
    n: tuple[int, ...]          # domain extents, for clamping
    r: int
    t_height: int

    @property
    def growth(self) -> tuple[int, ...]:
        return tuple(-self.r if m == SHRINK else self.r for m in self.modes)

    def slab(self, s: int) -> tuple[Range, ...] | None:
        """Cell ranges updated at tile-local level ``s`` (1-based), or
        None when any dimension pinches off."""
        out = []
        for mode, a, size, n in zip(self.modes, self.anchors, self.sizes, self.n):
            if mode == SHRINK:
                lo, hi = a + self.r * s, a + size - self.r * s + 1
            else:
                lo, hi = a - (self.r * s - 1), a + (self.r * s - 1) + 1
            lo, hi = max(lo, 0), min(hi, n)
            if lo >= hi:
                return None
            out.append((lo, hi))
        return tuple(out)


@dataclass(frozen=True)
class TileSchedule:
    """Staged disjoint tiles covering T_b levels per stage cycle."""

    stages: tuple[tuple[Tile, ...], ...]
    n: tuple[int, ...]
    block: tuple[int, ...]
    t_height: int
    r: int
    total_steps: int

    @property
    def d(self) -> int:
        return len(self.n)

    def with_height(self, t_height: int, total_steps: int) -> "TileSchedule":
        build = build_tessellation_1d if self.d == 1 else build_tessellation_2d
        return build(self.n if self.d > 1 else self.n[0],
                     self.block if self.d > 1 else self.block[0],
                     t_height, self.r, total_steps=total_steps)


def _check_dim(n: int, B: int, T_b: int, r: int, axis: int) -> None:
    if T_b < 1:
        raise TessellationError(f"tile height must be >= 1, got {T_b}")
    if n % B:
        raise TessellationError(
            f"axis {axis}: block size B={B} does not divide extent n={n}")
    if B < 2 * r * T_b:
        raise TessellationError(
            f"axis {axis}: B >= 2*r*T_b violated ({B} < 2*{r}*{T_b} = {2 * r * T_b}); "
            f"triangles would invert")


def build_tessellation_1d(n: int, B: int, T_b: int, r: int,
                          total_steps: int | None = None) -> TileSchedule:
    """Triangles (stage 1) and inverted triangles (stage 2) over n cells."""
    _check_dim(n, B, T_b, r, 0)
    nz = (n,)
    stage1 = tuple(Tile(1, (SHRINK,), (x0,), (B,), nz, r, T_b)
                   for x0 in range(0, n, B))
    stage2 = tuple(Tile(2, (EXPAND,), (c,), (B,), nz, r, T_b)
                   for c in range(0, n + 1, B))
    return TileSchedule((stage1, stage2), nz, (B,), T_b, r,
                        total_steps if total_steps is not None else T_b)


def build_tessellation_2d(n: Sequence[int], B: int | Sequence[int], T_b: int,
                          r: int, total_steps: int | None = None) -> TileSchedule:
    """Three stages: pyramid, both mixed wedge orientations, inverted pyramid."""
    n = tuple(n)
    B = (B, B) if isinstance(B, int) else tuple(B)
    for ax in range(2):
        _check_dim(n[ax], B[ax], T_b, r, ax)
    bases = [range(0, n[ax], B[ax]) for ax in range(2)]
    verts = [range(0, n[ax] + 1, B[ax]) for ax in range(2)]
    stage1 = tuple(Tile(1, (SHRINK, SHRINK), (y, x), B, n, r, T_b)
                   for y in bases[0] for x in bases[1])
    stage2 = tuple(Tile(2, (EXPAND, SHRINK), (y, x), B, n, r, T_b)
                   for y in verts[0] for x in bases[1])
    stage2 += tuple(Tile(2, (SHRINK, EXPAND), (y, x), B, n, r, T_b)
                    for y in bases[0] for x in verts[1])
    stage3 = tuple(Tile(3, (EXPAND, EXPAND), (y, x), B, n, r, T_b)
                   for y in verts[0] for x in verts[1])
    return TileSchedule((stage1, stage2, stage3), n, B, T_b, r,
                        total_steps if total_steps is not None else T_b)


def update_count_map(schedule: TileSchedule, n: int | Sequence[int] | None = None
                     ) -> np.ndarray:
    """Simulate tile execution order and return per-point update counts.

    Raises with coordinates if any (point, level) pair would be computed
    twice or out of order - the no-redundancy proof hook for tests.
    """
    dims = schedule.n if n is None else ((n,) if isinstance(n, int) else tuple(n))
    if dims != schedule.n:
        raise TessellationError(f"schedule built for {schedule.n}, asked for {dims}")
    level = np.zeros(dims, dtype=np.int64)
    done = 0
    remaining = schedule.total_steps
    while remaining > 0:
        tb = min(schedule.t_height, remaining)
        sched = schedule if tb == schedule.t_height else schedule.with_height(tb, tb)
        for stage in sched.stages:
            for tile in stage:
                for s in range(1, tb + 1):
                    slab = tile.slab(s)
                    if slab is None:
                        continue
                    sl = tuple(slice(lo, hi) for lo, hi in slab)
                    want = done + s - 1
                    if not np.all(level[sl] == want):
                        bad = np.argwhere(level[sl] != want)[0]
                        coord = tuple(int(b + lo) for b, (lo, _) in zip(bad, slab))
                        raise TessellationError(
                            f"point {coord} at level {int(level[coord])} "
                            f"updated to {done + s} (stage {tile.stage})")
                    level[sl] = done + s
        done += tb
        remaining -= tb
    return level


# --- execution --------------------------------------------------------------


def boundary_vs_pass(src: GridBuffer, dst: GridBuffer, spec: StencilSpec,
                     unit_range: Range,
                     outer_ranges: Sequence[Range] | None = None,
                     counters: Counters | None = None) -> None:
    """Update the in-tile lanes of a straddled vector set.

    A tile edge strictly inside a vl*vl block makes that block's vector
    set unusable as a unit, so its cells are handled in natural order:
    the block is read through the de-transposing permutation (the same
    one the shuffle plan realizes), the covered lanes are updated by the
    natural-layout reorganization arithmetic, and the results land back
    in transposed storage.  Lanes outside ``unit_range`` and all other
    vector sets are untouched.  A range that covers whole blocks only is
    a no-op for this pass (the caller routes those to the vector path).
    """
    lo, hi = unit_range
    if lo >= hi:
        return
    vl2 = src.vl * src.vl
    if lo // vl2 != (hi - 1) // vl2:
        raise GridError(f"straddle range {unit_range} spans multiple blocks")
    hu = src.halo_unit
    dst_osl = _outer_slices_nd(dst, outer_ranges, None)
    cells = np.arange(lo, hi)
    dst_cols = hu + _storage_cols(src, cells)
    acc = np.zeros(_osl_shape(dst, dst_osl) + (hi - lo,))
    for off in spec.offsets:
        src_osl = _outer_slices_nd(src, outer_ranges, off[:-1])
        cols = hu + _storage_cols(src, cells + off[-1])
        acc += spec.weights[off] * src.data[src_osl + (cols,)]
    dst.data[dst_osl + (dst_cols,)] = acc
    if counters is not None:
        rows = 1
        for s in _osl_shape(dst, dst_osl):
            rows *= s
        counters.scalar_loads += len(spec.weights) * (hi - lo) * rows
        counters.scalar_stores += (hi - lo) * rows
        counters.point_updates += (hi - lo) * rows
        counters.reorg_ops += 2 * len(spec.offsets)  # de/re-transpose passes


def _storage_cols(grid: GridBuffer, cells: np.ndarray) -> np.ndarray:
    perm = unit_permutation(grid.layout, grid.unit_np, grid.vl)
    inside = (cells >= 0) & (cells < grid.unit_np)
    return np.where(inside, perm[np.clip(cells, 0, grid.unit_np - 1)], cells)


def _outer_slices_nd(grid: GridBuffer, outer_ranges, shift) -> tuple[slice, ...]:
    ho = grid.halo_outer
    outer_dims = grid.dims[:-1]
    if outer_ranges is None:
        outer_ranges = [(0, m) for m in outer_dims]
    shift = shift or (0,) * len(outer_dims)
    return tuple(slice(ho + lo + s, ho + hi + s)
                 for (lo, hi), s in zip(outer_ranges, shift))


def _osl_shape(grid: GridBuffer, osl: tuple[slice, ...]) -> tuple[int, ...]:
    return tuple(sl.stop - sl.start for sl in osl)


def _span_step_bt(src: GridBuffer, dst: GridBuffer, spec: StencilSpec,
                  unit_range: Range, outer_ranges: Sequence[Range] | None,
                  counters: Counters | None) -> None:
    """One level over a unit-stride cell span of a block-transpose grid:
    whole blocks through the vector path, straddles through
    :func:`boundary_vs_pass`."""
    lo, hi = unit_range
    vl2 = src.vl * src.vl
    b0 = -(-lo // vl2)
    b1 = hi // vl2
    if b0 < b1:
        transpose_layout_step(src, dst, spec, counters, blocks=(b0, b1),
                              outer_ranges=outer_ranges)
        if lo < b0 * vl2:
            boundary_vs_pass(src, dst, spec, (lo, b0 * vl2), outer_ranges, counters)
        if b1 * vl2 < hi:
            boundary_vs_pass(src, dst, spec, (b1 * vl2, hi), outer_ranges, counters)
    else:
        # The span lies inside one or two partial blocks.
        split = min(hi, b0 * vl2)
        boundary_vs_pass(src, dst, spec, (lo, split), outer_ranges, counters)
        if split < hi:
            boundary_vs_pass(src, dst, spec, (split, hi), outer_ranges, counters)


def _range_subtract(outer: Range, inner: Range) -> list[Range]:
    parts = []
    if inner[0] > outer[0]:
        parts.append((outer[0], min(inner[0], outer[1])))
    if inner[1] < outer[1]:
        parts.append((max(inner[1], outer[0]), outer[1]))
    return [p for p in parts if p[0] < p[1]]


def _spill_edges(arr: GridBuffer, vs, block: int, first: int, last: int, r: int) -> None:
    """Write the pipeline-internal odd-level values of the jammed range's
    outermost r cells to the odd-parity array, where the slope updates of
    the enclosing tile expect to read them."""
    vl = arr.vl
    if block == first:
        base = block * vl * vl
        for m in range(r):
            arr.data[arr.storage_col(base + m)] = vs.rows[m][0]
    if block == last:
        end = (block + 1) * vl * vl
        for m in range(r):
            arr.data[arr.storage_col(end - 1 - m)] = vs.rows[vl - 1 - m][vl - 1]


def _jam_levels(tile: Tile, arrays, spec: StencilSpec, base_level: int, s: int,
                counters: Counters | None) -> None:
    """Advance tile levels s and s+1 together through the register
    pipeline where the geometry allows, single-level elsewhere."""
    vl2 = arrays[0].vl * arrays[0].vl
    s1 = tile.slab(s)
    s2 = tile.slab(s + 1)
    a_u = arrays[(base_level + s - 1) % 2]
    a_v = arrays[(base_level + s) % 2]
    if s1 is None and s2 is None:
        return
    core = None
    if s1 and s2:
        core = (max(s1[0][0], s2[0][0]), min(s1[0][1], s2[0][1]))
    if core:
        b0 = -(-core[0] // vl2)
        b1 = core[1] // vl2
    if not core or b1 - b0 < 3:
        # Shrink margin too thin for a k=2 pipeline: plain level pair.
        _run_tile_level(tile, arrays, spec, "transpose", base_level, s, counters)
        _run_tile_level(tile, arrays, spec, "transpose", base_level, s + 1, counters)
        return
    j_lo, j_hi = b0 * vl2, b1 * vl2
    for part in _range_subtract(s1[0], (j_lo, j_hi)):
        _span_step_bt(a_u, a_v, spec, part, None, counters)
    edges = ArrayEdges([a_u, a_v], spec, (b0, b1))
    state = boot(a_u, spec, 2, blocks=(b0, b1), edges=edges, store_grid=a_u,
                 counters=counters,
                 on_level=(lambda blk, vs, lvl, _f=b0, _l=b1 - 1:
                           _spill_edges(a_v, vs, blk, _f, _l, spec.r)
                           if lvl == 1 else None))
    while not state.exhausted:
        pipeline_advance(state)
    drain(state)
    for part in _range_subtract(s2[0], (j_lo, j_hi)):
        _span_step_bt(a_v, a_u, spec, part, None, counters)
    if counters is not None:
        counters.point_updates += 2 * (j_hi - j_lo)


def _run_tile_level(tile: Tile, arrays, spec: StencilSpec, method: str,
                    base_level: int, s: int, counters: Counters | None) -> None:
    slab = tile.slab(s)
    if slab is None:
        return
    src = arrays[(base_level + s - 1) % 2]
    dst = arrays[(base_level + s) % 2]
    if method == "transpose":
        _span_step_bt(src, dst, spec, slab[-1], slab[:-1] or None, counters)
    else:
        METHODS[method][1](src, dst, spec, counters, ranges=slab)


def _run_tile(tile: Tile, arrays, spec: StencilSpec, method: str, jam_k: int,
              base_level: int, t_height: int) -> Counters:
    counters = Counters()
    s = 1
    jam_ok = (jam_k == 2 and method == "transpose" and len(tile.n) == 1)
    while s <= t_height:
        if jam_ok and s + 1 <= t_height:
            _jam_levels(tile, arrays, spec, base_level, s, counters)
            s += 2
        else:
            _run_tile_level(tile, arrays, spec, method, base_level, s, counters)
            s += 1
    return counters


def run_tiled(grid: GridBuffer, spec: StencilSpec, schedule: TileSchedule,
              method: str, jam_k: int = 1, workers: int = 1,
              counters: Counters | None = None) -> None:
    """Execute the schedule: stages in order with a barrier between them,
    tiles of a stage on up to ``workers`` threads.

    The grid advances ``schedule.total_steps`` levels in place.  Output
    is bit-identical for any worker count: tiles of a stage have
    disjoint write sets and all reads are level-parity isolated.
    """
    if method not in METHODS:
        raise GridError(f"unknown method {method!r}")
    if method == "dlt":
        raise GridError("the dimension-lifted layout scatters neighbors "
                        "across substreams; tessellate tiling is not "
                        "supported for it")
    if method_layout(method) is not grid.layout:
        raise GridError(f"method {method!r} needs {method_layout(method).value} "
                        f"layout, grid is {grid.layout.value}")
    if schedule.n != grid.dims:
        raise TessellationError(f"schedule is for {schedule.n}, grid is {grid.dims}")
    if jam_k == 2 and (method != "transpose" or spec.d != 1):
        raise GridError("jam k=2 under tiling applies to the 1D transpose method")
    partner = grid.clone()
    arrays = (grid, partner)
    done = 0
    remaining = schedule.total_steps
    while remaining > 0:
        tb = min(schedule.t_height, remaining)
        sched = schedule if tb == schedule.t_height else schedule.with_height(tb, tb)
        for stage in sched.stages:
            if workers > 1 and len(stage) > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    results = list(pool.map(
                        lambda t: _run_tile(t, arrays, spec, method, jam_k, done, tb),
                        stage))
            else:
                results = [_run_tile(t, arrays, spec, method, jam_k, done, tb)
                           for t in stage]
            if counters is not None:
                for c in results:
                    counters.merge(c)
        done += tb
        remaining -= tb
    if done % 2 == 1:
        grid.data[...] = partner.data


def format_schedule(schedule: TileSchedule, jam_k: int = 1) -> str:
    """Schedule dump: per stage, tile count and one sample geometry."""
    lines = [f"tessellation over n={schedule.n}: block={schedule.block} "
             f"height={schedule.t_height} r={schedule.r} "
             f"steps={schedule.total_steps}"]
    for i, stage in enumerate(schedule.stages, 1):
        t = stage[0]
        lines.append(
            f"stage {i}: {len(stage)} tiles; sample: modes={t.modes} "
            f"anchor={t.anchors} growth/side={t.growth} "
            f"first slab={t.slab(1)} last slab={t.slab(t.t_height)}")
    if jam_k > 1:
        lines.append(
            f"jam k={jam_k}: interior block runs pipelined; tile slopes and "
            f"straddled vector sets fall back to single-level updates")
    return "\n".join(lines)
