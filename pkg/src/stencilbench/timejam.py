"""Unroll-and-jam of the time loop over the block-transpose layout.

The pipeline keeps k+1 vector sets in flight and advances each one k
time levels between its load and its store, so every element touches
memory once per k steps instead of once per step.  In-place updating
overwrites previous-level values, so each live set's predecessor keeps
its pre-update rightmost rows (``vrl``) as the left dependency at the
matching time level; the right dependency is the fresher neighbor's
first rows.

Register budget: k vector sets plus k preserved vectors plus one
coefficient register per weight must fit the architectural file of
4*vl vector registers, which is what pins k = 2 in practice.

``boot`` fills the pipeline (set i pre-advanced k-i times against the
left boundary), ``pipeline_advance`` runs the steady state, ``drain``
retires the tail against the right boundary.  Boundaries default to the
Dirichlet halo of the grid; the tile runner swaps in providers that read
neighbor cells from its level-parity arrays instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from .core import GridBuffer, GridError, Layout, StencilSpec, VectorSet
from .kernels import (Counters, Range, assemble_left, assemble_right,
                      load_vector_set, store_vector_set, vs_step)
from .simd import VectorValue


class BudgetError(ValueError):
    """Register budget exceeded for the requested unroll factor."""


def register_budget(spec: StencilSpec, k: int, vl: int) -> int:
    """Live vector registers needed: (vl+1)*k plus one per coefficient."""
    return (vl + 1) * k + len(spec.weights)


def check_budget(spec: StencilSpec, k: int, vl: int) -> int:
    budget = register_budget(spec, k, vl)
    limit = 4 * vl
    if budget > limit:
        raise BudgetError(
            f"unroll factor k={k} needs {budget} vector registers "
            f"((vl+1)*k + {len(spec.weights)} coefficients) but only "
            f"{limit} (= 4*vl) are available")
    return budget


class HaloEdges:
    """Dirichlet boundary provider: halo cells, fixed at every time level."""

    def __init__(self, grid: GridBuffer, spec: StencilSpec,
                 outer: tuple[int, ...] = ()):
        vl, r, hu = grid.vl, spec.r, grid.halo_unit
        row = grid.data[tuple(grid.halo_outer + i for i in outer)]
        self._left = tuple(
            VectorValue((0.0,) * (vl - 1) + (float(row[hu - m]),))
            for m in range(1, r + 1))
        self._right = tuple(
            VectorValue((float(row[hu + grid.unit_np + j]),) + (0.0,) * (vl - 1))
            for j in range(r))

    def left_rows(self, level: int) -> tuple[VectorValue, ...]:
        return self._left

    def right_rows(self, level: int) -> tuple[VectorValue, ...]:
        return self._right


class ArrayEdges:
    """Boundary provider reading neighbor cells from per-level arrays.

    ``arrays[level]`` is the grid holding values of that (pipeline-local)
    time level; used by the tile runner, whose tiles abut ordinary grid
    cells rather than halo.
    """

    def __init__(self, arrays: Sequence[GridBuffer], spec: StencilSpec,
                 blocks: Range, outer: tuple[int, ...] = ()):
        self.arrays = arrays
        self.r = spec.r
        self.blocks = blocks
        self.outer = outer

    def _cell(self, level: int, unit_index: int) -> float:
        g = self.arrays[level]
        row = g.data[tuple(g.halo_outer + i for i in self.outer)]
        return float(row[g.storage_col(unit_index)])

    def left_rows(self, level: int) -> tuple[VectorValue, ...]:
        g = self.arrays[level]
        vl = g.vl
        base = self.blocks[0] * vl * vl
        return tuple(
            VectorValue((0.0,) * (vl - 1) + (self._cell(level, base - m),))
            for m in range(1, self.r + 1))

    def right_rows(self, level: int) -> tuple[VectorValue, ...]:
        g = self.arrays[level]
        vl = g.vl
        end = self.blocks[1] * vl * vl
        return tuple(
            VectorValue((self._cell(level, end + j),) + (0.0,) * (vl - 1))
            for j in range(self.r))


@dataclass
class JamState:
    """The in-flight pipeline: live vector sets, of descending time level.

    ``sets[i]`` holds block ``first_block + stores_done + i`` at time
    level ``levels[i]``; after boot the levels run k-1 down to 0.
    ``vrl[i]`` preserves the pre-update rightmost rows of ``sets[i]``'s
    left neighbor at level ``levels[i]`` (None for the leftmost set,
    whose left dependency comes from the boundary provider).
    """

    grid: GridBuffer
    spec: StencilSpec
    k: int
    blocks: Range
    edges: object
    store_grid: GridBuffer
    sets: list[VectorSet] = field(default_factory=list)
    levels: list[int] = field(default_factory=list)
    vrl: list = field(default_factory=list)
    cursor: int = 0
    outer: tuple[int, ...] = ()
    counters: Counters | None = None
    on_level: Callable | None = None

    @property
    def exhausted(self) -> bool:
        return self.cursor >= self.blocks[1]


def _load(state: JamState, block: int) -> VectorSet:
    vs = load_vector_set(state.grid, block, state.outer)
    if state.counters is not None:
        state.counters.vs_loads += 1
        state.counters.vec_loads += state.grid.vl
    return vs


def _store(state: JamState, vs: VectorSet, block: int) -> None:
    store_vector_set(state.store_grid, vs, block, state.outer)
    if state.counters is not None:
        state.counters.vs_stores += 1
        state.counters.vec_stores += state.grid.vl


def _pad_positions(grid: GridBuffer) -> dict[int, tuple[int, ...]]:
    """(row -> lanes) of Dirichlet padding cells inside the last block."""
    vl = grid.vl
    base = (grid.n_blocks - 1) * vl * vl
    pads: dict[int, list[int]] = {}
    for o in range(max(0, grid.unit_n - base), vl * vl):
        pads.setdefault(o % vl, []).append(o // vl)
    return {j: tuple(ls) for j, ls in pads.items()}


def _advance_set(state: JamState, i: int) -> None:
    """Advance sets[i] one time level in place (registers only)."""
    spec, r = state.spec, state.spec.r
    vs = state.sets[i]
    vl = vs.vl
    capture = tuple(vs.rows[vl - m] for m in range(1, r + 1))
    left_raw = state.vrl[i]
    if left_raw is None:
        left_raw = state.edges.left_rows(state.levels[i])
    if i + 1 < len(state.sets):
        nxt = state.sets[i + 1].rows
    else:
        nxt = state.edges.right_rows(state.levels[i])
    # Tuple forms of assemble_left/right (blend keeping one boundary
    # lane, then the one-lane rotate); pinned equal to the simd ops by
    # the kernel tests.
    left = tuple(
        VectorValue((left_raw[m - 1].lanes[-1],) + vs.rows[vl - m].lanes[:-1])
        for m in range(1, r + 1))
    right = tuple(
        VectorValue(vs.rows[m - 1].lanes[1:] + (nxt[m - 1].lanes[0],))
        for m in range(1, r + 1))
    new = vs_step(vs, left, right, None, spec)
    block = state.cursor - len(state.sets) + i
    if block == state.grid.n_blocks - 1 and state.grid.unit_np != state.grid.unit_n:
        pads = _pad_positions(state.grid)
        rows = list(new.rows)
        for j, lanes in pads.items():
            vals = list(rows[j].lanes)
            for l in lanes:
                vals[l] = 0.0
            rows[j] = VectorValue(vals)
        new = VectorSet(tuple(rows), new.base)
    state.sets[i] = new
    state.levels[i] += 1
    if i + 1 < len(state.vrl):
        state.vrl[i + 1] = capture
    elif i + 1 == len(state.vrl):
        state.vrl.append(capture)
    if state.counters is not None:
        state.counters.reorg_ops += 4 * r
    if state.on_level is not None:
        state.on_level(block, state.sets[i], state.levels[i])


def boot(grid: GridBuffer, spec: StencilSpec, k: int, *,
         blocks: Range | None = None, edges=None,
         store_grid: GridBuffer | None = None,
         outer: tuple[int, ...] = (), counters: Counters | None = None,
         on_level: Callable | None = None) -> JamState:
    """Validate the configuration and fill the pipeline head.

    Loads the first k vector sets and advances set i by k-i levels
    against the left boundary, capturing each preserved-row entry, so
    the steady-state loop can run.
    """
    check_budget(spec, k, grid.vl)
    if k not in (1, 2):
        raise GridError(f"unroll factor k={k} unsupported; this pipeline jams k in {{1, 2}}")
    if spec.d != 1:
        raise GridError("the time jam is one-dimensional")
    if spec.r > 2:
        raise GridError(f"jam supports order r <= 2, got {spec.r}")
    if grid.layout is not Layout.BLOCK_TRANSPOSE:
        raise GridError("jam runs on block-transpose grids")
    blocks = blocks if blocks is not None else (0, grid.n_blocks)
    if blocks[1] - blocks[0] < k + 1:
        raise GridError(f"need at least {k + 1} blocks to jam k={k}, "
                        f"got {blocks[1] - blocks[0]}")
    state = JamState(grid, spec, k, blocks, edges or HaloEdges(grid, spec, outer),
                     store_grid if store_grid is not None else grid,
                     outer=outer, counters=counters, on_level=on_level)
    state.cursor = blocks[0]
    for _ in range(k):
        state.sets.append(_load(state, state.cursor))
        state.levels.append(0)
        state.vrl.append(None)
        state.cursor += 1
    # Fill the pipeline: with k=2 that is one advance of the head set.
    for _ in range(k - 1):
        _advance_set(state, 0)
    return state


def pipeline_advance(state: JamState, grid: GridBuffer | None = None,
                     spec: StencilSpec | None = None) -> None:
    """One steady-state iteration: load one set, advance k sets right to
    left, store the leftmost (now at level k), shift the ring."""
    if grid is not None and grid is not state.grid:
        raise GridError("state was booted on a different grid")
    if spec is not None and spec is not state.spec:
        raise GridError("state was booted on a different spec")
    if state.exhausted:
        raise GridError("no blocks left to load; run drain()")
    state.sets.append(_load(state, state.cursor))
    state.levels.append(0)
    state.cursor += 1
    for i in range(len(state.sets) - 2, -1, -1):
        _advance_set(state, i)
    _store(state, state.sets[0], state.cursor - len(state.sets))
    # Shift the ring: the rows captured at index i line up as the left
    # dependency of the set that moves into slot i.
    state.sets.pop(0)
    state.levels.pop(0)
    state.vrl.pop(0)


def drain(state: JamState, grid: GridBuffer | None = None,
          spec: StencilSpec | None = None) -> None:
    """Epilogue: advance the remaining live sets to level k against the
    right boundary and store them; the state empties."""
    if grid is not None and grid is not state.grid:
        raise GridError("state was booted on a different grid")
    while state.sets:
        for i in range(len(state.sets) - 1, -1, -1):
            _advance_set(state, i)
        _store(state, state.sets[0], state.cursor - len(state.sets))
        state.sets.pop(0)
        state.levels.pop(0)
        state.vrl.pop(0)


def jam_sweep(grid: GridBuffer, spec: StencilSpec, k: int, T: int,
              counters: Counters | None = None) -> None:
    """Advance the whole grid T time steps in place, k levels per pass.

    Each pass touches every element once (one vector-set load and one
    store per block) while performing k*vl*vl point updates per block,
    so memory traffic per time step is 1/k of the single-step sweep.
    """
    if T % k:
        raise GridError(f"total steps T={T} not divisible by unroll factor k={k}")
    for _ in range(T // k):
        state = boot(grid, spec, k, counters=counters)
        while not state.exhausted:
            pipeline_advance(state)
        drain(state)
    if counters is not None:
        counters.point_updates += grid.unit_n * T
