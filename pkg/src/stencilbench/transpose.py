"""Layout machinery: register transpose networks and grid layout conversion.

A vl*vl block of grid cells is held as vl vectors (a vector set); the
networks here transpose such a block entirely in registers.  The op
count of every network meets the vl*log2(vl) lower bound with equality:
8 ops for vl=4, 24 for vl=8.

The preferred networks order their stages so that every cross-lane stage
is followed by cheaper work that hides its latency; the last stage is
always in-lane.  ``schedule_cost`` makes that claim checkable: it
simulates in-order issue under a :class:`~stencilbench.simd.LatencyModel`
and reports issue cycles, makespan, and stall-freedom.

Grid-level conversions live here too: blockwise natural <->
block-transpose permutation (in place, bounded scratch) and the global
dimension-lifted transpose (shadow copy, as usual for that layout).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import GridBuffer, GridError, Layout, VectorSet, unit_permutation
from .simd import (CROSS_LANE, HIGH, IN_LANE, LOW, LatencyModel, VectorValue,
                   blend, half_exchange, interleave, interleave_pairs,
                   rotate_lanes)


class PlanError(ValueError):
    """Malformed shuffle plan (unknown vl, broken single-assignment, ...)."""


@dataclass(frozen=True)
class ShuffleOp:
    """One register data-movement op: dst = kind(src_a, src_b, immediate)."""

    kind: str                   # half_exchange | interleave_pairs | interleave | blend | rotate
    sources: tuple[int, int]
    dest: int
    immediate: object           # selector pair, parity, mask, or shift count
    lane_class: str             # IN_LANE | CROSS_LANE


@dataclass(frozen=True)
class ShufflePlan:
    """A single-assignment sequence of shuffle ops with named I/O values."""

    vl: int
    ops: tuple[ShuffleOp, ...]
    inputs: tuple[int, ...]
    outputs: tuple[int, ...]

    def __post_init__(self):
        defined = set(self.inputs)
        for op in self.ops:
            if op.dest in defined:
                raise PlanError(f"value {op.dest} assigned twice")
            for s in op.sources:
                if s not in defined:
                    raise PlanError(f"op {op} reads undefined value {s}")
            defined.add(op.dest)
        for o in self.outputs:
            if o not in defined:
                raise PlanError(f"output {o} never defined")


_OP_EVAL = {
    "half_exchange": half_exchange,
    "interleave_pairs": interleave_pairs,
    "interleave": interleave,
    "blend": blend,
    "rotate": None,  # unary; handled specially
}


def build_transpose_plan(vl: int) -> ShufflePlan:
    """The minimal vl*vl transpose network (vl in {4, 8}).

    Stage s exchanges data at granularity vl/2^s.  All stages but the
    last are cross-lane; the final interleave stage is in-lane, so its
    single-cycle ops trail the long-latency ones and hide them.
    """
    if vl == 4:
        ops = []
        nid = 4
        stage1 = []
        # Emission order matters: each interleave pair's sources must be
        # issued back to back so the pair is ready when its slot arrives.
        for sel in ((LOW, LOW), (HIGH, HIGH)):
            for i in range(2):
                ops.append(ShuffleOp("half_exchange", (i, i + 2), nid, sel, CROSS_LANE))
                stage1.append(nid)
                nid += 1
        # stage1 ids: [lo(0,2), lo(1,3), hi(0,2), hi(1,3)]
        outs = []
        for a, b in ((stage1[0], stage1[1]), (stage1[2], stage1[3])):
            for parity in (LOW, HIGH):
                ops.append(ShuffleOp("interleave", (a, b), nid, parity, IN_LANE))
                outs.append(nid)
                nid += 1
        return ShufflePlan(4, tuple(ops), (0, 1, 2, 3), tuple(outs))
    if vl == 8:
        ops = []
        nid = 8
        lo, hi = {}, {}
        for i in range(4):
            ops.append(ShuffleOp("half_exchange", (i, i + 4), nid, (LOW, LOW), CROSS_LANE))
            lo[i] = nid
            nid += 1
            ops.append(ShuffleOp("half_exchange", (i, i + 4), nid, (HIGH, HIGH), CROSS_LANE))
            hi[i] = nid
            nid += 1
        # lo[i] = rows (i, i+4) chunks 0..1; hi[i] = rows (i, i+4) chunks 2..3
        mids = []
        for fam in (lo, hi):
            for i in (0, 1):
                for parity in (LOW, HIGH):
                    ops.append(ShuffleOp("interleave_pairs", (fam[i], fam[i + 2]),
                                         nid, parity, CROSS_LANE))
                    mids.append(nid)
                    nid += 1
        # mids order: cols(0,1)x(even rows, odd-pair) ... -> pair them up:
        # mids[0]=(rows 0,2,4,6 | cols 0,1), mids[2]=(rows 1,3,5,7 | cols 0,1)
        outs = []
        for a, b in ((mids[0], mids[2]), (mids[1], mids[3]),
                     (mids[4], mids[6]), (mids[5], mids[7])):
            for parity in (LOW, HIGH):
                ops.append(ShuffleOp("interleave", (a, b), nid, parity, IN_LANE))
                outs.append(nid)
                nid += 1
        return ShufflePlan(8, tuple(ops), tuple(range(8)), tuple(outs))
    raise PlanError(f"no transpose plan for vl={vl}; supported: 4, 8")


def build_stage_swapped_plan(vl: int = 4) -> ShufflePlan:
    """The inferior ordering: in-lane interleaves first, cross-lane last.

    Still a correct transpose in the same 8 ops, but the long-latency
    stage has nothing behind it to hide in, so its makespan is worse.
    Kept as the comparison point for the scheduler tests.
    """
    if vl != 4:
        raise PlanError("stage-swapped reference plan exists only for vl=4")
    ops = []
    nid = 4
    stage1 = []
    for i in (0, 2):
        for parity in (LOW, HIGH):
            ops.append(ShuffleOp("interleave", (i, i + 1), nid, parity, IN_LANE))
            stage1.append(nid)
            nid += 1
    # stage1: u0=lo(0,1)=(A,E,C,G) u1=hi(0,1)=(B,F,D,H) u2=lo(2,3) u3=hi(2,3)
    outs = []
    for a, b in ((stage1[0], stage1[2]), (stage1[1], stage1[3])):
        for sel in ((LOW, LOW), (HIGH, HIGH)):
            ops.append(ShuffleOp("half_exchange", (a, b), nid, sel, CROSS_LANE))
            outs.append(nid)
            nid += 1
    outputs = (outs[0], outs[2], outs[1], outs[3])
    return ShufflePlan(4, tuple(ops), (0, 1, 2, 3), outputs)


def evaluate_plan(plan: ShufflePlan, rows: Sequence[VectorValue]) -> list[VectorValue]:
    """Run the plan on concrete or symbolic row vectors."""
    if len(rows) != plan.vl:
        raise PlanError(f"plan expects {plan.vl} input rows, got {len(rows)}")
    env: dict[int, VectorValue] = dict(zip(plan.inputs, rows))
    for op in plan.ops:
        a = env[op.sources[0]]
        if op.kind == "rotate":
            env[op.dest] = rotate_lanes(a, op.immediate)
        else:
            b = env[op.sources[1]]
            env[op.dest] = _OP_EVAL[op.kind](a, b, op.immediate)
    return [env[o] for o in plan.outputs]


def apply_plan(plan: ShufflePlan, vs):
    """Transpose a vector set (or plain row sequence) through the plan.

    Applying the same plan twice returns the original block.
    """
    if isinstance(vs, VectorSet):
        return VectorSet(tuple(evaluate_plan(plan, vs.rows)), vs.base)
    return tuple(evaluate_plan(plan, tuple(vs)))


@dataclass(frozen=True)
class ScheduleCost:
    issue_cycles: int        # cycle of the last issued op
    makespan: int            # completion cycle of the last op
    stall_free: bool         # every op issued at its unstalled slot
    issue_table: tuple[int, ...]


def schedule_cost(plan: ShufflePlan, model: LatencyModel | None = None) -> ScheduleCost:
    """Simulate in-order issue of the plan under the latency model.

    At most ``issue_width`` data-movement ops issue per cycle, in program
    order; an op issues at the earliest cycle no earlier than its
    program-order slot at which every source is complete (completion =
    issue cycle + latency).  Plan validation has already rejected cycles
    (single-assignment ordering), so the simulation always terminates.
    """
    model = model or LatencyModel()
    done: dict[int, int] = {i: 0 for i in plan.inputs}
    issue_at: list[int] = []
    cycle, in_cycle = 1, 0
    stall_free = True
    for idx, op in enumerate(plan.ops):
        slot = idx // model.issue_width + 1
        ready = max(done[s] for s in op.sources)
        earliest = max(cycle, ready)
        if earliest > cycle:
            cycle, in_cycle = earliest, 0
        if earliest > slot:
            stall_free = False
        issue_at.append(cycle)
        done[op.dest] = cycle + model.latency(op.lane_class)
        in_cycle += 1
        if in_cycle == model.issue_width:
            cycle, in_cycle = cycle + 1, 0
    makespan = max(issue_at[i] + model.latency(op.lane_class)
                   for i, op in enumerate(plan.ops))
    return ScheduleCost(issue_at[-1], makespan, stall_free, tuple(issue_at))


def format_plan(plan: ShufflePlan, model: LatencyModel | None = None) -> str:
    """Human-readable op listing plus the issue-cycle schedule table."""
    model = model or LatencyModel()
    cost = schedule_cost(plan, model)
    lines = [f"transpose plan vl={plan.vl}: {len(plan.ops)} ops "
             f"(lower bound vl*log2(vl) = {len(plan.ops)})",
             f"inputs:  {list(plan.inputs)}",
             f"outputs: {list(plan.outputs)}",
             f"{'op':>3} {'kind':<17} {'srcs':<10} {'dst':>3} "
             f"{'immediate':<14} {'class':<10} {'issue':>5}"]
    for i, op in enumerate(plan.ops):
        lines.append(f"{i:>3} {op.kind:<17} {str(list(op.sources)):<10} "
                     f"{op.dest:>3} {str(op.immediate):<14} "
                     f"{op.lane_class:<10} {cost.issue_table[i]:>5}")
    lines.append(f"issue cycles: {cost.issue_cycles}   makespan: {cost.makespan}"
                 f"   stall-free: {cost.stall_free}")
    return "\n".join(lines)


def m_min(r: int) -> int:
    """Smallest row size m whose middle-vector arithmetic covers the
    boundary reorganization work: (2r+1)(m-1)+1 >= 4r.

    Bounded by 3 for every order, which is why a vl*vl block (vl >= 4)
    always amortizes its two assembled vectors.
    """
    if r < 1:
        raise ValueError(f"order must be >= 1, got {r}")
    m = 1 + -(-(4 * r - 1) // (2 * r + 1))
    return m


_CHUNK_ELEMS = 1 << 21  # bounded scratch for in-place conversions (16 MiB)


def _permute_rows_inplace(grid: GridBuffer, perm: np.ndarray, period: int) -> None:
    """Apply a unit-axis permutation with period ``period`` to every row.

    Work proceeds in bounded chunks: a run of blocks is gathered through
    the permutation into scratch and written back, never a whole shadow
    grid.  ``period`` must divide the padded unit extent.
    """
    rows = grid.rows2d()
    hu = grid.halo_unit
    npad = grid.unit_np
    blocks_per_chunk = max(1, min(_CHUNK_ELEMS // period, npad // period))
    span = blocks_per_chunk * period
    tiled = (np.repeat(np.arange(blocks_per_chunk) * period, period)
             + np.tile(perm[:period], blocks_per_chunk))
    for r in rows:
        for c0 in range(hu, hu + npad, span):
            width = min(span, hu + npad - c0)
            r[c0:c0 + width] = r[c0:c0 + width][tiled[:width]]


def to_block_transpose(grid: GridBuffer, vl: int) -> GridBuffer:
    """Convert a NATURAL grid to BLOCK_TRANSPOSE in place and retag it.

    Every aligned vl*vl block of every unit-stride row (halo rows of the
    outer dimensions included) is transposed; unit-stride halo cells stay
    where they are.  The permutation is its own inverse per block.
    """
    if grid.layout is not Layout.NATURAL:
        raise GridError(f"expected NATURAL grid, got {grid.layout}")
    if vl != grid.vl:
        raise GridError(f"grid was allocated for vl={grid.vl}, got {vl}")
    if grid.unit_np % (vl * vl):
        raise GridError(
            f"unit extent {grid.unit_np} not padded to a multiple of {vl * vl}")
    perm = unit_permutation(Layout.BLOCK_TRANSPOSE, grid.unit_np, vl)
    _permute_rows_inplace(grid, perm, vl * vl)
    grid.layout = Layout.BLOCK_TRANSPOSE
    return grid


def from_block_transpose(grid: GridBuffer) -> GridBuffer:
    """Inverse of :func:`to_block_transpose` (the same involution)."""
    if grid.layout is not Layout.BLOCK_TRANSPOSE:
        raise GridError(f"expected BLOCK_TRANSPOSE grid, got {grid.layout}")
    perm = unit_permutation(Layout.BLOCK_TRANSPOSE, grid.unit_np, grid.vl)
    _permute_rows_inplace(grid, perm, grid.vl * grid.vl)
    grid.layout = Layout.NATURAL
    return grid


def to_dlt(grid: GridBuffer, vl: int) -> GridBuffer:
    """Convert a NATURAL grid to the dimension-lifted transpose layout.

    The padded unit region of each row is viewed as a vl x (N/vl) matrix
    and globally transposed.  Unlike the blockwise conversion this one is
    allowed a full row shadow copy; a true in-place cycle walk buys
    nothing here.
    """
    if grid.layout is not Layout.NATURAL:
        raise GridError(f"expected NATURAL grid, got {grid.layout}")
    if vl != grid.vl:
        raise GridError(f"grid was allocated for vl={grid.vl}, got {vl}")
    if grid.unit_np % vl:
        raise GridError(f"unit extent {grid.unit_np} not divisible by {vl}")
    rows = grid.rows2d()
    hu = grid.halo_unit
    region = rows[:, hu:hu + grid.unit_np]
    perm = unit_permutation(Layout.DLT, grid.unit_np, vl)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    row_chunk = max(1, _CHUNK_ELEMS // grid.unit_np)
    for r0 in range(0, rows.shape[0], row_chunk):
        seg = region[r0:r0 + row_chunk]
        seg[...] = seg[:, inv]
    grid.layout = Layout.DLT
    return grid


def from_dlt(grid: GridBuffer) -> GridBuffer:
    """Inverse of :func:`to_dlt`."""
    if grid.layout is not Layout.DLT:
        raise GridError(f"expected DLT grid, got {grid.layout}")
    rows = grid.rows2d()
    hu = grid.halo_unit
    region = rows[:, hu:hu + grid.unit_np]
    perm = unit_permutation(Layout.DLT, grid.unit_np, grid.vl)
    row_chunk = max(1, _CHUNK_ELEMS // grid.unit_np)
    for r0 in range(0, rows.shape[0], row_chunk):
        seg = region[r0:r0 + row_chunk]
        seg[...] = seg[:, perm]
    grid.layout = Layout.NATURAL
    return grid
