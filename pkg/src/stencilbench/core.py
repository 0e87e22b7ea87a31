"""Problem definitions shared by every other module.

A stencil is a fixed weighted-sum update applied to each cell of a
d-dimensional grid once per time step.  This module owns the stencil
presets, the grid buffers they operate on, the storage layouts a grid
can be held in, and the flop accounting used by the benchmark harness.

Boundary semantics are Dirichlet throughout: every grid carries a ring
of halo cells that are read but never written by any step operation, so
all update methods (including the scalar oracle) agree on one boundary
definition.  Grids whose unit-stride extent is padded treat the padding
exactly like halo: fixed at zero for all time.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .simd import VectorValue

Offset = tuple[int, ...]

#: Vector widths (64-bit lanes) supported by the layout machinery.
SUPPORTED_VL = (4, 8)

#: Extra halo on the unit-stride dimension so a k=2 time jam never reads
#: out of bounds (k_max * r cells per side).
UNIT_HALO_FACTOR = 2


class SpecError(ValueError):
    """Invalid stencil specification or preset name."""


class GridError(ValueError):
    """Invalid grid geometry, layout, or allocation request."""


class Layout(Enum):
    """Storage order of the unit-stride dimension of a grid."""

    NATURAL = "natural"
    BLOCK_TRANSPOSE = "block_transpose"   # each aligned vl*vl block transposed
    DLT = "dlt"                           # whole row lifted to vl substreams


@dataclass(frozen=True, eq=False)
class StencilSpec:
    """A constant-coefficient stencil: spatial pattern plus weights.

    ``weights`` maps each integer offset vector (length ``d``) to its
    64-bit coefficient.  ``r`` is the order: the largest per-axis
    neighbor distance.  ``shape`` is "star" (axis-aligned neighbors
    only) or "box" (the full radius-r cube).  Specs are immutable and
    compare by identity; the presets are singletons.
    """

    name: str
    d: int
    r: int
    shape: str
    weights: Mapping[Offset, float]

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise SpecError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.r < 1:
            raise SpecError(f"order must be positive, got {self.r}")
        offs = set(self.weights)
        if (0,) * self.d not in offs:
            raise SpecError("zero offset missing from weight table")
        for off in offs:
            if len(off) != self.d or max(abs(c) for c in off) > self.r:
                raise SpecError(f"offset {off} outside radius {self.r}")
        if self.shape == "star":
            expected = 2 * self.d * self.r + 1
            if any(sum(c != 0 for c in off) > 1 for off in offs):
                raise SpecError("star stencil has a non-axis-aligned offset")
        elif self.shape == "box":
            expected = (2 * self.r + 1) ** self.d
        else:
            raise SpecError(f"shape must be 'star' or 'box', got {self.shape!r}")
        if len(offs) != expected:
            raise SpecError(
                f"{self.shape} stencil of d={self.d} r={self.r} needs "
                f"{expected} weights, got {len(offs)}"
            )

    @property
    def offsets(self) -> tuple[Offset, ...]:
        """All offsets in canonical (lexicographic) order.

        Every update method accumulates its weighted sum in exactly this
        order, which makes results bit-comparable across methods.
        """
        return tuple(sorted(self.weights))

    def weight(self, off: Offset) -> float:
        return self.weights[off]


def _star_weights(d: int, r: int, off_weight: Fraction) -> dict[Offset, float]:
    # Off-center weights are equal powers of two; the center takes the
    # dyadic remainder.  All-dyadic weights keep constant fields exactly
    # constant under any summation order.
    weights: dict[Offset, float] = {}
    count = 0
    for axis in range(d):
        for dist in range(1, r + 1):
            for sign in (-1, 1):
                off = [0] * d
                off[axis] = sign * dist
                weights[tuple(off)] = float(off_weight)
                count += 1
    weights[(0,) * d] = float(1 - count * off_weight)
    return weights


def _box_weights(d: int) -> dict[Offset, float]:
    # Tensor product of the 1D kernel (1/4, 1/2, 1/4): every coefficient
    # is a power of two and the total is exactly one.
    kernel = {-1: Fraction(1, 4), 0: Fraction(1, 2), 1: Fraction(1, 4)}
    weights: dict[Offset, float] = {}
    for off in itertools.product((-1, 0, 1), repeat=d):
        w = Fraction(1)
        for c in off:
            w *= kernel[c]
        weights[off] = float(w)
    return weights


_PRESETS: dict[str, StencilSpec] = {
    "1d3p": StencilSpec("1d3p", 1, 1, "star", _star_weights(1, 1, Fraction(1, 4))),
    "1d5p": StencilSpec("1d5p", 1, 2, "star", _star_weights(1, 2, Fraction(1, 8))),
    "2d5p": StencilSpec("2d5p", 2, 1, "star", _star_weights(2, 1, Fraction(1, 8))),
    "2d9p": StencilSpec("2d9p", 2, 1, "box", _box_weights(2)),
    "3d7p": StencilSpec("3d7p", 3, 1, "star", _star_weights(3, 1, Fraction(1, 8))),
    "3d27p": StencilSpec("3d27p", 3, 1, "box", _box_weights(3)),
}

PRESET_NAMES = tuple(_PRESETS)


def make_stencil_spec(name: str) -> StencilSpec:
    """Return one of the six benchmark presets by name."""
    try:
        return _PRESETS[name.lower()]
    except KeyError:
        raise SpecError(
            f"unknown stencil preset {name!r}; choose from {', '.join(_PRESETS)}"
        ) from None


def flops_per_point(spec: StencilSpec) -> int:
    """Flops of one point update: |weights| multiplies plus |weights|-1 adds."""
    return 2 * len(spec.weights) - 1


@dataclass(frozen=True)
class VectorSet:
    """A vl*vl grid block held as vl row vectors after local transpose.

    Correspondence law: ``rows[j][l]`` is the natural-order element at
    index ``base + l*vl + j``.  The vector set is the unit of all
    vectorized work; ``base`` is the block's first natural index and is
    always a multiple of vl*vl inside the padded unit extent.
    """

    rows: tuple[VectorValue, ...]
    base: int = 0

    def __post_init__(self):
        vl = len(self.rows)
        if any(r.vl != vl for r in self.rows):
            raise GridError("vector set rows must all have vl lanes")
        if self.base % (vl * vl):
            raise GridError(f"base {self.base} not a multiple of {vl * vl}")

    @property
    def vl(self) -> int:
        return len(self.rows)


def _aligned_zeros(count: int, alignment: int) -> np.ndarray:
    """A zeroed float64 vector whose first byte sits on ``alignment``."""
    raw = np.zeros(count + alignment // 8, dtype=np.float64)
    shift = (-raw.ctypes.data) % alignment // 8
    return raw[shift:shift + count]


def _pad_multiple(layout: Layout, vl: int) -> int:
    if layout is Layout.BLOCK_TRANSPOSE:
        return vl * vl
    if layout is Layout.DLT:
        return vl
    return 1


@lru_cache(maxsize=None)
def unit_permutation(layout: Layout, unit_np: int, vl: int) -> np.ndarray:
    """Map natural unit index -> storage offset inside the padded region.

    BLOCK_TRANSPOSE moves block offset o to (o mod vl)*vl + o//vl (an
    involution per block); DLT moves element q*(N/vl)+c to c*vl+q.
    NATURAL is the identity.
    """
    idx = np.arange(unit_np, dtype=np.int64)
    if layout is Layout.NATURAL:
        return idx
    if layout is Layout.BLOCK_TRANSPOSE:
        if unit_np % (vl * vl):
            raise GridError(f"extent {unit_np} not a multiple of {vl * vl}")
        block = (np.arange(vl * vl, dtype=np.int64)
                 .reshape(vl, vl).T.reshape(-1))
        starts = np.arange(0, unit_np, vl * vl, dtype=np.int64)
        return (starts[:, None] + block[None, :]).reshape(-1)
    if layout is Layout.DLT:
        if unit_np % vl:
            raise GridError(f"extent {unit_np} not a multiple of {vl}")
        sub = unit_np // vl
        return (idx % sub) * vl + idx // sub
    raise GridError(f"unsupported layout {layout}")


@dataclass
class GridBuffer:
    """An aligned d-dimensional grid with halo, padding, and a layout tag.

    Storage shape is ``(n0+2h, ..., n_{d-2}+2h, hu + unit_np + hu)`` with
    ``h = r`` on outer dimensions and ``hu = 2r`` on the unit-stride
    (last) dimension.  ``unit_np`` is the unit extent padded up to the
    layout's block multiple; cells in ``[unit_n, unit_np)`` are Dirichlet
    padding, zero for all time, indistinguishable from halo.

    A GridBuffer needs exclusive access while mutated; disjoint
    sub-regions may be written concurrently (the tile runner relies on
    this).  The layout conversions in :mod:`stencilbench.transpose`
    permute ``data`` in place and retag ``layout``.
    """

    data: np.ndarray            # full storage including halo, d-dimensional
    dims: tuple[int, ...]       # interior extents, unit-stride last
    r: int                      # stencil order the halo was sized for
    unit_n: int                 # interior unit-stride extent
    unit_np: int                # padded unit-stride extent
    layout: Layout
    vl: int

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def halo_unit(self) -> int:
        return UNIT_HALO_FACTOR * self.r

    @property
    def halo_outer(self) -> int:
        return self.r

    @property
    def n_blocks(self) -> int:
        return self.unit_np // (self.vl * self.vl)

    @property
    def interior_points(self) -> int:
        pts = 1
        for n in self.dims:
            pts *= n
        return pts

    def rows2d(self) -> np.ndarray:
        """All unit-stride rows (halo rows included) as a 2-D view."""
        return self.data.reshape(-1, self.data.shape[-1])

    def unit_region(self) -> np.ndarray:
        """View of the padded unit region of every row, natural row order."""
        return self.data[..., self.halo_unit:self.halo_unit + self.unit_np]

    def storage_col(self, i: int) -> int:
        """Storage column of natural unit index ``i`` (halo indices allowed)."""
        if 0 <= i < self.unit_np:
            perm = unit_permutation(self.layout, self.unit_np, self.vl)
            return self.halo_unit + int(perm[i])
        if -self.halo_unit <= i < self.unit_np + self.halo_unit:
            return self.halo_unit + i
        raise GridError(f"unit index {i} outside grid and halo")

    def storage_cols(self, idx: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`storage_col` for in-region indices only."""
        perm = unit_permutation(self.layout, self.unit_np, self.vl)
        out = np.where((idx >= 0) & (idx < self.unit_np),
                       perm[np.clip(idx, 0, self.unit_np - 1)], idx)
        return self.halo_unit + out

    def interior_slices(self) -> tuple[slice, ...]:
        outer = tuple(slice(self.halo_outer, self.halo_outer + n)
                      for n in self.dims[:-1])
        return outer + (slice(self.halo_unit, self.halo_unit + self.unit_n),)

    def natural_interior(self) -> np.ndarray:
        """Interior values in natural order, as a fresh array."""
        if self.layout is Layout.NATURAL:
            return self.data[self.interior_slices()].copy()
        perm = unit_permutation(self.layout, self.unit_np, self.vl)
        outer = tuple(slice(self.halo_outer, self.halo_outer + n)
                      for n in self.dims[:-1])
        region = self.unit_region()[outer]
        return region[..., perm[:self.unit_n]].copy()

    def set_interior(self, values: np.ndarray) -> None:
        """Write natural-order interior values through the layout map."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.dims:
            raise GridError(f"expected shape {self.dims}, got {values.shape}")
        perm = unit_permutation(self.layout, self.unit_np, self.vl)
        outer = tuple(slice(self.halo_outer, self.halo_outer + n)
                      for n in self.dims[:-1])
        region = self.unit_region()[outer]
        region[..., perm[:self.unit_n]] = values

    def clone(self) -> "GridBuffer":
        g = alloc_like(self)
        g.data[...] = self.data
        return g


def alloc_grid(spec: StencilSpec, dims: int | Sequence[int], layout: Layout,
               vl: int, pad_for: Layout | None = None) -> GridBuffer:
    """Allocate an aligned, zeroed grid for ``spec``.

    ``pad_for`` pads the unit-stride extent of a NATURAL grid to the
    block multiple of another layout so it can later be converted in
    place.  Padding and halo cells are zero and stay zero (Dirichlet).
    """
    if vl not in SUPPORTED_VL:
        raise GridError(f"vl must be one of {SUPPORTED_VL}, got {vl}")
    dims = (dims,) if isinstance(dims, int) else tuple(int(n) for n in dims)
    if len(dims) != spec.d:
        raise GridError(f"{spec.name} needs {spec.d} extents, got {len(dims)}")
    if any(n <= 0 for n in dims):
        raise GridError(f"extents must be positive, got {dims}")
    pad_layout = pad_for if layout is Layout.NATURAL and pad_for else layout
    mult = _pad_multiple(pad_layout, vl)
    unit_n = dims[-1]
    unit_np = -(-unit_n // mult) * mult
    if unit_np > 2**40:
        raise GridError(f"padded extent {unit_np} too large")
    hu = UNIT_HALO_FACTOR * spec.r
    shape = tuple(n + 2 * spec.r for n in dims[:-1]) + (unit_np + 2 * hu,)
    count = 1
    for s in shape:
        count *= s
    data = _aligned_zeros(count, vl * 8).reshape(shape)
    return GridBuffer(data, dims, spec.r, unit_n, unit_np, layout, vl)


def alloc_like(grid: GridBuffer) -> GridBuffer:
    """A zeroed grid with the same geometry and layout as ``grid``."""
    shape = grid.data.shape
    count = 1
    for s in shape:
        count *= s
    data = _aligned_zeros(count, grid.vl * 8).reshape(shape)
    return GridBuffer(data, grid.dims, grid.r, grid.unit_n, grid.unit_np,
                      grid.layout, grid.vl)
