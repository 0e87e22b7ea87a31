import math

import numpy as np
import pytest

from stencilbench.core import (GridError, Layout, SpecError, StencilSpec,
                               VectorSet, alloc_grid, flops_per_point,
                               make_stencil_spec, unit_permutation)
from stencilbench.simd import VectorValue

PRESET_TABLE = [
    ("1d3p", 1, 1, "star", 3),
    ("1d5p", 1, 2, "star", 5),
    ("2d5p", 2, 1, "star", 5),
    ("2d9p", 2, 1, "box", 9),
    ("3d7p", 3, 1, "star", 7),
    ("3d27p", 3, 1, "box", 27),
]


@pytest.mark.parametrize("name,d,r,shape,count", PRESET_TABLE)
def test_presets(name, d, r, shape, count):
    spec = make_stencil_spec(name)
    assert (spec.d, spec.r, spec.shape) == (d, r, shape)
    assert len(spec.weights) == count
    expected = 2 * d * r + 1 if shape == "star" else (2 * r + 1) ** d
    assert count == expected
    assert (0,) * d in spec.weights
    assert all(max(abs(c) for c in off) <= r for off in spec.weights)


def test_1d5p_offsets():
    spec = make_stencil_spec("1d5p")
    assert set(spec.weights) == {(-2,), (-1,), (0,), (1,), (2,)}


def test_1d3p_default_weights():
    spec = make_stencil_spec("1d3p")
    assert spec.weights[(-1,)] == 0.25
    assert spec.weights[(0,)] == 0.5
    assert spec.weights[(1,)] == 0.25


@pytest.mark.parametrize("name", [row[0] for row in PRESET_TABLE])
def test_weights_sum_to_one_exactly(name):
    spec = make_stencil_spec(name)
    # every coefficient is dyadic; fsum of the set is exactly 1
    assert math.fsum(spec.weights.values()) == 1.0
    # symmetry under offset negation
    for off, w in spec.weights.items():
        assert spec.weights[tuple(-c for c in off)] == w


def test_unknown_preset_named_in_error():
    with pytest.raises(SpecError, match="99d99p"):
        make_stencil_spec("99d99p")


def test_spec_validation():
    with pytest.raises(SpecError):
        StencilSpec("bad", 1, 1, "star", {(0,): 1.0})  # missing neighbors
    with pytest.raises(SpecError):
        StencilSpec("bad", 1, 1, "star",
                    {(-2,): 0.25, (0,): 0.5, (2,): 0.25})  # outside radius


@pytest.mark.parametrize("name,flops", [("1d3p", 5), ("2d5p", 9), ("3d27p", 53)])
def test_flops_per_point(name, flops):
    assert flops_per_point(make_stencil_spec(name)) == flops


@pytest.mark.parametrize("name", [row[0] for row in PRESET_TABLE])
def test_flops_consistent_with_weight_count(name):
    spec = make_stencil_spec(name)
    assert flops_per_point(spec) == 2 * len(spec.weights) - 1


def test_alloc_padding_block_transpose():
    spec = make_stencil_spec("1d3p")
    g = alloc_grid(spec, 16, Layout.BLOCK_TRANSPOSE, 4)
    assert g.unit_np == 16 and g.n_blocks == 1
    g = alloc_grid(spec, 20, Layout.BLOCK_TRANSPOSE, 4)
    assert g.unit_np == 32 and g.n_blocks == 2


def test_alloc_natural_row_unpadded():
    spec = make_stencil_spec("2d5p")
    g = alloc_grid(spec, (3000, 3000), Layout.NATURAL, 8)
    assert g.unit_np == 3000
    # outer halo r per side, unit halo 2r per side
    assert g.data.shape == (3000 + 2 * spec.r, 3000 + 2 * 2 * spec.r)
    assert g.data.ctypes.data % (8 * 8) == 0


@pytest.mark.parametrize("vl", [4, 8])
def test_alloc_alignment_and_zero_init(vl):
    spec = make_stencil_spec("1d3p")
    g = alloc_grid(spec, 64, Layout.BLOCK_TRANSPOSE, vl)
    assert g.data.ctypes.data % (vl * 8) == 0
    assert np.all(g.data == 0.0)
    assert np.all(g.natural_interior() == 0.0)


def test_alloc_halo_widths():
    spec = make_stencil_spec("2d5p")
    g = alloc_grid(spec, (8, 16), Layout.NATURAL, 4)
    assert g.halo_outer == spec.r
    assert g.halo_unit == 2 * spec.r


def test_alloc_rejections():
    spec = make_stencil_spec("1d3p")
    with pytest.raises(GridError):
        alloc_grid(spec, 0, Layout.NATURAL, 4)
    with pytest.raises(GridError):
        alloc_grid(spec, 16, Layout.NATURAL, 5)
    with pytest.raises(GridError):
        alloc_grid(spec, (4, 4), Layout.NATURAL, 4)  # wrong rank


def test_interior_roundtrip_all_layouts(rng):
    spec = make_stencil_spec("1d3p")
    for layout in Layout:
        g = alloc_grid(spec, 48, layout, 4)
        vals = rng.random(48)
        g.set_interior(vals)
        assert np.array_equal(g.natural_interior(), vals)


def test_unit_permutation_is_bijection():
    for layout in (Layout.BLOCK_TRANSPOSE, Layout.DLT):
        perm = unit_permutation(layout, 64, 4)
        assert np.array_equal(np.sort(perm), np.arange(64))


def test_vector_set_base_invariant():
    rows = tuple(VectorValue([0.0] * 4) for _ in range(4))
    VectorSet(rows, 16)
    with pytest.raises(GridError):
        VectorSet(rows, 7)
