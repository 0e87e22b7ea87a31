import numpy as np
import pytest

from conftest import (layout_grid, method_grid, natural_grid, oracle_steps,
                      random_values)
from stencilbench.core import (GridError, Layout, VectorSet, alloc_like,
                               make_stencil_spec)
from stencilbench.kernels import (Counters, METHODS, assemble_left,
                                  assemble_right, bt_view, dlt_step,
                                  load_vector_set, method_layout,
                                  multiload_step, reorg_step, scalar_step,
                                  store_vector_set, transpose_layout_step,
                                  vs_step)
from stencilbench.simd import VectorValue

SPEC1 = make_stencil_spec("1d3p")

SMALL_DIMS = {1: 64, 2: (16, 32), 3: (8, 10, 32)}
MEDIUM_DIMS = {1: 1024, 2: (64, 64), 3: (16, 16, 64)}
VECTOR_METHODS = ["multiload", "reorg", "dlt", "transpose"]


def run_method(method, spec, dims, values, vl=4, counters=None):
    src = method_grid(spec, dims, method, vl, values)
    dst = alloc_like(src)
    METHODS[method][1](src, dst, spec, counters)
    return dst.natural_interior()


def test_scalar_constant_preservation():
    dims = (12, 32)
    spec = make_stencil_spec("2d9p")
    src = natural_grid(spec, dims)
    src.data[...] = 2.5           # constant including halo
    dst = alloc_like(src)
    scalar_step(src, dst, spec)
    assert np.all(dst.natural_interior() == 2.5)


def test_scalar_impulse_response():
    src = natural_grid(SPEC1, 5, values=np.array([0, 0, 1, 0, 0.0]))
    dst = alloc_like(src)
    scalar_step(src, dst, SPEC1)
    assert dst.natural_interior().tolist() == [0, 0.25, 0.5, 0.25, 0]


def test_scalar_linear_ramp_fixed_point():
    n = 32
    src = natural_grid(SPEC1, n, values=np.arange(float(n)))
    dst = alloc_like(src)
    scalar_step(src, dst, SPEC1)
    got = dst.natural_interior()
    # symmetry + normalization: the ramp is invariant away from the halo
    assert np.array_equal(got[1:-1], np.arange(1.0, n - 1))


def test_scalar_requires_distinct_buffers():
    g = natural_grid(SPEC1, 16)
    with pytest.raises(GridError):
        scalar_step(g, g, SPEC1)


@pytest.mark.parametrize("method", VECTOR_METHODS)
@pytest.mark.parametrize("preset", ["1d3p", "1d5p", "2d5p", "2d9p", "3d7p", "3d27p"])
@pytest.mark.parametrize("size", ["small", "medium"])
def test_method_equivalence(method, preset, size):
    spec = make_stencil_spec(preset)
    dims = (SMALL_DIMS if size == "small" else MEDIUM_DIMS)[spec.d]
    values = random_values(dims, seed=hash((method, preset, size)) % 2**32)
    want = oracle_steps(spec, values, dims, 1)
    got = run_method(method, spec, dims, values)
    denom = np.maximum(np.abs(want), np.finfo(float).tiny)
    assert np.max(np.abs(got - want) / denom) <= 1e-13


@pytest.mark.parametrize("method", VECTOR_METHODS)
def test_method_equivalence_vl8(method):
    spec = make_stencil_spec("1d5p")
    values = random_values(512, seed=7)
    want = oracle_steps(spec, values, 512, 1, vl=8)
    got = run_method(method, spec, 512, values, vl=8)
    assert np.array_equal(got, want)


@pytest.mark.parametrize("method", ["scalar"] + VECTOR_METHODS)
def test_constant_preserved_by_all_methods(method):
    spec = make_stencil_spec("1d5p")
    src = method_grid(spec, 64, method)
    src.data[...] = 3.0
    dst = alloc_like(src)
    METHODS[method][1](src, dst, spec)
    assert np.all(dst.natural_interior() == 3.0)


@pytest.mark.parametrize("method", ["scalar"] + VECTOR_METHODS)
def test_impulse_locality(method):
    spec = make_stencil_spec("1d5p")
    n = 64
    vals = np.zeros(n)
    vals[31] = 1.0
    got = run_method(method, spec, n, vals)
    support = np.flatnonzero(got)
    assert support.min() >= 31 - spec.r and support.max() <= 31 + spec.r


def test_multiload_load_meter():
    counters = Counters()
    run_method("multiload", SPEC1, 1024, np.zeros(1024), counters=counters)
    # three input vectors per output vector
    assert counters.vec_loads == 3 * (1024 // 4)
    assert counters.vec_stores == 1024 // 4


def test_reorg_loads_each_element_once():
    counters = Counters()
    run_method("reorg", SPEC1, 1024, np.zeros(1024), counters=counters)
    assert counters.element_loads(4) == 1024
    assert counters.reorg_ops == 2 * (1024 // 4)


def test_transpose_loads_each_element_once():
    counters = Counters()
    run_method("transpose", SPEC1, 1024, np.zeros(1024), counters=counters)
    assert counters.element_loads(4) == 1024


@pytest.mark.parametrize("preset,per_set", [("1d3p", 4), ("1d5p", 8)])
def test_transpose_reorg_ops_per_vector_set(preset, per_set):
    spec = make_stencil_spec(preset)
    counters = Counters()
    run_method("transpose", spec, 1024, np.zeros(1024), counters=counters)
    n_sets = 1024 // 16
    assert counters.reorg_ops == per_set * n_sets
    assert counters.vs_loads == n_sets


def test_multiload_vs_transpose_load_ratio():
    c_ml, c_tr = Counters(), Counters()
    run_method("multiload", SPEC1, 4096, np.zeros(4096), counters=c_ml)
    run_method("transpose", SPEC1, 4096, np.zeros(4096), counters=c_tr)
    assert c_ml.vec_loads == 3 * c_tr.vec_loads


def test_dlt_reorg_ops_independent_of_length():
    spec = make_stencil_spec("1d5p")
    a, b = Counters(), Counters()
    run_method("dlt", spec, 256, np.zeros(256), counters=a)
    run_method("dlt", spec, 4096, np.zeros(4096), counters=b)
    assert a.reorg_ops == b.reorg_ops == 4 * spec.r


def test_assemble_left_example():
    prev_last = VectorValue("WXYZ")
    cur_last = VectorValue("DHLP")
    assert assemble_left(prev_last, cur_last).lanes == ("Z", "D", "H", "L")
    c = VectorValue((4.0,) * 4)
    assert assemble_left(c, c) == c


def test_assemble_right_example():
    cur_first = VectorValue("AEIM")
    next_first = VectorValue(("Q", "U", "Y", "c"))
    assert assemble_right(cur_first, next_first).lanes == ("E", "I", "M", "Q")
    c = VectorValue((4.0,) * 4)
    assert assemble_right(c, c) == c


def test_assemble_index_map(rng):
    """Against the natural index map: lanes are exact unit-stride
    neighbors of the block boundary rows."""
    vl = 4
    for base in (0, 16, 48):
        nat = {base + i: float(rng.random()) for i in range(-1, vl * vl + 1)}
        cur = [VectorValue(nat[base + l * vl + j] for l in range(vl))
               for j in range(vl)]
        prev_row = VectorValue([0, 0, 0, nat[base - 1]])
        left = assemble_left(prev_row, cur[vl - 1])
        assert left.lanes == tuple(nat[base + l * vl - 1] if l else nat[base - 1]
                                   for l in range(vl))
        nxt_row = VectorValue([nat[base + vl * vl], 0, 0, 0])
        right = assemble_right(cur[0], nxt_row)
        want = tuple(nat[base + (l + 1) * vl] if l < vl - 1
                     else nat[base + vl * vl] for l in range(vl))
        assert right.lanes == want


def test_assemble_tiles_sequence_without_gap():
    """Right deps of block b and left deps of block b+1 cover adjacent
    natural indices exactly once."""
    vl = 4
    nat = np.arange(64.0)
    rows_b = [VectorValue(nat[l * vl + j] for l in range(vl)) for j in range(vl)]
    rows_b1 = [VectorValue(nat[16 + l * vl + j] for l in range(vl)) for j in range(vl)]
    right_of_b = assemble_right(rows_b[0], rows_b1[0])
    left_of_b1 = assemble_left(rows_b[vl - 1], rows_b1[vl - 1])
    # natural indices covered by the two assembled vectors
    right_idx = {int(v) for v in right_of_b}
    left_idx = {int(v) for v in left_of_b1}
    assert right_idx == {4, 8, 12, 16}
    assert left_idx == {15, 19, 23, 27}
    assert not right_idx & left_idx


def test_vs_step_constant_and_ramp():
    vl = 4
    const = VectorSet(tuple(VectorValue((5.0,) * vl) for _ in range(vl)))
    dep = (VectorValue((5.0,) * vl),)
    out = vs_step(const, dep, dep, None, SPEC1)
    assert out.rows == const.rows

    nat = np.arange(16.0)
    rows = tuple(VectorValue(nat[l * vl + j] for l in range(vl)) for j in range(vl))
    left = (VectorValue([-1.0, 3.0, 7.0, 11.0]),)
    right = (VectorValue([4.0, 8.0, 12.0, 16.0]),)
    out = vs_step(VectorSet(rows), left, right, None, SPEC1)
    assert out.rows == rows  # linear data is a fixed point


def test_vs_step_matches_oracle_block(rng):
    vl = 4
    vals = rng.random(18)  # block 0..15 plus one neighbor each side
    want = np.empty(16)
    for i in range(16):
        lo = vals[i - 1] if i > 0 else vals[16]  # vals[16] plays the -1 cell
        hi = vals[i + 1] if i < 15 else vals[17]
        want[i] = 0.25 * lo + 0.5 * vals[i] + 0.25 * hi
    rows = tuple(VectorValue(vals[l * vl + j] for l in range(vl)) for j in range(vl))
    left = (VectorValue([vals[16], vals[3], vals[7], vals[11]]),)
    right = (VectorValue([vals[4], vals[8], vals[12], vals[17]]),)
    out = vs_step(VectorSet(rows), left, right, None, SPEC1)
    for j in range(vl):
        for l in range(vl):
            assert out.rows[j][l] == want[l * vl + j]


def test_vs_step_missing_dependency():
    const = VectorSet(tuple(VectorValue((0.0,) * 4) for _ in range(4)))
    with pytest.raises(GridError):
        vs_step(const, (), (), None, SPEC1)
    spec2 = make_stencil_spec("2d5p")
    dep = (VectorValue((0.0,) * 4),)
    with pytest.raises(GridError, match="outer offset"):
        vs_step(const, dep, dep, None, spec2)


def test_vector_set_load_store_round_trip(rng):
    g = layout_grid(SPEC1, 48, Layout.BLOCK_TRANSPOSE, values=rng.random(48))
    vs = load_vector_set(g, 1)
    assert vs.base == 16
    g2 = layout_grid(SPEC1, 48, Layout.BLOCK_TRANSPOSE)
    store_vector_set(g2, vs, 1)
    assert np.array_equal(g2.natural_interior()[16:32], g.natural_interior()[16:32])


def test_bt_view_is_a_view():
    g = layout_grid(SPEC1, 48, Layout.BLOCK_TRANSPOSE)
    assert np.shares_memory(bt_view(g), g.data)


def test_layout_mismatch_rejected():
    a = natural_grid(SPEC1, 32, pad_for=Layout.BLOCK_TRANSPOSE)
    b = alloc_like(a)
    with pytest.raises(GridError):
        transpose_layout_step(a, b, SPEC1)
    with pytest.raises(GridError):
        dlt_step(a, b, SPEC1)
    c = layout_grid(SPEC1, 32, Layout.BLOCK_TRANSPOSE)
    with pytest.raises(GridError):
        multiload_step(c, alloc_like(c), SPEC1)


def test_method_layout_lookup():
    assert method_layout("dlt") is Layout.DLT
    with pytest.raises(GridError):
        method_layout("nope")
