import numpy as np
import pytest

from conftest import natural_grid, layout_grid
from stencilbench.core import GridError, Layout, make_stencil_spec
from stencilbench.simd import (CROSS_LANE, IN_LANE, LatencyModel, VectorValue)
from stencilbench.transpose import (PlanError, ShuffleOp, ShufflePlan,
                                    apply_plan, build_stage_swapped_plan,
                                    build_transpose_plan, evaluate_plan,
                                    format_plan, from_block_transpose,
                                    from_dlt, m_min, schedule_cost,
                                    to_block_transpose, to_dlt)

SPEC1 = make_stencil_spec("1d3p")


def letter_rows():
    return [VectorValue("ABCDEFGHIJKLMNOP"[i * 4 + j] for j in range(4))
            for i in range(4)]


def test_plan_op_counts():
    assert len(build_transpose_plan(4).ops) == 8
    assert len(build_transpose_plan(8).ops) == 24


def test_plan_stage_structure():
    p4 = build_transpose_plan(4)
    assert [op.lane_class for op in p4.ops] == [CROSS_LANE] * 4 + [IN_LANE] * 4
    assert [op.kind for op in p4.ops] == ["half_exchange"] * 4 + ["interleave"] * 4
    p8 = build_transpose_plan(8)
    kinds = [op.kind for op in p8.ops]
    assert kinds == (["half_exchange"] * 8 + ["interleave_pairs"] * 8
                     + ["interleave"] * 8)
    assert [op.lane_class for op in p8.ops] == [CROSS_LANE] * 16 + [IN_LANE] * 8


def test_plan_symbolic_letters():
    out = evaluate_plan(build_transpose_plan(4), letter_rows())
    assert [v.lanes for v in out] == [
        ("A", "E", "I", "M"), ("B", "F", "J", "N"),
        ("C", "G", "K", "O"), ("D", "H", "L", "P")]


@pytest.mark.parametrize("vl", [4, 8])
def test_plan_realizes_transpose(vl):
    rows = [VectorValue((i, j) for j in range(vl)) for i in range(vl)]
    out = evaluate_plan(build_transpose_plan(vl), rows)
    for j in range(vl):
        assert out[j].lanes == tuple((l, j) for l in range(vl))


def test_unsupported_vl():
    with pytest.raises(PlanError):
        build_transpose_plan(16)


@pytest.mark.parametrize("vl", [4, 8])
def test_apply_plan_twice_is_identity(vl, rng):
    plan = build_transpose_plan(vl)
    for _ in range(20):
        rows = tuple(VectorValue(rng.random(vl).tolist()) for _ in range(vl))
        assert apply_plan(plan, apply_plan(plan, rows)) == rows


def test_apply_plan_matches_index_oracle(rng):
    plan = build_transpose_plan(4)
    for _ in range(1000):
        flat = rng.random(16).tolist()
        rows = tuple(VectorValue(flat[l * 4:(l + 1) * 4]) for l in range(4))
        out = apply_plan(plan, rows)
        for j in range(4):
            for l in range(4):
                assert out[j][l] == flat[l * 4 + j]


def test_schedule_cost_improved_plan():
    cost = schedule_cost(build_transpose_plan(4), LatencyModel())
    assert cost.issue_cycles == 8
    assert cost.makespan == 9
    assert cost.stall_free


def test_schedule_cost_stage_swapped_worse():
    rows = letter_rows()
    swapped = build_stage_swapped_plan(4)
    # still a correct transpose in 8 ops
    assert [v.lanes for v in evaluate_plan(swapped, rows)] == \
        [v.lanes for v in evaluate_plan(build_transpose_plan(4), rows)]
    cost = schedule_cost(swapped, LatencyModel())
    assert cost.makespan == 11
    assert cost.makespan > schedule_cost(build_transpose_plan(4)).makespan


def test_schedule_cost_vl8_stall_free():
    cost = schedule_cost(build_transpose_plan(8))
    assert cost.issue_cycles == 24
    assert cost.stall_free


def test_schedule_cost_latency_parameter():
    # with uniform single-cycle latency both orderings tie
    flat = LatencyModel(in_lane_latency=1, cross_lane_latency=1)
    a = schedule_cost(build_transpose_plan(4), flat)
    b = schedule_cost(build_stage_swapped_plan(4), flat)
    assert a.makespan == b.makespan == 9


def test_plan_single_assignment_enforced():
    ops = (ShuffleOp("interleave", (0, 9), 4, "low", IN_LANE),)
    with pytest.raises(PlanError):
        ShufflePlan(4, ops, (0, 1, 2, 3), (4, 4, 4, 4))  # reads undefined 9


def test_format_plan_dump():
    text = format_plan(build_transpose_plan(4))
    assert "half_exchange" in text and "interleave" in text
    assert "stall-free: True" in text
    assert "issue cycles: 8" in text and "makespan: 9" in text


def test_block_transpose_stored_order():
    g = natural_grid(SPEC1, 16, pad_for=Layout.BLOCK_TRANSPOSE,
                     values=np.arange(16.0))
    to_block_transpose(g, 4)
    hu = g.halo_unit
    stored = g.data[hu:hu + 16]
    assert stored.tolist() == [0, 4, 8, 12, 1, 5, 9, 13, 2, 6, 10, 14, 3, 7, 11, 15]
    # element at natural offset 1 sits at stored offset 4
    assert stored[4] == 1.0


def test_block_transpose_round_trip(rng):
    for _ in range(50):
        vals = rng.random(48)
        g = natural_grid(SPEC1, 48, pad_for=Layout.BLOCK_TRANSPOSE, values=vals)
        snap = g.data.copy()
        from_block_transpose(to_block_transpose(g, 4))
        assert np.array_equal(g.data, snap)
        assert g.layout is Layout.NATURAL


def test_block_transpose_matches_plan(rng):
    """A single-block conversion equals the in-register transpose."""
    vals = rng.random(16)
    g = natural_grid(SPEC1, 16, pad_for=Layout.BLOCK_TRANSPOSE, values=vals)
    to_block_transpose(g, 4)
    rows_in = tuple(VectorValue(vals[l * 4:(l + 1) * 4].tolist()) for l in range(4))
    out = apply_plan(build_transpose_plan(4), rows_in)
    hu = g.halo_unit
    for j in range(4):
        assert tuple(g.data[hu + j * 4:hu + (j + 1) * 4].tolist()) == out[j].lanes


def test_block_transpose_layout_checks():
    g = natural_grid(SPEC1, 20)  # unpadded: 20 not a multiple of 16
    with pytest.raises(GridError):
        to_block_transpose(g, 4)
    g2 = natural_grid(SPEC1, 32, pad_for=Layout.BLOCK_TRANSPOSE)
    with pytest.raises(GridError):
        from_block_transpose(g2)  # still natural


def test_dlt_positions():
    g = natural_grid(SPEC1, 28, values=np.arange(28.0))
    to_dlt(g, 4)
    hu = g.halo_unit
    assert g.data[hu + 4:hu + 8].tolist() == [1, 8, 15, 22]
    assert g.data[hu:hu + 4].tolist() == [0, 7, 14, 21]


def test_dlt_round_trip(rng):
    for n in (28, 40, 30):
        vals = rng.random(n)
        g = natural_grid(SPEC1, n, pad_for=Layout.DLT, values=vals)
        snap = g.data.copy()
        from_dlt(to_dlt(g, 4))
        assert np.array_equal(g.data, snap)


def test_dlt_requires_divisible_extent():
    g = natural_grid(SPEC1, 30)  # 30 % 4 != 0, no padding requested
    with pytest.raises(GridError):
        to_dlt(g, 4)


def test_m_min_values():
    assert m_min(1) == 2
    assert m_min(2) == 3
    assert max(m_min(r) for r in range(1, 17)) == 3


def test_m_min_bound_independent_of_order():
    for r in range(1, 17):
        m = m_min(r)
        assert (2 * r + 1) * (m - 1) + 1 >= 4 * r
        assert m <= 3
