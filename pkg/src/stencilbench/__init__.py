"""Stencil kernels over SIMD-friendly transpose layouts.

Public surface: stencil presets and grids (:mod:`.core`), portable vector
ops (:mod:`.simd`), transpose networks and layout conversion
(:mod:`.transpose`), single-step kernels (:mod:`.kernels`), the
multi-step register pipeline (:mod:`.timejam`), tessellate tiling
(:mod:`.tiling`), and the benchmark harness (:mod:`.harness`).
"""

from .core import (GridBuffer, Layout, StencilSpec, VectorSet, alloc_grid,
                   flops_per_point, make_stencil_spec, PRESET_NAMES)
from .simd import LatencyModel, VectorValue
from .transpose import (ShuffleOp, ShufflePlan, apply_plan,
                        build_transpose_plan, from_block_transpose, from_dlt,
                        m_min, schedule_cost, to_block_transpose, to_dlt)

__version__ = "0.1.0"
