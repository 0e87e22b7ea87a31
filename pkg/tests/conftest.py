"""Shared helpers: grid builders and the iterated scalar oracle."""

import numpy as np
import pytest

from stencilbench.core import Layout, alloc_grid, alloc_like, make_stencil_spec
from stencilbench.kernels import method_layout, scalar_step
from stencilbench.transpose import to_block_transpose, to_dlt


def natural_grid(spec, dims, vl=4, pad_for=None, values=None):
    g = alloc_grid(spec, dims, Layout.NATURAL, vl, pad_for=pad_for)
    if values is not None:
        g.set_interior(values)
    return g


def layout_grid(spec, dims, layout, vl=4, values=None):
    """A grid already converted to ``layout`` holding ``values``."""
    pad = layout if layout is not Layout.NATURAL else None
    g = natural_grid(spec, dims, vl, pad_for=pad, values=values)
    if layout is Layout.BLOCK_TRANSPOSE:
        to_block_transpose(g, vl)
    elif layout is Layout.DLT:
        to_dlt(g, vl)
    return g


def method_grid(spec, dims, method, vl=4, values=None):
    return layout_grid(spec, dims, method_layout(method), vl, values)


def oracle_steps(spec, values, dims, steps, vl=4):
    """``steps`` applications of the scalar oracle, natural interior out."""
    a = natural_grid(spec, dims, vl, values=values)
    b = alloc_like(a)
    for _ in range(steps):
        scalar_step(a, b, spec)
        a, b = b, a
    return a.natural_interior()


def random_values(dims, seed):
    rng = np.random.default_rng(seed)
    return rng.random(dims if isinstance(dims, tuple) else (dims,))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
