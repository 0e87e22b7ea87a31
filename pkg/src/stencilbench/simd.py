"""Fixed-width vector values and the lane-movement ops kernels are built on.

Two value-identical implementations live here:

* ``VectorValue`` plus the module-level functions — a portable pure-Python
  form that also evaluates symbolically (lanes may be any hashable
  labels), used by shuffle-plan verification and the register pipeline.
* The ``np_*`` functions — the same ops over numpy arrays whose last axis
  is the lane axis.  numpy dispatches these to the host's vector units;
  the batched kernels are written against them.

All masks, selectors, and shift counts are compile-time-style immediates;
no runtime-variable shuffles exist anywhere in the scheme.

``fma`` in both forms computes ``a*b + c`` with an intermediate rounding
(multiply rounds, then the add rounds).  Hardware-fused arithmetic would
differ by at most 1 ulp; correctness tolerances elsewhere absorb that,
and keeping both implementations unfused makes them bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

#: Latency classes of the data-movement ops.
IN_LANE = "in-lane"
CROSS_LANE = "cross-lane"

LOW = "low"
HIGH = "high"


class VectorValue:
    """An immutable vector of ``vl`` lanes (floats or symbolic labels)."""

    __slots__ = ("lanes",)

    def __init__(self, lanes):
        self.lanes = tuple(lanes)

    @property
    def vl(self) -> int:
        return len(self.lanes)

    def __getitem__(self, i: int):
        return self.lanes[i]

    def __iter__(self):
        return iter(self.lanes)

    def __eq__(self, other: Any) -> bool:
        return isinstance(other, VectorValue) and self.lanes == other.lanes

    def __hash__(self) -> int:
        return hash(self.lanes)

    def __repr__(self) -> str:
        return f"VectorValue{self.lanes!r}"


def broadcast(value, vl: int) -> VectorValue:
    return VectorValue((value,) * vl)


def blend(a: VectorValue, b: VectorValue, mask: int) -> VectorValue:
    """Per-lane select: lane l of the result is b[l] if mask bit l is set.

    In-lane; mirrors a blend immediate (bit l controls lane l).
    """
    return VectorValue(b[l] if (mask >> l) & 1 else a[l] for l in range(a.vl))


def rotate_lanes(a: VectorValue, k: int) -> VectorValue:
    """Right-circular rotation by k lanes: lane l gets a[(l-k) mod vl].

    Cross-lane (lane 0 draws from the far end of the register).
    """
    vl = a.vl
    if not 0 <= k < vl:
        raise ValueError(f"rotate count {k} outside [0, {vl})")
    return VectorValue(a[(l - k) % vl] for l in range(vl))


def half_exchange(a: VectorValue, b: VectorValue, sel: tuple[str, str]) -> VectorValue:
    """Concatenate one chosen half of ``a`` with one chosen half of ``b``.

    ``sel`` picks ("low"|"high") per source.  Cross-lane: the result's
    upper half always comes from the other register.
    """
    vl = a.vl
    half = vl // 2
    start_a = 0 if sel[0] == LOW else half
    start_b = 0 if sel[1] == LOW else half
    return VectorValue(a.lanes[start_a:start_a + half] + b.lanes[start_b:start_b + half])


def interleave(a: VectorValue, b: VectorValue, parity: str) -> VectorValue:
    """Interleave even (low) or odd (high) lanes of each lane pair.

    low  -> (a0, b0, a2, b2, ...); high -> (a1, b1, a3, b3, ...).
    In-lane: every result lane stays inside its 2-lane pair.
    """
    p = 0 if parity == LOW else 1
    out = []
    for i in range(0, a.vl, 2):
        out.append(a[i + p])
        out.append(b[i + p])
    return VectorValue(out)


def interleave_pairs(a: VectorValue, b: VectorValue, parity: str) -> VectorValue:
    """Interleave even (low) or odd (high) 2-lane blocks of the sources.

    low  -> (a[0:2], b[0:2], a[4:6], b[4:6]); high shifts by one block.
    Cross-lane: 2-lane blocks move across the register halves.  This is
    the middle stage of the vl=8 transpose network; unused for vl=4.
    """
    p = 0 if parity == LOW else 2
    out = []
    for i in range(0, a.vl, 4):
        out.extend(a.lanes[i + p:i + p + 2])
        out.extend(b.lanes[i + p:i + p + 2])
    return VectorValue(out)


def fma(a: VectorValue, b: VectorValue, c: VectorValue) -> VectorValue:
    """Lane-wise a*b + c with intermediate rounding (see module docs)."""
    return VectorValue(a[l] * b[l] + c[l] for l in range(a.vl))


# Array counterparts: lane axis last, leading axes batch freely.

def np_blend(a: np.ndarray, b: np.ndarray, mask: int) -> np.ndarray:
    vl = a.shape[-1]
    sel = np.array([(mask >> l) & 1 for l in range(vl)], dtype=bool)
    return np.where(sel, b, a)


def np_rotate_lanes(a: np.ndarray, k: int) -> np.ndarray:
    return np.roll(a, k, axis=-1)


def np_half_exchange(a: np.ndarray, b: np.ndarray, sel: tuple[str, str]) -> np.ndarray:
    half = a.shape[-1] // 2
    sa = slice(0, half) if sel[0] == LOW else slice(half, 2 * half)
    sb = slice(0, half) if sel[1] == LOW else slice(half, 2 * half)
    return np.concatenate([a[..., sa], b[..., sb]], axis=-1)


def np_interleave(a: np.ndarray, b: np.ndarray, parity: str) -> np.ndarray:
    p = 0 if parity == LOW else 1
    out = np.empty_like(a)
    out[..., 0::2] = a[..., p::2]
    out[..., 1::2] = b[..., p::2]
    return out


def np_interleave_pairs(a: np.ndarray, b: np.ndarray, parity: str) -> np.ndarray:
    vl = a.shape[-1]
    p = 0 if parity == LOW else 2
    out = np.empty_like(a)
    for i in range(0, vl, 4):
        out[..., i:i + 2] = a[..., i + p:i + p + 2]
        out[..., i + 2:i + 4] = b[..., i + p:i + p + 2]
    return out


def np_fma(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return a * b + c


@dataclass(frozen=True)
class LatencyModel:
    """Issue/latency model for data-movement instructions.

    Cross-lane moves cost more than in-lane ones on every mainstream
    vector ISA; 3 cycles is the common case, so it is the default, and
    it stays a parameter rather than a constant.
    """

    in_lane_latency: int = 1
    cross_lane_latency: int = 3
    issue_width: int = 1

    def __post_init__(self):
        for f in ("in_lane_latency", "cross_lane_latency", "issue_width"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be a positive integer")

    def latency(self, lane_class: str) -> int:
        return (self.in_lane_latency if lane_class == IN_LANE
                else self.cross_lane_latency)
