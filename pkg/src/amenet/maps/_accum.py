"""Backend selection for the grid accumulation loops.

The compiled Cython kernel is used when present; otherwise a pure-Python
twin with identical semantics takes over.  ``AMENET_MAPS_BACKEND=python``
forces the fallback (used by the benchmark and the equivalence tests).
Both paths accumulate in float64, iterate neighbors in the caller's order,
and call the same libm routines, so their outputs are bit-identical.
"""

from __future__ import annotations

import math
import os

try:
    from . import _mapkernel as _compiled
except ImportError:  # extension not built
    _compiled = None

_FORCED = os.environ.get("AMENET_MAPS_BACKEND", "").strip().lower()
if _FORCED not in ("", "python", "cython"):
    raise RuntimeError(f"AMENET_MAPS_BACKEND must be 'python' or 'cython', got {_FORCED!r}")
if _FORCED == "cython" and _compiled is None:
    raise RuntimeError("AMENET_MAPS_BACKEND=cython but the compiled kernel is unavailable")

_USE_COMPILED = _compiled is not None and _FORCED != "python"


def active_backend() -> str:
    """Name of the accumulation backend in use ('cython' or 'python')."""
    return "cython" if _USE_COMPILED else "python"


def accumulate_dynamic_py(rel_pos, rel_off, nbr_off, dt, sin_sum, cos_sum, speed_sum, count):
    W, H = sin_sum.shape
    half_w, half_h = 0.5 * W, 0.5 * H
    for m in range(rel_pos.shape[0]):
        u = rel_pos[m, 0] + rel_off[m, 0]
        v = rel_pos[m, 1] + rel_off[m, 1]
        w = math.floor(half_w + u)
        h = math.floor(half_h + v)
        if w < 0 or w >= W or h < 0 or h >= H:
            continue
        dx = nbr_off[m, 0]
        dy = nbr_off[m, 1]
        r = math.sqrt(dx * dx + dy * dy)
        if r == 0.0:
            # zero-motion convention: heading 0 -> unit vector (1, 0)
            cos_sum[w, h] += 1.0
        else:
            sin_sum[w, h] += dy / r
            cos_sum[w, h] += dx / r
        speed_sum[w, h] += r / dt
        count[w, h] += 1.0


def accumulate_occupancy_py(rel_pos, occ_count):
    W, H = occ_count.shape
    half_w, half_h = 0.5 * W, 0.5 * H
    for m in range(rel_pos.shape[0]):
        w = math.floor(half_w + rel_pos[m, 0])
        h = math.floor(half_h + rel_pos[m, 1])
        if w < 0 or w >= W or h < 0 or h >= H:
            continue
        occ_count[w, h] += 1.0


if _USE_COMPILED:
    accumulate_dynamic = _compiled.accumulate_dynamic
    accumulate_occupancy = _compiled.accumulate_occupancy
else:
    accumulate_dynamic = accumulate_dynamic_py
    accumulate_occupancy = accumulate_occupancy_py
