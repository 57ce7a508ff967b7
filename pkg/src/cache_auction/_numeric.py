"""Shared scalar root-finding helpers."""

from __future__ import annotations

import math
from typing import Callable


def invert_increasing(
    fn: Callable[[float], float],
    target: float,
    lower: float,
    upper: float = math.inf,
    tol: float = 1e-10,
) -> float:
    """Return ``inf{x >= lower : fn(x) >= target}`` for a weakly increasing ``fn``.

    If ``upper`` is infinite the bracket is grown geometrically from ``lower``
    until ``fn`` reaches the target.  The search keeps the invariant
    ``fn(lo) < target <= fn(hi)`` and bisects until the bracket is below
    ``tol`` or floating point resolution, whichever comes first.
    """
    if fn(lower) >= target:
        return lower
    lo = lower
    if math.isinf(upper):
        step = max(1.0, abs(lower))
        hi = lower + step
        while fn(hi) < target:
            lo = hi
            step *= 2.0
            hi = lower + step
            if step > 1e30:
                raise ValueError("failed to bracket target; function may be bounded")
    else:
        hi = upper
        if fn(hi) < target:
            raise ValueError(f"target {target!r} above function range on [{lower}, {upper}]")
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if fn(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi
