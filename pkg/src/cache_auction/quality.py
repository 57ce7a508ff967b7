"""Choosing the content delivery quality.

For many users with identically distributed valuations whose common support
starts at a positive bound, the revenue-maximizing quality solves
``h'(theta) = lower_bound`` in closed form.  For everything else (finite
user counts, heterogeneous users) :func:`er_curve` estimates the expected
revenue on a quality grid with shared draws and picks the empirical argmax.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import batch
from .model import AuctionInstance, CostFunction
from .simulation import EstimateWithError

METHOD_CLOSED_FORM = "closed_form"
METHOD_NUMERIC_SWEEP = "numeric_sweep"


@dataclass(frozen=True)
class CurvePoint:
    theta: float
    er: EstimateWithError
    avg_user_utility: EstimateWithError


@dataclass(frozen=True)
class QualityResult:
    theta_star: float
    method: str
    er_at_star: EstimateWithError | None = None
    curve: tuple[CurvePoint, ...] | None = None


def optimal_theta_closed_form(cost: CostFunction, common_lower_bound: float) -> float:
    """Quality where the marginal delivery cost equals the support bottom.

    Valid for the homogeneous large-market regime, which requires the
    common lower support bound to be strictly positive.
    """
    if not common_lower_bound > 0:
        raise ValueError(
            f"common lower support bound must be positive, got {common_lower_bound}"
        )
    return float(cost.derivative_inverse(common_lower_bound))


def er_curve(
    inst: AuctionInstance,
    theta_grid,
    trials: int,
    seed: int,
    threads: int = 1,
) -> QualityResult:
    """Estimate expected revenue over a quality grid with common draws.

    Every grid point reuses the same sampled valuations, so the curve is
    smooth in theta and the argmax is a paired comparison.  Ties break
    toward the smaller (cheaper) quality; the grid is evaluated in sorted
    order.
    """
    grid = sorted(float(t) for t in theta_grid)
    if not grid:
        raise ValueError("theta grid must be nonempty")
    if trials < 1:
        raise ValueError("trials must be positive")
    types = batch.sample_types(inst, trials, seed)

    def point(theta: float) -> CurvePoint:
        swept = inst.with_theta(theta)
        out = batch.evaluate(swept, types)
        utilities = batch.user_utilities(out, theta).mean(axis=1)
        return CurvePoint(
            theta=theta,
            er=EstimateWithError.from_samples(out.virtual_surplus),
            avg_user_utility=EstimateWithError.from_samples(utilities),
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            curve = tuple(pool.map(point, grid))
    else:
        curve = tuple(point(theta) for theta in grid)

    best = int(np.argmax([p.er.mean for p in curve]))  # first max: smaller theta
    return QualityResult(
        theta_star=curve[best].theta,
        method=METHOD_NUMERIC_SWEEP,
        er_at_star=curve[best].er,
        curve=curve,
    )
