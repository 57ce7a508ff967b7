"""Per-user valuation distributions and their virtual-valuation machinery.

Every distribution exposes, besides the usual pdf/cdf/ppf triple, the virtual
valuation ``c(t) = t - (1 - F(t)) / f(t)`` and its generalized inverse
``inf{t : c(t) >= z}``.  The mechanism is well behaved only when ``c`` is
(weakly) increasing on the support, which :func:`check_regularity` verifies
numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._numeric import invert_increasing

REGULARITY_TOLERANCE = 1e-9
INVERSE_TOLERANCE = 1e-10

# Quantile range used when a grid must span an unbounded support.
_QUANTILE_LO = 1e-6
_QUANTILE_HI = 1.0 - 1e-6


class OutOfSupportError(ValueError):
    """A valuation lies outside the distribution's support."""


class VirtualValueRangeError(ValueError):
    """A target virtual value exceeds the range of c on the support."""


@dataclass(frozen=True)
class RegularityReport:
    """Outcome of the numeric monotonicity check on the virtual valuation."""

    passed: bool
    grid_points: int
    witness: tuple[float, float] | None = None
    drop: float = 0.0


class TypeDistribution:
    """Base class for one user's valuation law.

    Subclasses must define ``lower``/``upper`` support endpoints (``upper``
    may be ``math.inf``) and the methods below.  All array arguments are
    handled elementwise; scalar inputs return scalars.
    """

    lower: float
    upper: float

    def pdf(self, t):
        raise NotImplementedError

    def cdf(self, t):
        raise NotImplementedError

    def ppf(self, u):
        """Inverse cdf, used for inversion sampling."""
        raise NotImplementedError

    def virtual(self, t):
        """Virtual valuation c(t); assumes t lies in the support."""
        raise NotImplementedError

    def virtual_inverse(self, z):
        """inf{t in support : c(t) >= z}, clamped into the support."""
        raise NotImplementedError

    def virtual_upper(self) -> float:
        """Supremum of c over the support."""
        raise NotImplementedError

    def in_support(self, t) -> bool:
        return self.lower <= t <= self.upper

    def grid(self, points: int) -> np.ndarray:
        """A grid spanning the support, quantile-spaced when unbounded."""
        if math.isinf(self.upper):
            return np.asarray(self.ppf(np.linspace(_QUANTILE_LO, _QUANTILE_HI, points)))
        return np.linspace(self.lower, self.upper, points)

    def to_spec(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(TypeDistribution):
    """Uniform valuation on [lower, upper]; c(t) = 2t - upper."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError("uniform support must be finite")
        if not self.lower < self.upper:
            raise ValueError(f"uniform needs lower < upper, got [{self.lower}, {self.upper}]")

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= self.lower) & (t <= self.upper)
        out = np.where(inside, 1.0 / (self.upper - self.lower), 0.0)
        return out if out.ndim else float(out)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.clip((t - self.lower) / (self.upper - self.lower), 0.0, 1.0)
        return out if out.ndim else float(out)

    def ppf(self, u):
        return self.lower + u * (self.upper - self.lower)

    def virtual(self, t):
        return 2.0 * t - self.upper

    def virtual_inverse(self, z):
        return np.clip((z + self.upper) / 2.0, self.lower, self.upper)

    def virtual_upper(self) -> float:
        return self.upper

    def to_spec(self) -> dict:
        return {"kind": "uniform", "lower": self.lower, "upper": self.upper}


@dataclass(frozen=True)
class Exponential(TypeDistribution):
    """Exponential valuation with the given rate on [0, inf); c(t) = t - 1/rate."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")

    @property
    def lower(self) -> float:  # type: ignore[override]
        return 0.0

    @property
    def upper(self) -> float:  # type: ignore[override]
        return math.inf

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t >= 0.0, self.rate * np.exp(-self.rate * t), 0.0)
        return out if out.ndim else float(out)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t >= 0.0, -np.expm1(-self.rate * t), 0.0)
        return out if out.ndim else float(out)

    def ppf(self, u):
        return -np.log1p(-u) / self.rate

    def virtual(self, t):
        return t - 1.0 / self.rate

    def virtual_inverse(self, z):
        return np.maximum(z + 1.0 / self.rate, 0.0)

    def virtual_upper(self) -> float:
        return math.inf

    def to_spec(self) -> dict:
        return {"kind": "exponential", "rate": self.rate}


class CustomDistribution(TypeDistribution):
    """Valuation law given by arbitrary pdf/cdf callables.

    The virtual valuation is computed directly from the pdf and cdf and the
    generalized inverse falls back to monotone bisection, so the law should
    be regular whenever the inverse is exercised.  An explicit ``ppf`` may
    be supplied; otherwise sampling inverts the cdf numerically.
    """

    def __init__(
        self,
        pdf: Callable[[float], float],
        cdf: Callable[[float], float],
        lower: float,
        upper: float,
        ppf: Callable[[float], float] | None = None,
    ):
        self._pdf = pdf
        self._cdf = cdf
        self.lower = float(lower)
        self.upper = float(upper)
        self._ppf = ppf

    def pdf(self, t):
        return self._pdf(t)

    def cdf(self, t):
        return self._cdf(t)

    def ppf(self, u):
        if self._ppf is not None:
            return self._ppf(u)
        u_arr = np.atleast_1d(np.asarray(u, dtype=float))
        out = np.array(
            [
                invert_increasing(self._cdf, ui, self.lower, self.upper, tol=INVERSE_TOLERANCE)
                for ui in u_arr
            ]
        )
        return out if np.ndim(u) else float(out[0])

    def virtual(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        tail = 1.0 - np.asarray(self._cdf(t_arr), dtype=float)
        dens = np.asarray(self._pdf(t_arr), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(tail == 0.0, t_arr, t_arr - tail / dens)
        return out if np.ndim(t) else float(out[0])

    def virtual_inverse(self, z):
        z_arr = np.atleast_1d(np.asarray(z, dtype=float))
        out = np.array([self._scalar_inverse(zi) for zi in z_arr])
        return out if np.ndim(z) else float(out[0])

    def _scalar_inverse(self, z: float) -> float:
        if self.virtual(self.lower) >= z:
            return self.lower
        return invert_increasing(
            lambda t: self.virtual(t), z, self.lower, self.upper, tol=INVERSE_TOLERANCE
        )

    def virtual_upper(self) -> float:
        if math.isinf(self.upper):
            return math.inf
        return float(self.virtual(self.upper))

    def to_spec(self) -> dict:
        raise ValueError("custom distributions cannot be serialized to JSON")


def virtual_valuation(dist: TypeDistribution, t: float) -> float:
    """Virtual valuation c(t), validating that t lies in the support.

    Raises :class:`OutOfSupportError` for t outside the support or where the
    density vanishes (which would make c infinite).
    """
    if not dist.in_support(t):
        raise OutOfSupportError(f"t={t} outside support [{dist.lower}, {dist.upper}]")
    if float(dist.cdf(t)) < 1.0 and float(dist.pdf(t)) == 0.0:
        raise OutOfSupportError(f"pdf vanishes at t={t}; virtual valuation undefined")
    return float(dist.virtual(t))


def inverse_virtual_valuation(dist: TypeDistribution, z: float) -> float:
    """Smallest in-support valuation whose virtual value reaches z.

    Values of z below the range clamp to the lower support endpoint; values
    above the range (possible only for bounded supports) raise
    :class:`VirtualValueRangeError`.
    """
    top = dist.virtual_upper()
    if z > top:
        raise VirtualValueRangeError(f"z={z} above the maximum virtual value {top}")
    return float(dist.virtual_inverse(z))


def check_regularity(dist: TypeDistribution, grid_points: int) -> RegularityReport:
    """Check that the virtual valuation is nondecreasing on a support grid.

    A decrease larger than ``REGULARITY_TOLERANCE`` between consecutive grid
    points fails the check and is reported with the first offending pair.
    """
    if grid_points < 2:
        raise ValueError("grid_points must be at least 2")
    grid = dist.grid(grid_points)
    values = np.asarray(dist.virtual(grid), dtype=float)
    drops = values[:-1] - values[1:]
    bad = np.nonzero(drops > REGULARITY_TOLERANCE)[0]
    if bad.size:
        k = int(bad[0])
        return RegularityReport(
            passed=False,
            grid_points=grid_points,
            witness=(float(grid[k]), float(grid[k + 1])),
            drop=float(drops[k]),
        )
    return RegularityReport(passed=True, grid_points=grid_points)


def sample(dist: TypeDistribution, rng: np.random.Generator, size=None):
    """Draw valuations by cdf inversion; deterministic given the rng state."""
    return dist.ppf(rng.random(size))


def distribution_from_spec(spec: dict) -> TypeDistribution:
    """Build a distribution from its JSON form; unknown kinds or keys error."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError(f"distribution spec must be an object with a 'kind': {spec!r}")
    kind = spec["kind"]
    if kind == "uniform":
        _require_keys(spec, {"kind", "lower", "upper"})
        return Uniform(float(spec["lower"]), float(spec["upper"]))
    if kind == "exponential":
        _require_keys(spec, {"kind", "rate"})
        return Exponential(float(spec["rate"]))
    raise ValueError(f"unknown distribution kind {kind!r}")


def _require_keys(spec: dict, allowed: set[str]) -> None:
    extra = set(spec) - allowed
    if extra:
        raise ValueError(f"unknown distribution keys {sorted(extra)}")
    missing = allowed - set(spec)
    if missing:
        raise ValueError(f"missing distribution keys {sorted(missing)}")
