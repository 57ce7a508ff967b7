"""Static auction instances: interest structure, costs, quality and prices.

User and content indices are 0-based everywhere in memory; the JSON config
format uses 1-based ids and conversion happens only at the (de)serialization
boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from ._numeric import invert_increasing
from .distributions import TypeDistribution, check_regularity, distribution_from_spec

# Bisection below float resolution so the h' round trip holds to 1e-10
# even where h' is steep.
INVERSE_DERIVATIVE_TOLERANCE = 1e-13


class ConfigError(ValueError):
    """An instance description is structurally invalid."""


@dataclass(frozen=True)
class InterestStructure:
    """Who wants what: per-content interest sets plus the per-user transpose.

    ``interested_users[i]`` is the sorted tuple of users interested in
    content ``i``; ``contents_for_user[j]`` is derived once at construction
    so both directions of the relation are O(1) to enumerate.
    """

    num_contents: int
    num_users: int
    interested_users: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.num_contents < 1 or self.num_users < 1:
            raise ConfigError("need at least one content and one user")
        if len(self.interested_users) != self.num_contents:
            raise ConfigError(
                f"got {len(self.interested_users)} interest sets for "
                f"{self.num_contents} contents"
            )
        normalized = []
        for i, users in enumerate(self.interested_users):
            users = tuple(sorted(users))
            if len(set(users)) != len(users):
                raise ConfigError(f"duplicate users in interest set of content {i + 1}")
            if users and (users[0] < 0 or users[-1] >= self.num_users):
                raise ConfigError(f"user index out of range in interest set of content {i + 1}")
            normalized.append(users)
        object.__setattr__(self, "interested_users", tuple(normalized))

    @cached_property
    def contents_for_user(self) -> tuple[tuple[int, ...], ...]:
        per_user: list[list[int]] = [[] for _ in range(self.num_users)]
        for i, users in enumerate(self.interested_users):
            for j in users:
                per_user[j].append(i)
        return tuple(tuple(contents) for contents in per_user)

    @cached_property
    def membership(self) -> np.ndarray:
        """Boolean (num_contents, num_users) matrix of the interest relation."""
        mat = np.zeros((self.num_contents, self.num_users), dtype=bool)
        for i, users in enumerate(self.interested_users):
            mat[i, list(users)] = True
        return mat

    @cached_property
    def set_sizes(self) -> np.ndarray:
        return np.array([len(u) for u in self.interested_users], dtype=float)


@dataclass(frozen=True)
class PopularityModel:
    """Independent per-content inclusion probabilities for random interests."""

    inclusion_probs: tuple[float, ...]
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "inclusion_probs", tuple(float(q) for q in self.inclusion_probs))
        for q in self.inclusion_probs:
            if not 0.0 <= q <= 1.0:
                raise ConfigError(f"inclusion probability {q} outside [0, 1]")


def sample_interest_structure(pop: PopularityModel, num_users: int) -> InterestStructure:
    """Sample interest sets: user j joins content i's set w.p. q_i, independently."""
    if num_users < 1:
        raise ConfigError("num_users must be positive")
    rng = np.random.Generator(np.random.Philox(pop.seed))
    draws = rng.random((len(pop.inclusion_probs), num_users))
    sets = tuple(
        tuple(np.nonzero(draws[i] < q)[0].tolist())
        for i, q in enumerate(pop.inclusion_probs)
    )
    return InterestStructure(len(pop.inclusion_probs), num_users, sets)


class CostFunction:
    """Delivery cost per (user, content) as a function of quality.

    Required shape: value(0) = 0, convex, derivative(0) = 0 and the
    derivative strictly increasing and unbounded, so ``derivative_inverse``
    is defined on all of [0, inf).
    """

    def value(self, theta: float) -> float:
        raise NotImplementedError

    def derivative(self, theta: float) -> float:
        raise NotImplementedError

    def derivative_inverse(self, y: float) -> float:
        if y < 0:
            raise ValueError(f"derivative is nonnegative; cannot invert at {y}")
        return invert_increasing(self.derivative, y, 0.0, tol=INVERSE_DERIVATIVE_TOLERANCE)

    def validate_shape(self) -> None:
        """Numeric sanity check of the required cost shape; raises ConfigError."""
        if abs(self.value(0.0)) > 1e-12 or abs(self.derivative(0.0)) > 1e-12:
            raise ConfigError("cost must satisfy h(0) = 0 and h'(0) = 0")
        grid = np.geomspace(1e-3, 1e3, 25)
        deriv = np.array([self.derivative(t) for t in grid])
        if np.any(np.diff(deriv) <= 0):
            raise ConfigError("cost derivative must be strictly increasing")

    def to_spec(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class QuadraticCost(CostFunction):
    """h(theta) = alpha * theta^2."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")

    def value(self, theta):
        return self.alpha * theta * theta

    def derivative(self, theta):
        return 2.0 * self.alpha * theta

    def derivative_inverse(self, y):
        if y < 0:
            raise ValueError(f"derivative is nonnegative; cannot invert at {y}")
        return y / (2.0 * self.alpha)

    def to_spec(self):
        return {"kind": "quadratic", "alpha": self.alpha}


@dataclass(frozen=True)
class PowerCost(CostFunction):
    """h(theta) = alpha * theta^exponent with exponent > 1."""

    alpha: float
    exponent: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not self.exponent > 1:
            raise ConfigError(f"exponent must exceed 1, got {self.exponent}")

    def value(self, theta):
        return self.alpha * theta**self.exponent

    def derivative(self, theta):
        return self.alpha * self.exponent * theta ** (self.exponent - 1.0)

    def derivative_inverse(self, y):
        if y < 0:
            raise ValueError(f"derivative is nonnegative; cannot invert at {y}")
        return (y / (self.alpha * self.exponent)) ** (1.0 / (self.exponent - 1.0))

    def to_spec(self):
        return {"kind": "power", "alpha": self.alpha, "exponent": self.exponent}


@dataclass(frozen=True)
class PolynomialCost(CostFunction):
    """h(theta) = sum_k coefficients[k] * theta^(k+2), coefficients nonnegative.

    Starting the polynomial at theta^2 keeps h(0) = h'(0) = 0 by
    construction; the derivative inverse falls back to bisection.
    """

    coefficients: tuple[float, ...]

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if not coeffs or all(c == 0.0 for c in coeffs):
            raise ConfigError("polynomial cost needs at least one nonzero coefficient")
        if any(c < 0 for c in coeffs):
            raise ConfigError("polynomial cost coefficients must be nonnegative")

    def value(self, theta):
        return sum(c * theta ** (k + 2) for k, c in enumerate(self.coefficients))

    def derivative(self, theta):
        return sum((k + 2) * c * theta ** (k + 1) for k, c in enumerate(self.coefficients))

    def to_spec(self):
        return {"kind": "polynomial", "coefficients": list(self.coefficients)}


class CustomCost(CostFunction):
    """Cost from callables; inverse derivative bisects unless supplied."""

    def __init__(
        self,
        value: Callable[[float], float],
        derivative: Callable[[float], float],
        derivative_inverse: Callable[[float], float] | None = None,
    ):
        self._value = value
        self._derivative = derivative
        self._inverse = derivative_inverse
        self.validate_shape()

    def value(self, theta):
        return self._value(theta)

    def derivative(self, theta):
        return self._derivative(theta)

    def derivative_inverse(self, y):
        if self._inverse is not None:
            return self._inverse(y)
        return super().derivative_inverse(y)

    def to_spec(self):
        raise ConfigError("custom cost functions cannot be serialized to JSON")


def cost_from_spec(spec: dict) -> CostFunction:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"cost spec must be an object with a 'kind': {spec!r}")
    kind = spec["kind"]
    if kind == "quadratic":
        _require_keys(spec, {"kind", "alpha"}, "cost")
        return QuadraticCost(float(spec["alpha"]))
    if kind == "power":
        _require_keys(spec, {"kind", "alpha", "exponent"}, "cost")
        return PowerCost(float(spec["alpha"]), float(spec["exponent"]))
    if kind == "polynomial":
        _require_keys(spec, {"kind", "coefficients"}, "cost")
        return PolynomialCost(tuple(spec["coefficients"]))
    raise ConfigError(f"unknown cost kind {kind!r}")


@dataclass(frozen=True)
class AuctionInstance:
    """The full market: interests, prices, delivery cost and valuation laws.

    Immutable after construction and safe to share across workers; the
    ``with_*`` helpers build modified copies for parameter sweeps.
    """

    interests: InterestStructure
    content_prices: tuple[float, ...]
    cost: CostFunction
    theta: float
    distributions: tuple[TypeDistribution, ...]

    def __post_init__(self):
        object.__setattr__(self, "content_prices", tuple(float(r) for r in self.content_prices))
        object.__setattr__(self, "distributions", tuple(self.distributions))
        if len(self.content_prices) != self.interests.num_contents:
            raise ConfigError(
                f"{len(self.content_prices)} prices for {self.interests.num_contents} contents"
            )
        if any(r < 0 for r in self.content_prices):
            raise ConfigError("content prices must be nonnegative")
        if len(self.distributions) != self.interests.num_users:
            raise ConfigError(
                f"{len(self.distributions)} distributions for "
                f"{self.interests.num_users} users"
            )
        if not self.theta > 0:
            raise ConfigError(f"theta must be positive, got {self.theta}")

    @property
    def num_contents(self) -> int:
        return self.interests.num_contents

    @property
    def num_users(self) -> int:
        return self.interests.num_users

    @property
    def delivery_cost(self) -> float:
        """Per-user unit delivery cost h(theta) at this instance's quality."""
        return self.cost.value(self.theta)

    @cached_property
    def prices_array(self) -> np.ndarray:
        return np.array(self.content_prices, dtype=float)

    @cached_property
    def lower_bounds(self) -> np.ndarray:
        return np.array([d.lower for d in self.distributions], dtype=float)

    @cached_property
    def virtual_at_lower(self) -> np.ndarray:
        return np.array([float(d.virtual(d.lower)) for d in self.distributions], dtype=float)

    def with_theta(self, theta: float) -> "AuctionInstance":
        return AuctionInstance(self.interests, self.content_prices, self.cost, theta, self.distributions)

    def with_cost(self, cost: CostFunction) -> "AuctionInstance":
        return AuctionInstance(self.interests, self.content_prices, cost, self.theta, self.distributions)

    def with_distributions(self, dists: Sequence[TypeDistribution]) -> "AuctionInstance":
        return AuctionInstance(self.interests, self.content_prices, self.cost, self.theta, tuple(dists))

    def with_interests(self, interests: InterestStructure) -> "AuctionInstance":
        return AuctionInstance(interests, self.content_prices, self.cost, self.theta, self.distributions)

    def validate_profile(self, profile: Sequence[float]) -> np.ndarray:
        values = np.asarray(profile, dtype=float)
        if values.shape != (self.num_users,):
            raise ConfigError(f"profile has shape {values.shape}, expected ({self.num_users},)")
        for j, (t, d) in enumerate(zip(values, self.distributions)):
            if not d.in_support(float(t)):
                raise ConfigError(
                    f"profile value {t} for user {j + 1} outside support [{d.lower}, {d.upper}]"
                )
        return values


_INSTANCE_KEYS = {
    "num_contents",
    "num_users",
    "interest_sets",
    "popularity",
    "content_prices",
    "cost",
    "theta",
    "distributions",
}


def build_instance(config: dict, *, strict_regularity: bool = False) -> AuctionInstance:
    """Build and validate an instance from its JSON-style config dict.

    Interest sets come either explicitly (``interest_sets``, 1-based user
    ids) or from a seeded popularity model; exactly one must be present.
    Unknown keys are rejected to catch typos.  With ``strict_regularity``
    every distribution must pass the numeric regularity check.
    """
    if not isinstance(config, dict):
        raise ConfigError("instance config must be a JSON object")
    extra = set(config) - _INSTANCE_KEYS
    if extra:
        raise ConfigError(f"unknown instance keys {sorted(extra)}")
    for key in ("num_contents", "num_users", "content_prices", "cost", "theta", "distributions"):
        if key not in config:
            raise ConfigError(f"missing instance key {key!r}")
    m = int(config["num_contents"])
    n = int(config["num_users"])
    if ("interest_sets" in config) == ("popularity" in config):
        raise ConfigError("provide exactly one of 'interest_sets' and 'popularity'")

    if "interest_sets" in config:
        raw_sets = config["interest_sets"]
        if len(raw_sets) != m:
            raise ConfigError(f"{len(raw_sets)} interest sets for {m} contents")
        sets = []
        for users in raw_sets:
            for u in users:
                if not 1 <= int(u) <= n:
                    raise ConfigError(f"user id {u} outside 1..{n}")
            sets.append(tuple(int(u) - 1 for u in users))
        interests = InterestStructure(m, n, tuple(sets))
    else:
        pop = config["popularity"]
        _require_keys(pop, {"q", "seed"}, "popularity")
        if len(pop["q"]) != m:
            raise ConfigError(f"{len(pop['q'])} inclusion probabilities for {m} contents")
        interests = sample_interest_structure(PopularityModel(tuple(pop["q"]), int(pop["seed"])), n)

    cost = cost_from_spec(config["cost"])
    cost.validate_shape()
    dists = tuple(_dist_from_spec(d) for d in config["distributions"])
    instance = AuctionInstance(
        interests=interests,
        content_prices=tuple(config["content_prices"]),
        cost=cost,
        theta=float(config["theta"]),
        distributions=dists,
    )
    if strict_regularity:
        for j, dist in enumerate(instance.distributions):
            report = check_regularity(dist, 512)
            if not report.passed:
                raise ConfigError(
                    f"distribution of user {j + 1} fails regularity at {report.witness}"
                )
    return instance


def instance_to_config(inst: AuctionInstance) -> dict:
    """Serialize an instance to the JSON config format (1-based ids)."""
    return {
        "num_contents": inst.num_contents,
        "num_users": inst.num_users,
        "interest_sets": [[j + 1 for j in users] for users in inst.interests.interested_users],
        "content_prices": list(inst.content_prices),
        "cost": inst.cost.to_spec(),
        "theta": inst.theta,
        "distributions": [d.to_spec() for d in inst.distributions],
    }


def _dist_from_spec(spec: dict) -> TypeDistribution:
    try:
        return distribution_from_spec(spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _require_keys(spec: dict, allowed: set[str], what: str) -> None:
    if not isinstance(spec, dict):
        raise ConfigError(f"{what} spec must be a JSON object")
    extra = set(spec) - allowed
    if extra:
        raise ConfigError(f"unknown {what} keys {sorted(extra)}")
    missing = allowed - set(spec)
    if missing:
        raise ConfigError(f"missing {what} keys {sorted(missing)}")
