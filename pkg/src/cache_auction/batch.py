"""Vectorized evaluation of the mechanism over many type profiles at once.

This is the Monte-Carlo hot path: one call scores, allocates and prices
every profile in a (trials, num_users) matrix using the same three-branch
payment rule as the scalar path in :mod:`.mechanism` (equivalence is
enforced by tests).  Draws use a counter-based Philox stream keyed by the
seed, so results are reproducible and independent of how callers chunk the
work.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mechanism import InternalConsistencyError
from .model import AuctionInstance


@dataclass(frozen=True)
class BatchOutcome:
    """Per-trial arrays for a batch of profiles."""

    types: np.ndarray  # (trials, n) sampled or supplied valuations
    scores: np.ndarray  # (trials, m) content scores
    winner: np.ndarray  # (trials,) argmax content, valid only where won
    won: np.ndarray  # (trials,) True where something was cached
    user_share: np.ndarray  # (trials, n) 0/1 cached-interest indicator
    payments: np.ndarray  # (trials, n)
    virtual_surplus: np.ndarray  # (trials,)
    sp_profit: np.ndarray  # (trials,) realized profit per trial

    @property
    def trials(self) -> int:
        return self.types.shape[0]


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def uniform_draws(trials: int, num_users: int, seed: int) -> np.ndarray:
    """The (trials, n) table of base uniforms behind common-random-number runs."""
    return rng_for(seed).random((trials, num_users))


def types_from_draws(distributions, draws: np.ndarray) -> np.ndarray:
    """Map base uniforms through each user's inverse cdf, column by column."""
    types = np.empty_like(draws)
    for j, dist in enumerate(distributions):
        types[:, j] = dist.ppf(draws[:, j])
    return types


def sample_types(inst: AuctionInstance, trials: int, seed: int) -> np.ndarray:
    return types_from_draws(inst.distributions, uniform_draws(trials, inst.num_users, seed))


def content_scores(inst: AuctionInstance, types: np.ndarray) -> np.ndarray:
    """(trials, m) matrix of virtual social welfare per content."""
    theta = inst.theta
    h = inst.delivery_cost
    c_values = np.empty_like(types)
    for j, dist in enumerate(inst.distributions):
        c_values[:, j] = dist.virtual(types[:, j])
    user_terms = theta * c_values - h
    membership = inst.interests.membership.astype(float)
    return user_terms @ membership.T - inst.prices_array


def evaluate(inst: AuctionInstance, types: np.ndarray, pricing: AuctionInstance | None = None) -> BatchOutcome:
    """Run the mechanism on every row of ``types``.

    ``pricing`` supplies the instance whose distributions drive the virtual
    valuations and payment thresholds; it defaults to ``inst``.  Passing a
    different instance models a seller acting on estimated valuation laws
    while ``inst`` retains the true costs and prices (which the two must
    share).  Raises on any violation of the exact zero-payment or payment
    bound guarantees.
    """
    mech = pricing if pricing is not None else inst
    theta = inst.theta
    h = inst.delivery_cost
    trials, n = types.shape
    membership = inst.interests.membership

    c_values = np.empty_like(types)
    for j, dist in enumerate(mech.distributions):
        c_values[:, j] = dist.virtual(types[:, j])
    user_terms = theta * c_values - h
    scores = user_terms @ membership.astype(float).T - inst.prices_array

    best = scores.max(axis=1)
    winner = scores.argmax(axis=1)  # first index wins ties
    won = best > 0.0
    user_share = (won[:, None] & membership[winner, :]).astype(float)

    payments = np.zeros((trials, n))
    neg_inf = np.full(trials, -np.inf)
    for j in range(n):
        inside = membership[:, j]
        if not inside.any():
            continue
        outside_scores = scores[:, ~inside]
        beta = np.maximum(0.0, outside_scores.max(axis=1) if outside_scores.shape[1] else neg_inf)
        best_inside = scores[:, inside].max(axis=1)
        rest = best_inside - user_terms[:, j]
        dist = mech.distributions[j]
        phi_at_lower = theta * float(dist.virtual(dist.lower)) - h + rest

        full = phi_at_lower >= beta
        zero = best_inside < beta
        threshold = ~full & ~zero

        integral = np.where(full, types[:, j] - dist.lower, 0.0)
        if threshold.any():
            z = (beta[threshold] + h - rest[threshold]) / theta
            xi = np.asarray(dist.virtual_inverse(z), dtype=float)
            xi = np.minimum(np.maximum(xi, dist.lower), types[threshold, j])
            integral[threshold] = types[threshold, j] - xi
        payments[:, j] = theta * types[:, j] * user_share[:, j] - theta * integral

    virtual_surplus = np.maximum(best, 0.0)
    winner_cost = inst.prices_array[winner] + inst.interests.set_sizes[winner] * h
    sp_profit = payments.sum(axis=1) - np.where(won, winner_cost, 0.0)

    if np.any(payments[user_share == 0.0] != 0.0):
        raise InternalConsistencyError("nonzero payment for a user with nothing cached")
    if np.any(payments > theta * types * user_share):
        raise InternalConsistencyError("payment exceeds the winner's satisfaction bound")

    return BatchOutcome(
        types=types,
        scores=scores,
        winner=winner,
        won=won,
        user_share=user_share,
        payments=payments,
        virtual_surplus=virtual_surplus,
        sp_profit=sp_profit,
    )


def user_utilities(out: BatchOutcome, theta: float) -> np.ndarray:
    """(trials, n) truthful ex-post utilities for a batch outcome."""
    return out.user_share * theta * out.types - out.payments
