"""The revenue-optimal caching auction: allocation, payments, certificates.

Given reported valuations, the seller scores each content by its virtual
social welfare

    score(i) = sum_{j interested in i} (theta * c_j(t_j) - h(theta)) - r_i

and caches the single best-scoring content when that score is positive,
otherwise nothing.  Winners' payments follow from the threshold structure of
the allocation: for each user the integral of their winning indicator over
their report axis collapses to one of three closed-form branches, recorded
in a :class:`PaymentCertificate`.  :func:`payment_oracle` computes the same
integral by brute force on a grid and is kept deliberately independent of
the closed form so the two can be cross-checked.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import AuctionInstance

# Branch labels for the payment integral.
BRANCH_FULL = "full"
BRANCH_ZERO = "zero"
BRANCH_THRESHOLD = "threshold"

_XI_SLACK = 1e-9


class InternalConsistencyError(RuntimeError):
    """An invariant the mechanism guarantees mathematically was violated."""


@dataclass(frozen=True)
class Allocation:
    """Cache fractions per content; all-or-nothing for a single winner."""

    fractions: tuple[float, ...]
    winner: int | None

    def user_share(self, inst: AuctionInstance, user: int) -> float:
        """Fraction of user's interesting contents that got cached (0 or 1)."""
        return sum(self.fractions[i] for i in inst.interests.contents_for_user[user])


@dataclass(frozen=True)
class PaymentCertificate:
    """Closed-form payment for one user, with the quantities that justify it.

    ``beta`` is the best score achievable without any of the user's
    contents (floored at zero for the no-caching option); ``phi_at_lower``
    and ``phi_at_t`` evaluate the user's best in-interest score as a
    function of their own report at the support bottom and at the actual
    report.  Their ordering relative to ``beta`` selects the branch; in the
    threshold branch ``xi`` is the critical report at which the user starts
    winning.
    """

    user: int
    beta: float
    phi_at_lower: float
    phi_at_t: float
    xi: float | None
    branch: str
    integral_value: float
    payment: float


@dataclass(frozen=True)
class MechanismOutcome:
    """Allocation, payments and bookkeeping for one report profile."""

    allocation: Allocation
    payments: tuple[float, ...]
    certificates: tuple[PaymentCertificate, ...]
    virtual_surplus: float
    realized_sp_profit: float


def content_score(inst: AuctionInstance, profile: Sequence[float], content: int) -> float:
    """Virtual social welfare of caching ``content`` at the given profile."""
    if not 0 <= content < inst.num_contents:
        raise IndexError(f"content index {content} out of range")
    h = inst.delivery_cost
    theta = inst.theta
    total = -inst.content_prices[content]
    for j in inst.interests.interested_users[content]:
        total += theta * float(inst.distributions[j].virtual(float(profile[j]))) - h
    return total


def allocate(inst: AuctionInstance, profile: Sequence[float]) -> Allocation:
    """Winner-take-all allocation: argmax score if positive, else nothing.

    Ties break toward the lowest content index so results are reproducible.
    """
    best = -np.inf
    best_i = 0
    for i in range(inst.num_contents):
        s = content_score(inst, profile, i)
        if s > best:
            best = s
            best_i = i
    fractions = [0.0] * inst.num_contents
    if best > 0.0:
        fractions[best_i] = 1.0
        return Allocation(tuple(fractions), best_i)
    return Allocation(tuple(fractions), None)


def payment_closed_form(inst: AuctionInstance, profile: Sequence[float], user: int) -> PaymentCertificate:
    """Payment of ``user`` via the three-branch closed form.

    Users with no interesting contents can never be allocated anything and
    pay zero (zero branch by convention).  When no content outside the
    user's interest set exists, the outer max in beta degenerates and the
    no-caching floor of zero applies.
    """
    theta = inst.theta
    h = inst.delivery_cost
    dist = inst.distributions[user]
    t_j = float(profile[user])
    contents_j = inst.interests.contents_for_user[user]

    scores = [content_score(inst, profile, i) for i in range(inst.num_contents)]
    outside = [scores[i] for i in range(inst.num_contents) if i not in contents_j]
    beta = max(0.0, max(outside)) if outside else 0.0

    if not contents_j:
        return PaymentCertificate(
            user=user,
            beta=beta,
            phi_at_lower=-np.inf,
            phi_at_t=-np.inf,
            xi=None,
            branch=BRANCH_ZERO,
            integral_value=0.0,
            payment=0.0,
        )

    # Every content of interest contains the user's own score term, so the
    # best score with that term removed is a single subtraction.
    own_term = theta * float(dist.virtual(t_j)) - h
    best_inside = max(scores[i] for i in contents_j)
    rest = best_inside - own_term
    phi_at_lower = theta * float(dist.virtual(dist.lower)) - h + rest
    phi_at_t = best_inside

    xi = None
    if phi_at_lower >= beta:
        branch = BRANCH_FULL
        integral = t_j - dist.lower
    elif phi_at_t < beta:
        branch = BRANCH_ZERO
        integral = 0.0
    else:
        branch = BRANCH_THRESHOLD
        xi = float(dist.virtual_inverse((beta + h - rest) / theta))
        if xi < dist.lower - _XI_SLACK or xi > t_j + _XI_SLACK:
            raise InternalConsistencyError(
                f"threshold report {xi} outside [{dist.lower}, {t_j}] for user {user + 1}"
            )
        xi = min(max(xi, dist.lower), t_j)
        integral = t_j - xi

    share = allocate(inst, profile).user_share(inst, user)
    payment = theta * t_j * share - theta * integral
    return PaymentCertificate(
        user=user,
        beta=beta,
        phi_at_lower=phi_at_lower,
        phi_at_t=phi_at_t,
        xi=xi,
        branch=branch,
        integral_value=integral,
        payment=payment,
    )


def payment_oracle(
    inst: AuctionInstance,
    profile: Sequence[float],
    user: int,
    grid_points: int,
    refine: bool = True,
) -> float:
    """Brute-force payment: integrate the winning indicator over the report axis.

    Sweeps the user's report from the support bottom to the actual report,
    rerunning :func:`allocate` at every grid point.  The indicator is a
    monotone 0/1 step, so with ``refine`` the single jump is located by
    bisection to 1e-9 and the integral is exact up to that resolution;
    without it a plain trapezoid of the grid values is returned (paranoia
    mode, grid resolution error).
    """
    if grid_points < 100:
        raise ValueError("grid_points must be at least 100")
    contents_j = inst.interests.contents_for_user[user]
    if not contents_j:
        return 0.0
    theta = inst.theta
    dist = inst.distributions[user]
    t_j = float(profile[user])
    lower = dist.lower

    swept = list(map(float, profile))

    def share_at(tau: float) -> float:
        swept[user] = tau
        return allocate(inst, swept).user_share(inst, user)

    grid = np.linspace(lower, t_j, grid_points)
    values = [share_at(tau) for tau in grid]
    if any(a > b for a, b in zip(values, values[1:])):
        raise InternalConsistencyError("winning indicator is not monotone in the report")

    share_at_t = values[-1]
    if values[0] == 1.0:
        integral = t_j - lower
    elif values[-1] == 0.0:
        integral = 0.0
    elif refine:
        k = values.index(1.0)
        lo, hi = float(grid[k - 1]), float(grid[k])
        while hi - lo > 1e-9:
            mid = 0.5 * (lo + hi)
            if share_at(mid) == 1.0:
                hi = mid
            else:
                lo = mid
        integral = t_j - hi
    else:
        steps = np.diff(grid)
        pairs = np.asarray(values)
        integral = float(np.sum((pairs[1:] + pairs[:-1]) / 2.0 * steps))
    return theta * t_j * share_at_t - theta * integral


def run_mechanism(inst: AuctionInstance, reports: Sequence[float]) -> MechanismOutcome:
    """Run the full auction on one report profile.

    Validates the reports against the supports, allocates, computes every
    user's certificate, and evaluates the seller's realized profit
    (payments minus acquisition and delivery costs).
    """
    values = inst.validate_profile(reports)
    allocation = allocate(inst, values)
    certificates = tuple(payment_closed_form(inst, values, j) for j in range(inst.num_users))
    payments = tuple(c.payment for c in certificates)

    scores = [content_score(inst, values, i) for i in range(inst.num_contents)]
    virtual_surplus = max(0.0, max(scores))

    profit = sum(payments)
    if allocation.winner is not None:
        i = allocation.winner
        profit -= inst.content_prices[i]
        profit -= len(inst.interests.interested_users[i]) * inst.delivery_cost

    for j, cert in enumerate(certificates):
        if allocation.user_share(inst, j) == 0.0 and cert.payment != 0.0:
            raise InternalConsistencyError(
                f"user {j + 1} pays {cert.payment} without any cached content"
            )

    return MechanismOutcome(
        allocation=allocation,
        payments=payments,
        certificates=certificates,
        virtual_surplus=virtual_surplus,
        realized_sp_profit=profit,
    )


def ex_post_utility(
    inst: AuctionInstance,
    outcome: MechanismOutcome,
    true_types: Sequence[float],
    user: int,
) -> float:
    """Realized utility: satisfaction from cached contents minus the payment."""
    share = outcome.allocation.user_share(inst, user)
    return share * inst.theta * float(true_types[user]) - outcome.payments[user]
