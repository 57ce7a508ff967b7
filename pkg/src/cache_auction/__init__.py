"""Revenue-optimal auction simulator for mobile edge content caching.

A seller with one cache slot auctions delivery of contents to users with
privately known valuations.  The library implements the optimal
direct-revelation mechanism (virtual-valuation scoring, winner-take-all
allocation, threshold payments), the closed-form choice of delivery
quality for large homogeneous markets, and Monte-Carlo machinery to
estimate every expected quantity and to verify the mechanism's incentive
properties empirically.
"""

from .distributions import (
    CustomDistribution,
    Exponential,
    RegularityReport,
    TypeDistribution,
    Uniform,
    check_regularity,
    inverse_virtual_valuation,
    sample,
    virtual_valuation,
)
from .mechanism import (
    Allocation,
    MechanismOutcome,
    PaymentCertificate,
    allocate,
    content_score,
    ex_post_utility,
    payment_closed_form,
    payment_oracle,
    run_mechanism,
)
from .model import (
    AuctionInstance,
    ConfigError,
    CostFunction,
    CustomCost,
    InterestStructure,
    PolynomialCost,
    PopularityModel,
    PowerCost,
    QuadraticCost,
    build_instance,
    instance_to_config,
    sample_interest_structure,
)
from .quality import QualityResult, er_curve, optimal_theta_closed_form
from .simulation import (
    EstimateWithError,
    ICReport,
    IRReport,
    MismatchConfig,
    SimulationReport,
    interim_quantities,
    simulate,
    simulate_mismatch,
    verify_ic,
    verify_ir,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
