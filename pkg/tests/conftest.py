import pytest

from cache_auction.distributions import Uniform
from cache_auction.experiments import (
    section4_exponential_instance,
    section4_uniform_instance,
)
from cache_auction.model import AuctionInstance, InterestStructure, QuadraticCost


@pytest.fixture(scope="session")
def uniform_market():
    return section4_uniform_instance()


@pytest.fixture(scope="session")
def exponential_market():
    return section4_exponential_instance()


def micro_market(price: float) -> AuctionInstance:
    """Two users, one content both want; small enough to verify by hand."""
    return AuctionInstance(
        interests=InterestStructure(1, 2, ((0, 1),)),
        content_prices=(price,),
        cost=QuadraticCost(0.1),
        theta=1.0,
        distributions=(Uniform(1.0, 4.0), Uniform(1.0, 3.0)),
    )
