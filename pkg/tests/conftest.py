from decimal import Decimal
from pathlib import Path

import pytest

from bargain_arena.catalog import Product, Scenario

FIXTURES = Path(__file__).parent / "fixtures"


def beauty_product() -> Product:
    return Product(
        codename="beauty_29",
        title="Happy By Clinique For Men. Cologne Spray 1.7 Oz.",
        category="beauty",
        list_price=Decimal("70.00"),
        description="Introduced in 1999. Fragrance notes: citrusy lemon, mandarin, orange and grapefruit.",
    )


def beauty_scenario(budget="56.00", cost="23.24", max_turns=6) -> Scenario:
    return Scenario(beauty_product(), Decimal(budget), Decimal(cost), 1, max_turns)


@pytest.fixture
def beauty():
    return beauty_scenario()


@pytest.fixture
def fixtures_dir():
    return FIXTURES
