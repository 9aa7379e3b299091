import random

import pytest


@pytest.fixture
def rng():
    """Seeded stdlib RNG for rational coefficient generation."""
    return random.Random(0xC0FFEE)
