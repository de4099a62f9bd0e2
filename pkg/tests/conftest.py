"""
Shared fixtures.
"""

import numpy as np
import pytest


@pytest.fixture
def anyio_backend() -> str:
    return "asyncio"


@pytest.fixture
def rng() -> np.random.Generator:
    """Fixed generator so every test draws the same instances."""
    return np.random.default_rng(20240601)
