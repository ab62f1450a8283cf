import numpy as np
import pytest

from cornerq import construct


@pytest.fixture(scope="session")
def base_512():
    """Moderately truncated distinguished solution, shared across tests."""
    return construct.base_solution(512)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)
