import numpy as np
import pytest

from monoconv import AtomicMeasure


@pytest.fixture
def bernoulli():
    """Symmetric two-point measure at +-1; F(z) = z - 1/z."""
    return AtomicMeasure([-1.0, 1.0], [0.5, 0.5])


def rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
