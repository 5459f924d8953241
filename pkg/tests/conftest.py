import numpy as np
import pytest

from earlypcr.data import synth_cohort


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_cohort():
    """40 patients on an 8^3 grid, shared read-only across tests."""
    return synth_cohort(40, dim=8, seed=3)
