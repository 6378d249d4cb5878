import numpy as np
import pytest

from gibbsfactors.catalog import EXAMPLE_S, bernoulli_system, example_system
from gibbsfactors.factor_ops import FactorSystem
from gibbsfactors.schedule import diameter_constants, schedule_for_potential
from gibbsfactors.sft import fiber_mixing_exponent


@pytest.fixture(scope="session")
def example():
    sft, f, phi = example_system()
    return FactorSystem(sft, f, phi)


@pytest.fixture(scope="session")
def example_deep():
    sft, f, phi = example_system()
    return FactorSystem(sft, f, phi, depth=3)


@pytest.fixture(scope="session")
def example_schedule(example):
    n = fiber_mixing_exponent(example.sft, example.factor).exponent
    s = schedule_for_potential(example.phi, 0.5, "bowen", n_fiber=n)
    diameter_constants(example, s)
    return s


@pytest.fixture(scope="session")
def bernoulli():
    sft, f, phi = bernoulli_system()
    return FactorSystem(sft, f, phi)


@pytest.fixture
def S():
    return EXAMPLE_S.copy()


@pytest.fixture
def rng():
    return np.random.default_rng(0)
