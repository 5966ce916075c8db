from __future__ import annotations

import numpy as np
import pytest

from inclusafe import boundary_extract, build_modulus
from inclusafe import scenarios


@pytest.fixture(scope="session")
def example1():
    return scenarios.build("example1")


@pytest.fixture(scope="session")
def example2():
    return scenarios.build("example2")


@pytest.fixture(scope="session")
def linear_stable():
    return scenarios.build("linear-stable")


@pytest.fixture(scope="session")
def noisy_loop():
    return scenarios.build("noisy-loop")


@pytest.fixture(scope="session")
def example1_grid(example1):
    return boundary_extract(example1.scenario)


@pytest.fixture(scope="session")
def example2_grid(example2):
    return boundary_extract(example2.scenario)


@pytest.fixture(scope="session")
def linear_grid(linear_stable):
    return boundary_extract(linear_stable.scenario)


@pytest.fixture(scope="session")
def linear_modulus(linear_stable):
    return build_modulus(linear_stable.scenario.dynamics)


@pytest.fixture(scope="session")
def example2_modulus(example2):
    # the slow 2-D build; shared by every weighted-check test
    return build_modulus(example2.scenario.dynamics)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
