import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from annulus_involutions.fields import builtin_field
from annulus_involutions.flow import IntegratorConfig


@pytest.fixture(scope="session")
def cfg():
    return IntegratorConfig()


@pytest.fixture(scope="session")
def linear_center():
    return builtin_field("linear-center")


@pytest.fixture(scope="session")
def pendulum():
    return builtin_field("pendulum")


@pytest.fixture(scope="session")
def duffing():
    return builtin_field("duffing")


@pytest.fixture(scope="session")
def cubic_center():
    return builtin_field("cubic-center")
