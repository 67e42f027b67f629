import math

import pytest

from ftls_lab import ModelParams, classify_from_fbar

# paper-scale flux level: both sides of the jump admit two asymptotic roots
FBAR = 3.0 / 16.0

# closed-form quadratic roots of V * r * (1 - r) = 3/16
ROOT_LOW_V1 = 0.25
ROOT_HIGH_V1 = 0.75
ROOT_LOW_V2 = (1.0 - math.sqrt(5.0 / 8.0)) / 2.0
ROOT_HIGH_V2 = (1.0 + math.sqrt(5.0 / 8.0)) / 2.0


@pytest.fixture(scope="session")
def params_down():
    """Speed limit drops from 2 to 1 at x = 0 (case 1)."""
    return ModelParams.paper_defaults()


@pytest.fixture(scope="session")
def params_up():
    """Speed limit rises from 1 to 2 at x = 0 (case 2)."""
    return ModelParams.paper_defaults(V_minus=1.0, V_plus=2.0)


@pytest.fixture(scope="session")
def params_uniform():
    return ModelParams.paper_defaults(V_minus=1.0, V_plus=1.0)


@pytest.fixture(scope="session")
def report_1b(params_down):
    return classify_from_fbar(params_down, FBAR, "1B")


@pytest.fixture(scope="session")
def report_1a(params_down):
    return classify_from_fbar(params_down, FBAR, "1A")


@pytest.fixture(scope="session")
def report_2b(params_up):
    return classify_from_fbar(params_up, FBAR, "2B")
