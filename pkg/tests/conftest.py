import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from restrace.model_ball import BallModel  # noqa: E402
from restrace.resonance_finder import find_resonances, full_region  # noqa: E402


def _full(d, r_max):
    model = BallModel(d)
    return find_resonances(model, full_region(model, 0.1, r_max))


@pytest.fixture(scope="session")
def resonances_d3():
    """Every d = 3 Dirichlet resonance with |lambda| <= 40."""
    return _full(3, 40.0)


@pytest.fixture(scope="session")
def resonances_d2():
    """Every d = 2 Dirichlet resonance on the cut plane with |lambda| <= 30."""
    return _full(2, 30.0)


@pytest.fixture(scope="session")
def resonances_d4():
    return _full(4, 30.0)
