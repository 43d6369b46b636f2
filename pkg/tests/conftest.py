import numpy as np
import pytest

from nomaisac.channel import LinkBudget
from nomaisac.numerics import RngSeed


@pytest.fixture
def example_budget():
    return LinkBudget(gamma_s=1.0, gamma_c=3.0, kappa=1.0, rho_resid=1.0)


@pytest.fixture
def seed():
    return RngSeed(20240611)


def random_budgets(n, seed=7):
    rng = np.random.default_rng(seed)
    return [
        LinkBudget(gamma_c=float(rng.uniform(0.5, 20.0)), gamma_s=float(rng.uniform(0.1, 10.0)))
        for _ in range(n)
    ]
