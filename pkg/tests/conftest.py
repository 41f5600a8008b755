import numpy as np
import pytest

import environments
from lp import HighsSolver, RevisedSimplexSolver
from lp_synthesis import SynthesisConfig, synthesize


@pytest.fixture
def simplex():
    return RevisedSimplexSolver()


@pytest.fixture
def highs():
    return HighsSolver()


@pytest.fixture(params=['simplex', 'highs'])
def solver(request):
    if request.param == 'highs':
        return HighsSolver()
    return RevisedSimplexSolver()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def three_state_delta():
    return environments.three_state('delta')


@pytest.fixture
def fig13():
    return environments.fig13_mdp()


@pytest.fixture(scope='session')
def fig13_cpu():
    mdp = environments.fig13_mdp()
    cfg = SynthesisConfig()
    return (mdp, synthesize(mdp, 'cpu', cfg, RevisedSimplexSolver()))


def random_chain(rng, n, density=0.3):
    """Random stochastic matrix with a few sparse rows."""
    matrix = rng.random((n, n)) * (rng.random((n, n)) < density)
    for s in range(n):
        if not matrix[s].any():
            matrix[s, rng.integers(n)] = 1.0
    return matrix / matrix.sum(axis=1, keepdims=True)
