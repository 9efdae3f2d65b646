import numpy as np
import pytest

from irsnoma import phys
from irsnoma.matching import sorted_order
from irsnoma.scenario import Scenario, sample_channels


def two_cell(seed, M=8, **kw):
    """I=4, J=2, K=2 line layout; users {0,1} on BS 0, {2,3} on BS 1, full reuse, sorted orders."""
    sc = Scenario.layout(4, 2, 2, M, **kw)
    ch = sample_channels(sc, seed)
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0, 2 * np.pi, M)
    G = phys.gains2(ch, theta)
    alpha = np.array([[1, 0], [1, 0], [0, 1], [0, 1]])
    beta = np.ones((2, 2), int)
    order = {(j, k): sorted_order(G, [i for i in range(4) if alpha[i, j]], j, k)
             for j in range(2) for k in range(2)}
    return sc, ch, theta, phys.Assignment(alpha, beta, order), rng


@pytest.fixture
def toy():
    return two_cell(3)
