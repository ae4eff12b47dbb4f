import numpy as np
import pytest
from hypothesis import settings

from listrep.envs import make_chain, make_random

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def chain8():
    return make_chain(8, 0.02)


@pytest.fixture
def small():
    return make_random((4, 2, 3), seed=7)


def deterministic_line(num_states=3, horizon=3, num_actions=2):
    """Action 0 moves one step right, others stay; reward 1 at the last state."""
    S, A, H = num_states, num_actions, horizon
    p = np.zeros((H, S, A, S))
    for s in range(S):
        p[:, s, 0, min(s + 1, S - 1)] = 1.0
        p[:, s, 1:, s] = 1.0
    r = np.zeros((H, S, A))
    r[:, S - 1, :] = 1.0
    from listrep.mdp import TabularMdp

    return TabularMdp(p, r, 0)
