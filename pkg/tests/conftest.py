import numpy as np
import pytest

from replay_td.mdp import Mdp, Policy, induce_chain
from replay_td.verification import load_fixture


def uniform_two_state(reward=1.0, gamma=0.5):
    p = np.full((2, 1, 2), 0.5)
    r = np.full((2, 1, 2), reward)
    return Mdp(p, r, gamma, 1.0), Policy(np.ones((2, 1)))


def chain_mdp(p_pi, gamma=0.5, reward=None):
    """Single-action MDP whose induced chain is ``p_pi``."""
    p_pi = np.asarray(p_pi, dtype=float)
    n = p_pi.shape[0]
    r = np.zeros((n, 1, n)) if reward is None else np.asarray(reward, dtype=float).reshape(n, 1, n)
    r_max = max(1.0, float(np.abs(r).max()))
    return Mdp(p_pi[:, None, :], r, gamma, r_max), Policy(np.ones((n, 1)))


@pytest.fixture
def uniform_chain():
    mdp, pol = uniform_two_state()
    return induce_chain(mdp, pol, 0.1)


@pytest.fixture(scope="session")
def desk():
    return load_fixture("desk")


@pytest.fixture(scope="session")
def desk_chain(desk):
    return desk.chain(0.1)
