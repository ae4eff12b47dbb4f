import numpy as np
import pytest

from listrep.envs import (
    EpisodicEnv,
    GenerativeEnv,
    bandit_arm_policy,
    bandit_layout,
    make_bandit_embedding,
    make_chain,
    make_gridworld,
    make_random,
)
from listrep.mdp import MdpError, Policy, backward_dp, max_occupancy, optimal_value, policy_value
from listrep.oracle import brute_optimal_value, gap_set


def test_chain_zero_delta_ties():
    m = make_chain(5, 0.0)
    assert not gap_set(m).values().any()


def test_chain_value():
    assert optimal_value(make_chain(8, 0.02)) == pytest.approx(0.52**8)


@pytest.mark.parametrize("delta", [-0.1, 0.5, 0.7])
def test_chain_rejects_delta(delta):
    with pytest.raises(MdpError):
        make_chain(8, delta)


def test_gridworld_shape_and_enumeration():
    m = make_gridworld(2, 0.1)
    assert m.shape == (5, 2, 3)
    assert optimal_value(m) == pytest.approx(brute_optimal_value(m), abs=1e-12)
    # the favoured move flips with parity, so R then U takes both favoured moves
    assert optimal_value(m) == pytest.approx(0.6 * 0.6)


def test_gridworld_deterministic_variant():
    m = make_gridworld(3, 0.0, base=1.0)
    assert optimal_value(m) == 1.0
    env = EpisodicEnv(m, 0)
    pi = Policy(backward_dp(m).q.argmax(axis=2))
    states, _ = env.run_batch(pi, 20)
    assert len({tuple(row) for row in states}) == 1


def test_random_reproducible_and_normalized():
    a = make_random((5, 3, 4), seed=9)
    assert a == make_random((5, 3, 4), seed=9)
    assert np.abs(a.transitions.sum(axis=-1) - 1).max() < 1e-12


def test_random_sparse_has_unreachable():
    m = make_random((6, 1, 4), seed=3, support=0.2)
    assert (max_occupancy(m)[1:] == 0).any()


def test_generative_counts_within_three_sigma():
    m = make_random((3, 2, 2), seed=1)
    n = 10**5
    # 36 entries at 3 sigma: roughly one seed in ten trips a bound by chance
    counts = GenerativeEnv(m, 0).sample_counts(n)
    p = m.transitions
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sigma + 1e-9)


def test_single_sample_matches_row():
    m = make_chain(3, 0.2)
    gen = GenerativeEnv(m, 0)
    draws = [gen.sample(0, 0, 0) for _ in range(4000)]
    assert abs(np.mean(np.array(draws) == 1) - 0.7) < 0.03


def test_episode_protocol():
    m = make_chain(3, 0.1)
    env = EpisodicEnv(m, 1)
    env.reset()
    for h in range(m.horizon):
        _, _, level = env.step(0)
        assert level == h + 1
    with pytest.raises(RuntimeError):
        env.step(0)


def test_bandit_single_good_arm():
    means = np.zeros((1, 2, 2))
    means[0, 1, 0] = 1.0
    m = make_bandit_embedding(means)
    assert optimal_value(m) == 1.0
    q = backward_dp(m).q
    lay = bandit_layout(1, 2, 2)
    pi = bandit_arm_policy(lay, 0, 1, 0)
    assert policy_value(m, pi) == 1.0


def test_bandit_arm_values_exact():
    rng = np.random.default_rng(0)
    means = rng.random((2, 3, 2))
    m = make_bandit_embedding(means)
    lay = bandit_layout(2, 3, 2)
    for i in range(2):
        for j in range(3):
            for l in range(2):
                assert policy_value(m, bandit_arm_policy(lay, i, j, l)) == means[i, j, l]


def test_bandit_equal_means():
    m = make_bandit_embedding(np.full((2, 2, 2), 0.3))
    lay = bandit_layout(2, 2, 2)
    vals = {policy_value(m, bandit_arm_policy(lay, i, j, l)) for i in range(2) for j in range(2) for l in range(2)}
    assert vals == {0.3}


def test_bandit_small_brute_force():
    means = np.array([[[0.2, 0.7], [0.4, 0.1]]])
    m = make_bandit_embedding(means)
    assert optimal_value(m) == pytest.approx(0.7)
    assert m.num_actions ** (m.num_states * m.horizon) > 0


def test_bandit_rejects_bad_means():
    with pytest.raises(MdpError):
        make_bandit_embedding(np.full((1, 2, 2), 1.5))
    with pytest.raises(MdpError):
        make_bandit_embedding(np.zeros((2, 2)))
