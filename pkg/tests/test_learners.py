from fractions import Fraction

import numpy as np
import pytest

from listrep.envs import BudgetExceeded, EpisodicEnv, make_chain, make_random
from listrep.learners import (
    EmpiricalModel,
    RollInPolicy,
    blackbox_adversarial,
    blackbox_reference,
    derive_constants,
    estimated_profile,
    closed_form_constants,
    strong_learn,
    weak_learn,
)
from listrep.mdp import Policy, optimal_value, policy_value

from conftest import deterministic_line

SCALED_STRONG = {"eps1": 0.005, "eta0": 0.01, "w": 2000}
SCALED_WEAK = {"eps1": 0.005, "eps0": 0.02, "w": 2000}


def test_closed_form_strong_example():
    c = derive_constants((2, 2, 2), 0.1, 0.1, "strong", "paper", budget=None)
    assert c.c1 == pytest.approx(2560, rel=1e-15)
    assert c.eps0 == float(Fraction(0.1) * Fraction(0.1) / (1440 * 8 * 128 * 2))
    assert c.eps0 == pytest.approx(0.01 / 2949120, rel=1e-15)
    assert c.eps1 == pytest.approx(5 * c.c1 * 4 * c.eps0, rel=1e-14)
    assert c.eta0 == pytest.approx(3 * c.eps1 * 2, rel=1e-14)
    assert c.w >= 1


def test_closed_form_weak_formulas():
    S, A, H, eps, delta = 3, 2, 4, 0.2, 0.05
    c = closed_form_constants((S, A, H), eps, delta, "weak")
    assert c["c1"] == pytest.approx(4 * A * S * H / delta, rel=1e-15)
    assert c["eps0"] == pytest.approx(eps * delta / (100 * S * H**5 * A), rel=1e-15)
    assert c["eta0"] is None


def test_closed_form_budget_names_w():
    with pytest.raises(BudgetExceeded, match="W="):
        derive_constants((5, 2, 4), 0.1, 0.1, "strong", "paper")


def test_scaled_echo():
    c = derive_constants((3, 2, 4), 0.1, 0.1, "strong", "scaled", {"eps0": 0.05, "w": 200})
    assert c.eps0 == 0.05 and c.w == 200
    assert c.to_dict()["w"] == 200


@pytest.mark.parametrize("delta", [0.0, 1.0])
def test_precondition(delta):
    with pytest.raises(ValueError):
        derive_constants((2, 2, 2), 0.1, delta)


def test_unknown_override():
    with pytest.raises(ValueError):
        derive_constants((2, 2, 2), 0.1, 0.1, "strong", "scaled", {"beta": 1})
    with pytest.raises(ValueError):
        derive_constants((2, 2, 2), 0.1, 0.1, "strong", "paper", {"w": 10})


def test_rollin_modes():
    base = Policy.constant(3, 2, 0)
    tail = RollInPolicy(1, 1, base, "tail").with_action(1).actions
    point = RollInPolicy(1, 1, base, "point").with_action(1).actions
    assert tail[1:].all() and not tail[0].any()
    assert point.sum() == 1 and point[1, 1] == 1


def _strong(m, seed, overrides=SCALED_STRONG, **kw):
    c = derive_constants(m.shape, 0.1, 0.1, "strong", "scaled", overrides)
    return strong_learn(EpisodicEnv(m, seed), 0.1, 0.1, np.random.default_rng(seed), c, **kw)


def test_strong_deterministic_single_path():
    m = deterministic_line()
    outs = {_strong(m, k, {"eps1": 0.005, "eta0": 0.01, "w": 50}).policy for k in range(100)}
    assert len(outs) == 1
    assert policy_value(m, outs.pop()) == optimal_value(m)


def test_strong_trace_starts_at_level_zero():
    m = make_random((3, 2, 4), seed=3, support=0.67)
    res = _strong(m, 0)
    first, n = res.trace.entries[0]
    assert n == 2000
    assert np.array_equal(first.actions, np.zeros((4, 3), dtype=int))
    assert res.trace.returned == res.policy


def test_strong_trace_determinism():
    m = make_random((3, 2, 4), seed=3, support=0.67)
    assert _strong(m, 5).trace.key() == _strong(m, 5).trace.key()


def test_strong_draw_ranges():
    m = make_random((3, 2, 4), seed=3)
    d = _strong(m, 1).draws
    assert 0.005 < d.r_action < 0.01 and 0.03 < d.r_trunc < 0.06


def test_strong_sample_counts():
    # rows that survive truncation were reached often enough by their roll-in
    m = make_random((3, 2, 4), seed=3, support=0.67)
    for k in range(10):
        res = _strong(m, k)
        if res.diagnostics["fallback"]:
            continue
        unreachable = res.diagnostics["unreachable"]
        for key, n in res.diagnostics["visits"].items():
            h, s, _ = (int(x) for x in key.split(","))
            if s not in unreachable[h]:
                assert n >= 2000 * 0.01 / 2


def test_estimated_profile_monotone_in_threshold():
    m = make_random((3, 2, 4), seed=3, support=0.67)
    model = _strong(m, 2).model
    prev = None
    for r in np.linspace(0, 1, 41):
        cur = estimated_profile(model, 0, float(r))
        if prev is not None:
            assert all(a <= b for a, b in zip(prev, cur))
        prev = cur


def test_empirical_model_empty_rows_absorb():
    model = EmpiricalModel(2, 1, 2)
    p, empty = model.padded_transitions([frozenset(), frozenset()], 0)
    assert empty == [(0, 0, 0), (0, 1, 0)]
    assert np.all(p[..., 2] == 1.0)


def _weak(m, seed, blackbox=None, overrides=SCALED_WEAK):
    c = derive_constants(m.shape, 0.1, 0.1, "weak", "scaled", overrides)
    if blackbox is None:

        def blackbox(env, reward, eps0, delta0, rng):
            return blackbox_reference(env, reward, eps0, delta0, rng, n=200)

    return weak_learn(EpisodicEnv(m, seed), blackbox, 0.1, 0.1, np.random.default_rng(seed), c)


def test_weak_single_action_unique():
    m = make_random((3, 1, 3), seed=4)
    assert len({_weak(m, k).policy for k in range(10)}) == 1


def test_weak_draw_ranges_and_optimality():
    m = make_random((3, 2, 4), seed=3, support=0.67)
    res = _weak(m, 0)
    assert 0.005 < res.draws.r_action < 0.01 and 0.01 < res.draws.r_trunc < 0.015
    assert optimal_value(m) - policy_value(m, res.policy) <= 0.1


def test_weak_adversarial_list_bound():
    m = make_random((2, 2, 3), seed=1, support=0.5)
    S, A, H = m.shape
    outs = {_weak(m, k, blackbox_adversarial).policy for k in range(60)}
    assert len(outs) <= (H * S * A + 1) * (H * S + 1)


def test_blackbox_reference_contract():
    m = make_chain(8, 0.02)
    env = EpisodicEnv(m)
    v_star = optimal_value(m)
    good = 0
    for k in range(500):
        pi = blackbox_reference(env, np.array(m.rewards), 0.2, 0.05, np.random.default_rng(k), n=40)
        good += v_star - policy_value(m, pi) <= 0.2
    assert good >= 475


def test_blackbox_reference_exact_on_deterministic():
    m = deterministic_line()
    pi = blackbox_reference(EpisodicEnv(m), np.array(m.rewards), 0.1, 0.1, np.random.default_rng(0), n=1)
    assert policy_value(m, pi) == optimal_value(m)


def test_blackbox_adversarial_is_near_optimal():
    m = make_random((2, 2, 3), seed=2)
    rng = np.random.default_rng(0)
    for _ in range(20):
        pi = blackbox_adversarial(EpisodicEnv(m), np.array(m.rewards), 0.05, 0.1, rng)
        assert optimal_value(m) - policy_value(m, pi) <= 0.05 + 1e-12
