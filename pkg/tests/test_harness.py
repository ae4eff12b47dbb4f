import json

import numpy as np
import pytest

from listrep.envs import make_gridworld
from listrep.harness import (
    FULL_TABLE,
    ROLLOUT,
    EnvSpec,
    LearnerSpec,
    canonical_policy,
    k_quantile,
    run_replicated,
    sweep,
    write_csv,
    write_json,
    write_svg,
)
from listrep.mdp import Policy

CHAIN = EnvSpec("chain", {"h": 8, "delta": 0.02})


def test_keys_drop_absorbing_column():
    a = Policy(np.array([[0, 1, 0], [1, 1, 1]]))
    b = Policy(np.array([[0, 1, 1], [1, 1, 0]]))
    m = EnvSpec("random", {"s": 2, "a": 2, "h": 2}).build()
    assert canonical_policy(a, FULL_TABLE, m) == canonical_policy(b, FULL_TABLE, m)
    assert canonical_policy(a) != canonical_policy(b)


def test_rollout_key_follows_grid_path():
    m = make_gridworld(3, 0.1)
    pi = Policy(np.zeros((5, 10), dtype=int))
    # always R: off the grid after two moves, so the walk ends there
    assert canonical_policy(pi, ROLLOUT, m).startswith("0,0")


def test_k_quantile():
    counts = {"a": 5, "b": 3, "c": 2}
    assert k_quantile(counts, 0.5) == 1
    assert k_quantile(counts, 0.8) == 2
    assert k_quantile(counts, 1.0) == 3
    assert k_quantile({"b": 1, "a": 1}, 0.5) == 1


def test_deterministic_learner_single_output(tmp_path):
    from conftest import deterministic_line

    deterministic_line().save(tmp_path / "line.json")
    env = EnvSpec("file", {"path": str(tmp_path / "line.json")})
    rep = run_replicated(LearnerSpec("robust-plan", 0.05, n_per_pair=3), env, 25, 0)
    assert rep.runs == 25 and rep.distinct_policies == 1 and rep.top1_coverage("policy") == 1.0


def test_report_invariants():
    rep = run_replicated(LearnerSpec("robust-plan", 0.0, n_per_pair=40), CHAIN, 100, 3)
    assert 1 <= rep.distinct_policies <= rep.runs == 100
    assert sum(rep.policy_counts.values()) == 100
    ks = [rep.k_quantile(q, "policy") for q in (0.1, 0.5, 0.9, 1.0)]
    assert ks == sorted(ks) and ks[-1] == rep.distinct_policies
    assert rep.top1_coverage("policy") == max(rep.policy_counts.values()) / 100


def test_same_seed_same_report(tmp_path):
    spec = LearnerSpec("robust-plan", 0.01, n_per_pair=40)
    a = run_replicated(spec, CHAIN, 50, 9)
    b = run_replicated(spec, CHAIN, 50, 9, jobs=2)
    write_json([a], tmp_path / "a.json")
    write_json([b], tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_adding_runs_keeps_earlier_runs():
    spec = LearnerSpec("robust-plan", 0.0, n_per_pair=40)
    small = run_replicated(spec, CHAIN, 10, 4)
    big = run_replicated(spec, CHAIN, 20, 4)
    assert all(big.policy_counts.get(k, 0) >= c for k, c in small.policy_counts.items())


def test_sweep_single_cell_equals_run():
    spec = LearnerSpec("robust-plan", 0.02, n_per_pair=40)
    [row] = sweep(spec, CHAIN, [0.02], 30, 5)
    assert row.to_dict() == run_replicated(spec, CHAIN, 30, 5).to_dict()


def test_chain_sweep_trend():
    reps = sweep(LearnerSpec("robust-plan", 0.0, n_per_pair=40), CHAIN, [0, 0.005, 0.01, 0.02, 0.03], 500, 1)
    counts = [r.distinct_policies for r in reps]
    assert 80 <= counts[0] <= 300 and counts[-1] <= 40
    assert counts == sorted(counts, reverse=True)


def test_failures_recorded_not_retried():
    spec = LearnerSpec("generative", eps=0.1, delta=0.1)
    rep = run_replicated(spec, CHAIN, 3, 0)
    assert rep.runs == 0 and rep.failures == 3
    assert "BudgetExceeded" in rep.errors[0]["error"]


def test_strong_traces_counted():
    env = EnvSpec("random", {"s": 3, "a": 2, "h": 4, "seed": 3, "support": 0.67})
    spec = LearnerSpec("strong", overrides={"eps1": 0.005, "eta0": 0.01, "w": 500})
    rep = run_replicated(spec, env, 10, 0)
    assert rep.runs == 10 and rep.distinct_traces >= rep.distinct_policies >= 1


def test_spec_validation():
    with pytest.raises(ValueError):
        LearnerSpec("robust-plan", n_per_pair=40)
    with pytest.raises(ValueError):
        LearnerSpec("bogus")
    with pytest.raises(ValueError):
        run_replicated(LearnerSpec("greedy-baseline", n_per_pair=5), CHAIN, 0, 0)


def test_writers(tmp_path):
    reps = sweep(LearnerSpec("robust-plan", 0.0, n_per_pair=40), CHAIN, [0.0, 0.03], 20, 2)
    write_csv(reps, tmp_path / "r.csv")
    write_svg(reps, tmp_path / "r.svg")
    write_json(reps, tmp_path / "r.json")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "r_value,runs,distinct_policies,distinct_traces,k50,k90,top1"
    assert len(lines) == 3
    assert (tmp_path / "r.svg").read_text().startswith("<svg")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["reports"][1]["canonicalization"] == "full-table"
