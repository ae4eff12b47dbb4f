"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (lines are printed straight to
the terminal) or ``python3 tests/test_acceptance.py``.
"""

import math
import time

import numpy as np
import pytest
import sympy

from listrep import verify
from listrep.harness import FULL_TABLE, EnvSpec, LearnerSpec, run_replicated, sweep
from listrep.learners import derive_constants

LINES = []


def report(number, title, ok, detail, elapsed, limit):
    ok = ok and elapsed < limit
    line = f"criterion {number} [{title}]: {'PASS' if ok else 'FAIL'} ({detail}; {elapsed:.1f}s of {limit}s)"
    LINES.append(line)
    print("\n" + line, flush=True)
    return ok


@pytest.fixture
def emit(capsys):
    def _emit(*args):
        with capsys.disabled():
            return report(*args)

    return _emit


def _battery(names, counts, seed=0):
    out = []
    for name, n in zip(names, counts):
        fn, _ = verify.CHECKS[name]
        out.append(fn(n, seed))
    return out


def _summary(results):
    return ", ".join(f"{r.name} {r.cases} cases/{r.violations} bad" for r in results)


def test_criterion_1_oracle_equivalence(emit):
    t = time.time()
    [res] = _battery(["oracle-equivalence"], [200])
    assert emit(1, "oracle equivalence", res.passed, _summary([res]), time.time() - t, 120)


def test_criterion_2_suboptimality_bound(emit):
    t = time.time()
    [res] = _battery(["suboptimality-bound"], [1000])
    assert emit(2, "suboptimality bound", res.passed, _summary([res]), time.time() - t, 60)


def test_criterion_3_tolerance_stability(emit):
    t = time.time()
    [res] = _battery(["tolerance-stability"], [50])
    assert emit(3, "stability outside bad set", res.passed, _summary([res]), time.time() - t, 120)


def test_criterion_4_truncation_structure(emit):
    t = time.time()
    names = ["profile-inclusion", "profile-count", "crit-boundary", "occupancy-monotone", "membership-identity", "crit-bounds"]
    results = _battery(names, [100] * len(names))
    ok = all(r.passed for r in results)
    assert emit(4, "truncation structure", ok, _summary(results), time.time() - t, 300)


def test_criterion_5_perturbation(emit):
    t = time.time()
    results = _battery(["perturbation-values", "truncation-gap"], [1000, 1000])
    ok = all(r.passed for r in results)
    assert emit(5, "perturbation bounds", ok, _summary(results), time.time() - t, 60)


def _inversions(counts, slack):
    """Number of increases along the sequence, and whether each stays within ``slack``."""
    ups = [(a, b) for a, b in zip(counts, counts[1:]) if b > a]
    return len(ups), all(b <= a * (1 + slack) for a, b in ups)


def test_criterion_6_chain(emit):
    t = time.time()
    env = EnvSpec("chain", {"h": 8, "delta": 0.02})
    grid = [0.0, 0.005, 0.01, 0.02, 0.03]
    reps = sweep(LearnerSpec("robust-plan", 0.0, n_per_pair=40), env, grid, 500, 2024)
    counts = [r.distinct_policies for r in reps]
    n_up, small = _inversions(counts, 0.10)
    ok = 80 <= counts[0] <= 300 and 3 <= counts[-1] <= 40 and counts[0] / counts[-1] >= 5 and n_up <= 1 and small
    detail = f"distinct by r {dict(zip(grid, counts))}, ratio {counts[0] / counts[-1]:.1f}"
    assert emit(6, "chain experiment", ok, detail, time.time() - t, 60)


GRID_R = [0.0, 0.001, 0.002, 0.0035, 0.005, 0.01, 0.02]


def test_criterion_7_gridworld(emit):
    t = time.time()
    env = EnvSpec("gridworld", {"n": 5, "adv": 0.02})
    # policies are counted on full tables; the trace statistics use the realized paths
    full = sweep(LearnerSpec("robust-plan", 0.0, n_per_pair=100), env, GRID_R, 500, 2024, relevance=FULL_TABLE)
    counts = [r.distinct_policies for r in full]
    strict_ups = sum(b >= a for a, b in zip(counts, counts[1:]))
    greedy, robust = full[0], full[-1]
    k90_r, k90_g, top1 = robust.k_quantile(0.9), greedy.k_quantile(0.9), robust.top1_coverage()
    ok = strict_ups <= 1 and counts[0] / counts[-1] >= 4 and k90_r <= 5 and top1 >= 0.6 and k90_g >= 5 * k90_r
    detail = (
        f"distinct by r {dict(zip(GRID_R, counts))}, ratio {counts[0] / counts[-1]:.1f}; "
        f"traces robust k90={k90_r} top1={top1:.3f}, greedy k90={k90_g}"
    )
    assert emit(7, "gridworld experiment", ok, detail, time.time() - t, 180)


FIXED = EnvSpec("random", {"s": 3, "a": 2, "h": 4, "seed": 3, "support": 0.67})
EPS, DELTA = 0.1, 0.1


def test_criterion_8_end_to_end(emit):
    t = time.time()
    S, A, H = 3, 2, 4
    weak = run_replicated(
        LearnerSpec("weak", eps=EPS, delta=DELTA, overrides={"eps1": 0.005, "eps0": 0.02, "w": 2000}, blackbox_n=200),
        FIXED,
        200,
        7,
    )
    strong = run_replicated(
        LearnerSpec("strong", eps=EPS, delta=DELTA, overrides={"eps1": 0.005, "eta0": 0.01, "w": 2000}), FIXED, 200, 7
    )
    weak_bound = (H * S * A + 1) * (H * S + 1)
    strong_bound = (S * H + 1) * (2 * S * S * H * H * A + 1)
    fw, fs = weak.eps_optimal_fraction(EPS), strong.eps_optimal_fraction(EPS)
    ok = (
        weak.runs == strong.runs == 200
        and weak.distinct_policies <= weak_bound
        and strong.distinct_traces <= strong_bound
        and fw >= 1 - DELTA
        and fs >= 1 - DELTA
    )
    detail = (
        f"weak {weak.distinct_policies} policies (bound {weak_bound}), eps-optimal {fw:.3f}; "
        f"strong {strong.distinct_traces} trace/policy pairs (bound {strong_bound}), eps-optimal {fs:.3f}"
    )
    assert emit(8, "end-to-end learners", ok, detail, time.time() - t, 600)


def _sym_constants(S, A, H, eps, delta, algo):
    e, d = sympy.Rational(eps), sympy.Rational(delta)
    if algo == "strong":
        c1 = 8 * A * S**2 * H**2 / d
        eps0 = e * d / (1440 * S**3 * H**7 * A)
        eps1 = 5 * c1 * H**2 * eps0
        eta0 = 3 * eps1 * H
        w = sympy.ceiling(S**2 * sympy.log(8 * H * S**2 * A / d) / (eps0**2 * eta0))
    else:
        c1 = 4 * A * S * H / d
        eps0 = e * d / (100 * S * H**5 * A)
        eps1 = 5 * c1 * H**2 * eps0
        eta0 = None
        w = sympy.ceiling(S**2 / (eps0**2 * eps1) * sympy.log(16 * S**2 * A * H / d))
    return {"c1": c1, "eps0": eps0, "eps1": eps1, "eta0": eta0, "w": w}


def test_criterion_9_closed_form_constants(emit):
    t = time.time()
    rng = np.random.default_rng(99)
    bad = []
    for k in range(20):
        S, A, H = (int(x) for x in rng.integers(1, 9, size=3))
        eps, delta = float(rng.uniform(0.01, 0.5)), float(rng.uniform(0.01, 0.5))
        algo = "strong" if k % 2 == 0 else "weak"
        got = derive_constants((S, A, H), eps, delta, algo, "paper", budget=None)
        want = _sym_constants(S, A, H, eps, delta, algo)
        for name, exact in want.items():
            mine = getattr(got, name)
            if exact is None:
                if mine is not None:
                    bad.append((S, A, H, algo, name))
                continue
            if name == "w":
                if int(exact) != mine:
                    bad.append((S, A, H, algo, name))
                continue
            ref = float(exact.evalf(40))
            if abs(mine - ref) > math.ulp(ref):
                bad.append((S, A, H, algo, name, mine, ref))
    elapsed = time.time() - t
    detail = f"20 shapes, {len(bad)} mismatches beyond 1 ulp against sympy"
    assert emit(9, "closed-form constants", not bad, detail, elapsed, 1)

if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
