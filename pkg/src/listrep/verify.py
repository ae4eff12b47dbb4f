"""Property battery over seeded random small instances.

Each check returns a :class:`CheckResult`; a check passes when it records
no violations. Functions under test are looked up through their modules at
call time so that a patched implementation is the one exercised.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mdp as core
from . import oracle, planner, truncation
from .config import TOL
from .envs import make_random
from .mdp import Policy, TabularMdp

SMALL_SHAPES = ((2, 2, 3), (3, 2, 3), (2, 2, 4), (2, 3, 3), (3, 2, 4), (4, 2, 3), (2, 2, 6))


@dataclass
class CheckResult:
    name: str
    cases: int = 0
    violations: int = 0
    examples: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.cases > 0 and self.violations == 0

    def fail(self, msg: str) -> None:
        self.violations += 1
        if len(self.examples) < 5:
            self.examples.append(msg)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        tail = f" e.g. {self.examples[0]}" if self.examples else ""
        return f"{status} {self.name}: {self.cases} cases, {self.violations} violations{tail}"


def small_instance(rng: np.random.Generator, max_policies: int = 4096) -> TabularMdp:
    """Random MDP small enough to enumerate; sparse supports make unreachable states."""
    while True:
        shape = SMALL_SHAPES[rng.integers(len(SMALL_SHAPES))]
        S, A, H = shape
        if A ** (S * H) <= max_policies:
            break
    support = float(rng.choice([0.5, 1.0]))
    return make_random(shape, int(rng.integers(2**32)), support)


def perturb(m: TabularMdp, eps0: float, rng: np.random.Generator) -> TabularMdp:
    """A model eps0-related to ``m``: every row mixed toward a random distribution."""
    H, S, A = m.horizon, m.num_states, m.num_actions
    u = rng.dirichlet(np.ones(S), size=(H, S, A))
    # mixing weight t moves a row by t * |p - u|_1 <= 2t in L1
    t = 0.5 * eps0 * rng.random((H, S, A, 1))
    out = m.replace(transitions=(1 - t) * m.transitions + t * u)
    if core.model_distance(m, out) > eps0:
        raise AssertionError("perturbation left the eps0 ball")
    return out


def random_policy(rng, horizon: int, num_states: int, num_actions: int) -> Policy:
    return Policy(rng.integers(num_actions, size=(horizon, num_states)))


# checks


def check_oracle(instances: int, seed: int) -> CheckResult:
    res = CheckResult("oracle-equivalence")
    rng = np.random.default_rng([seed, 1])
    for _ in range(instances):
        m = small_instance(rng)
        res.cases += 1
        v_dp = core.optimal_value(m)
        v_bf = oracle.brute_optimal_value(m)
        if abs(v_dp - v_bf) > TOL.value_match:
            res.fail(f"optimal value {v_dp} vs enumeration {v_bf}")
        d_dp = core.max_occupancy(m)
        d_bf = oracle.brute_max_occupancy(m)
        if np.abs(d_dp - d_bf).max() > TOL.value_match:
            res.fail(f"max occupancy off by {np.abs(d_dp - d_bf).max():.3g}")
    return res


def check_suboptimality(instances: int, seed: int) -> CheckResult:
    res = CheckResult("suboptimality-bound")
    rng = np.random.default_rng([seed, 2])
    for _ in range(instances):
        m = small_instance(rng, max_policies=2**20)
        eps0 = float(10 ** rng.uniform(-4, -1))
        m_hat = perturb(m, eps0, rng)
        r = float(rng.uniform(0, 0.5))
        pi = planner.robust_plan(m_hat, r)
        loss = core.optimal_value(m) - core.policy_value(m, pi)
        bound = planner.suboptimality_bound(m.horizon, eps0, r)
        res.cases += 1
        # the bound is on exact values; allow float round-off only
        if loss > bound + TOL.value_match:
            res.fail(f"loss {loss:.3g} > bound {bound:.3g} (eps0={eps0:.3g}, r={r:.3g})")
    return res


def check_stability(instances: int, seed: int, grid_points: int = 100, copies: int = 20) -> CheckResult:
    res = CheckResult("tolerance-stability")
    rng = np.random.default_rng([seed, 3])
    grid = np.linspace(0.0, 0.5, grid_points)
    for _ in range(instances):
        m = small_instance(rng, max_policies=2**20)
        S, A, H = m.shape
        eps0 = 1e-4
        bad = planner.bad_action_set(m, eps0)
        good = [float(r) for r in grid if r not in bad]
        vt = core.backward_dp(m)
        if not np.array_equal(planner.robust_plan(m, 0.0).actions, vt.q.argmax(axis=2)):
            res.fail("zero tolerance differs from lexicographic argmax")
        hats = [perturb(m, eps0, rng) for _ in range(copies)]
        seen = set()
        for r in good:
            res.cases += 1
            keys = {planner.robust_plan(mh, r).key() for mh in hats}
            if len(keys) != 1:
                res.fail(f"r={r:.4f} outside the bad set gave {len(keys)} policies")
            seen |= keys
        if len(seen) > S * A * H + 1:
            res.fail(f"{len(seen)} policies over the grid exceeds {S * A * H + 1}")
    return res


def _truncation_instances(instances: int, seed: int, salt: int):
    rng = np.random.default_rng([seed, salt])
    for _ in range(instances):
        yield small_instance(rng), rng


def check_inclusion(instances: int, seed: int, pairs: int = 100) -> CheckResult:
    res = CheckResult("profile-inclusion")
    for m, rng in _truncation_instances(instances, seed, 4):
        prof = truncation.StrongProfiler(m)
        for _ in range(pairs):
            r1, r2 = np.sort(rng.random(2))
            res.cases += 1
            if not prof(float(r1)).issubset(prof(float(r2))):
                res.fail(f"U({r1:.4f}) not inside U({r2:.4f})")
    return res


def check_profile_count(instances: int, seed: int, grid_points: int = 10_000) -> CheckResult:
    res = CheckResult("profile-count")
    grid = np.linspace(0.0, 1.0, grid_points)
    for m, _ in _truncation_instances(instances, seed, 5):
        S, _, H = m.shape
        census = truncation.count_distinct_profiles(m, grid)
        res.cases += 1
        if census.distinct > S * H + 1:
            res.fail(f"{census.distinct} profiles exceeds {S * H + 1}")
    return res


def _crit(m):
    return oracle.critical_thresholds(m)


def check_crit_boundary(instances: int, seed: int) -> CheckResult:
    res = CheckResult("crit-boundary")
    probe = TOL.crit_probe
    for m, _ in _truncation_instances(instances, seed, 6):
        table = _crit(m)
        cache = {}

        def brute(r):
            if r not in cache:
                cache[r] = oracle.brute_truncation_profile(m, r)
            return cache[r]

        for h in range(m.horizon):
            for s in range(m.num_states):
                c = table.at(s, h)
                above, below = c + probe, c - probe
                if 0 < above < 1:
                    res.cases += 1
                    if not brute(above).contains(s, h):
                        res.fail(f"(s={s}, h={h}) missing just above crit {c:.6f}")
                if 0 < below < 1:
                    res.cases += 1
                    if brute(below).contains(s, h):
                        res.fail(f"(s={s}, h={h}) present just below crit {c:.6f}")
    return res


def _truncated_dstar(m: TabularMdp, prof) -> np.ndarray:
    t = truncation.truncate(m, prof)
    return core.max_occupancy(t.mdp)[:, : m.num_states]


def _away_from_crit(rng, crit: np.ndarray, k: int) -> list[float]:
    out = []
    while len(out) < k:
        r = float(rng.random())
        if np.all(np.abs(crit - r) > TOL.crit_probe):
            out.append(r)
    return out


def check_occupancy_monotone(instances: int, seed: int, grid_points: int = 20) -> CheckResult:
    res = CheckResult("occupancy-monotone")
    for m, rng in _truncation_instances(instances, seed, 7):
        prof = truncation.StrongProfiler(m)
        rs = np.sort(rng.random(grid_points))
        ds = [_truncated_dstar(m, prof(float(r))) for r in rs]
        for (r1, d1), (r2, d2) in zip(zip(rs, ds), zip(rs[1:], ds[1:])):
            res.cases += 1
            if np.any(d2 > d1 + TOL.value_match):
                res.fail(f"d* grew from r={r1:.4f} to r={r2:.4f}")
    return res


def check_membership(instances: int, seed: int, probes: int = 10) -> CheckResult:
    res = CheckResult("membership-identity")
    for m, rng in _truncation_instances(instances, seed, 8):
        table = _crit(m)
        prof = truncation.StrongProfiler(m)
        for r in _away_from_crit(rng, table.crit, probes):
            res.cases += 1
            p = prof(r)
            if p != oracle.brute_truncation_profile(m, r):
                res.fail(f"profile at r={r:.4f} differs from the joint-event definition")
            d = _truncated_dstar(m, p)
            if not np.array_equal(d <= r, p.mask(m.num_states)):
                res.fail(f"membership at r={r:.4f} disagrees with truncated d*")
    return res


def check_crit_bounds(instances: int, seed: int, probes: int = 10) -> CheckResult:
    res = CheckResult("crit-bounds")
    for m, rng in _truncation_instances(instances, seed, 9):
        table = _crit(m)
        prof = truncation.StrongProfiler(m)
        for r in _away_from_crit(rng, table.crit, probes):
            d = _truncated_dstar(m, prof(r))
            for h in range(m.horizon):
                for s in range(m.num_states):
                    c = table.at(s, h)
                    res.cases += 1
                    if r > c + TOL.crit_probe and d[h, s] > c + TOL.value_match:
                        res.fail(f"d*={d[h, s]:.6f} above crit {c:.6f} at r={r:.4f}")
                    if r < c - TOL.crit_probe and d[h, s] < c - TOL.value_match:
                        res.fail(f"d*={d[h, s]:.6f} below crit {c:.6f} at r={r:.4f}")
    return res


def check_perturbation(instances: int, seed: int) -> CheckResult:
    res = CheckResult("perturbation-values")
    rng = np.random.default_rng([seed, 10])
    for _ in range(instances):
        m = small_instance(rng, max_policies=2**20)
        eps0 = float(10 ** rng.uniform(-4, -1))
        m2 = perturb(m, eps0, rng)
        H = m.horizon
        bound = H * H * eps0 + TOL.value_match
        a, b = core.backward_dp(m), core.backward_dp(m2)
        res.cases += 1
        if np.abs(a.v - b.v).max() > bound or np.abs(a.q - b.q).max() > bound:
            res.fail(f"optimal values moved more than H^2 eps0 (eps0={eps0:.3g})")
        pi = random_policy(rng, H, m.num_states, m.num_actions)
        res.cases += 1
        gap = abs(core.policy_value(m, pi) - core.policy_value(m2, pi))
        if gap > bound:
            res.fail(f"policy value moved {gap:.3g} > H^2 eps0")
    return res


def check_truncation_gap(instances: int, seed: int) -> CheckResult:
    res = CheckResult("truncation-gap")
    rng = np.random.default_rng([seed, 11])
    for _ in range(instances):
        m = small_instance(rng, max_policies=2**20)
        S, A, H = m.shape
        r = float(rng.uniform(0, 0.5))
        pi = random_policy(rng, H, S + 1, A)
        v = core.policy_value(m, pi.restrict(S))
        for t in (truncation.strong_truncation(m, r), truncation.weak_truncation(m, r)):
            res.cases += 1
            gap = v - core.policy_value(t.mdp, pi)
            if not -TOL.value_match <= gap <= H * H * S * r + TOL.value_match:
                res.fail(f"{t.tag}: value gap {gap:.3g} outside [0, {H * H * S * r:.3g}] at r={r:.3g}")
    return res


# name -> (function, default instance count)
CHECKS = {
    "oracle-equivalence": (check_oracle, 200),
    "suboptimality-bound": (check_suboptimality, 1000),
    "tolerance-stability": (check_stability, 50),
    "profile-inclusion": (check_inclusion, 100),
    "profile-count": (check_profile_count, 100),
    "crit-boundary": (check_crit_boundary, 100),
    "occupancy-monotone": (check_occupancy_monotone, 100),
    "membership-identity": (check_membership, 100),
    "crit-bounds": (check_crit_bounds, 100),
    "perturbation-values": (check_perturbation, 500),
    "truncation-gap": (check_truncation_gap, 500),
}


def run_checks(only=None, instances: int | None = None, seed: int = 0) -> list[CheckResult]:
    names = list(CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValueError(f"unknown checks {unknown}; available: {sorted(CHECKS)}")
    out = []
    for name in names:
        fn, default = CHECKS[name]
        out.append(fn(default if instances is None else instances, seed))
    return out
