"""Brute-force ground truth for tiny instances.

Everything here enumerates deterministic policies outright and never calls
the dynamic programs it is used to check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .config import TOL
from .mdp import Policy, TabularMdp, backward_dp
from .truncation import STRONG, StrongProfiler, TruncationProfile


class InstanceTooLarge(ValueError):
    pass


def policy_count(m: TabularMdp) -> int:
    return m.num_actions ** (m.num_states * m.horizon)


def _check_cap(m: TabularMdp, cap: int | None):
    cap = TOL.enumeration_cap if cap is None else cap
    n = policy_count(m)
    if n > cap:
        raise InstanceTooLarge(f"{n} policies exceeds enumeration cap {cap}")


def enumerate_policies(m: TabularMdp, cap: int | None = None):
    """Yield every deterministic non-stationary policy once, lexicographically."""
    _check_cap(m, cap)
    H, S = m.horizon, m.num_states
    for flat in itertools.product(range(m.num_actions), repeat=H * S):
        yield Policy(np.array(flat).reshape(H, S))


def policy_array(m: TabularMdp, cap: int | None = None) -> np.ndarray:
    """All policies as one ``(N, H, S)`` array, in the order of ``enumerate_policies``."""
    _check_cap(m, cap)
    H, S, A = m.horizon, m.num_states, m.num_actions
    n = H * S
    idx = np.arange(A**n)
    digits = (idx[:, None] // A ** np.arange(n - 1, -1, -1)) % A
    return digits.reshape(-1, H, S)


def all_policy_values(m: TabularMdp, pols: np.ndarray | None = None) -> np.ndarray:
    """Expected return from the start state for every policy in ``pols``."""
    if pols is None:
        pols = policy_array(m)
    S = m.num_states
    N = pols.shape[0]
    v = np.zeros((N, S))
    cols = np.arange(S)
    for h in range(m.horizon - 1, -1, -1):
        a = pols[:, h, :]
        rows = m.transitions[h][cols[None, :], a]  # (N, S, S')
        v = m.rewards[h][cols[None, :], a] + np.einsum("nst,nt->ns", rows, v)
    return v[:, m.initial_state]


def all_policy_occupancies(m: TabularMdp, pols: np.ndarray | None = None, killed=None) -> np.ndarray:
    """``Pr[s_h = s]`` for every policy, shape ``(N, H, S)``.

    With ``killed`` (an ``(H, S)`` boolean mask) the probability is of the joint
    event that no earlier level visited a killed state.
    """
    if pols is None:
        pols = policy_array(m)
    H, S = m.horizon, m.num_states
    N = pols.shape[0]
    out = np.zeros((N, H, S))
    mass = np.zeros((N, S))
    mass[:, m.initial_state] = 1.0
    cols = np.arange(S)
    for h in range(H):
        out[:, h] = mass
        if h == H - 1:
            break
        alive = mass if killed is None else mass * ~killed[h]
        rows = m.transitions[h][cols[None, :], pols[:, h, :]]
        mass = np.einsum("ns,nst->nt", alive, rows)
    return out


def brute_optimal_value(m: TabularMdp) -> float:
    return float(all_policy_values(m).max())


def brute_max_occupancy(m: TabularMdp) -> np.ndarray:
    return all_policy_occupancies(m).max(axis=0)


@dataclass(frozen=True)
class GapSet:
    gaps: np.ndarray  # (H, S, A)

    def values(self) -> np.ndarray:
        """Flat multiset of gaps, duplicates kept."""
        return self.gaps.ravel()

    def elements(self):
        H, S, A = self.gaps.shape
        for h in range(H):
            for s in range(S):
                for a in range(A):
                    yield float(self.gaps[h, s, a]), (s, a, h)

    def __len__(self):
        return self.gaps.size


def gap_set(m: TabularMdp) -> GapSet:
    vt = backward_dp(m)
    g = vt.v[:, :, None] - vt.q
    return GapSet(g)


def brute_truncation_profile(m: TabularMdp, r: float) -> TruncationProfile:
    """Unreachable sets straight from the inductive definition.

    Level ``h`` holds the states whose best joint probability of being reached
    while avoiding all earlier unreachable sets is at most ``r``; the maximum
    is taken over the full policy enumeration.
    """
    pols = policy_array(m)
    H, S = m.horizon, m.num_states
    killed = np.zeros((H, S), dtype=bool)
    levels = []
    for h in range(H):
        occ = all_policy_occupancies(m, pols, killed)[:, h]
        unreachable = occ.max(axis=0) <= r
        killed[h] = unreachable
        levels.append(frozenset(np.flatnonzero(unreachable).tolist()))
    return TruncationProfile(tuple(levels), STRONG)


@dataclass(frozen=True)
class CriticalThresholdTable:
    crit: np.ndarray  # (H, S)

    def at(self, s: int, h: int) -> float:
        return float(self.crit[h, s])


def critical_thresholds(m: TabularMdp, profile_fn=None, iterations: int = TOL.crit_iterations) -> CriticalThresholdTable:
    """Binary search of ``inf {r : s in U_h(r)}`` for each (s, h).

    Membership is monotone in ``r``, so bisection on [0, 1] converges to the
    boundary; the returned value is always a member-side point, so start state
    at level 0 comes out as exactly 1.
    """
    if profile_fn is None:
        profile_fn = StrongProfiler(m)
    H, S = m.horizon, m.num_states
    crit = np.empty((H, S))
    for h in range(H):
        for s in range(S):
            if s in profile_fn(0.0).levels[h]:
                crit[h, s] = 0.0
                continue
            lo, hi = 0.0, 1.0
            for _ in range(iterations):
                mid = 0.5 * (lo + hi)
                if s in profile_fn(mid).levels[h]:
                    hi = mid
                else:
                    lo = mid
            crit[h, s] = hi
    return CriticalThresholdTable(crit)
