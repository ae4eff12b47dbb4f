"""Truncated MDPs: unreachable-state profiles and the models built from them.

The absorbing state of every truncated model is appended as index ``S``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import MdpError, TabularMdp, level_max_occupancy, max_occupancy

STRONG = "strong"
WEAK = "weak"
ESTIMATED = "estimated"


@dataclass(frozen=True)
class TruncationProfile:
    levels: tuple[frozenset, ...]
    flavor: str = STRONG

    @classmethod
    def from_sets(cls, sets, flavor: str = STRONG) -> TruncationProfile:
        return cls(tuple(frozenset(int(s) for s in level) for level in sets), flavor)

    @classmethod
    def empty(cls, horizon: int, flavor: str = STRONG) -> TruncationProfile:
        return cls((frozenset(),) * horizon, flavor)

    @classmethod
    def full(cls, horizon: int, num_states: int, flavor: str = STRONG) -> TruncationProfile:
        return cls((frozenset(range(num_states)),) * horizon, flavor)

    @property
    def horizon(self) -> int:
        return len(self.levels)

    def contains(self, s: int, h: int) -> bool:
        return s in self.levels[h]

    def size(self) -> int:
        return sum(len(level) for level in self.levels)

    def issubset(self, other: TruncationProfile) -> bool:
        return all(a <= b for a, b in zip(self.levels, other.levels))

    def key(self) -> str:
        """Canonical form: sorted indices per level, levels joined by '|'."""
        return "|".join(",".join(str(s) for s in sorted(level)) for level in self.levels)

    def to_list(self) -> list[list[int]]:
        return [sorted(level) for level in self.levels]

    def mask(self, num_states: int) -> np.ndarray:
        out = np.zeros((self.horizon, num_states), dtype=bool)
        for h, level in enumerate(self.levels):
            out[h, list(level)] = True
        return out


@dataclass(frozen=True)
class TruncatedMdp:
    mdp: TabularMdp
    profile: TruncationProfile | None
    tag: str

    @property
    def absorb(self) -> int:
        return self.mdp.num_states - 1

    @property
    def base_states(self) -> int:
        return self.mdp.num_states - 1


def with_absorbing(transitions: np.ndarray, rewards: np.ndarray):
    """Pad (H, S, A, S) / (H, S, A) tables with an absorbing zero-reward state."""
    H, S, A, _ = transitions.shape
    p = np.zeros((H, S + 1, A, S + 1))
    p[:, :S, :, :S] = transitions
    p[:, S, :, S] = 1.0
    r = np.zeros((H, S + 1, A))
    r[:, :S] = rewards
    return p, r


def truncated_tables(transitions: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Reroute every row flagged in ``mask[h, s]`` to the absorbing (last) state."""
    p = transitions.copy()
    absorb = p.shape[-1] - 1
    h_idx, s_idx = np.nonzero(mask)
    p[h_idx, s_idx] = 0.0
    p[h_idx, s_idx, :, absorb] = 1.0
    return p


def truncate(m: TabularMdp, profile: TruncationProfile, tag: str | None = None) -> TruncatedMdp:
    """Send every (s, h) in the profile to the absorbing state; other rows are copied."""
    if profile.horizon != m.horizon:
        raise MdpError(f"profile has {profile.horizon} levels, model has {m.horizon}")
    p, r = with_absorbing(m.transitions, m.rewards)
    mask = np.zeros((m.horizon, m.num_states + 1), dtype=bool)
    mask[:, : m.num_states] = profile.mask(m.num_states)
    p = truncated_tables(p, mask)
    if tag is None:
        tag = "M_bar^r" if profile.flavor == WEAK else "M^r"
    return TruncatedMdp(TabularMdp(p, r, m.initial_state), profile, tag)


class StrongProfiler:
    """Inductive unreachable sets ``U_h(r)`` for many thresholds on one model.

    Level ``h`` is decided from the max occupancy of the model truncated on
    levels ``< h``. That occupancy depends only on the sets already chosen, so
    it is memoised on that prefix; each call still runs the full induction.
    """

    def __init__(self, m: TabularMdp):
        self.m = m
        p, _ = with_absorbing(m.transitions, m.rewards)
        self._padded = p
        self._cache: dict[tuple, np.ndarray] = {}

    def _reach(self, prefix: tuple) -> np.ndarray:
        got = self._cache.get(prefix)
        if got is not None:
            return got
        m, h = self.m, len(prefix)
        S = m.num_states
        if h == 0:
            d = np.zeros(S)
            d[m.initial_state] = 1.0
        else:
            mask = np.zeros((h, S + 1), dtype=bool)
            for k, level in enumerate(prefix):
                mask[k, list(level)] = True
            p = truncated_tables(self._padded[:h], mask)
            d = level_max_occupancy(p, m.initial_state, h)[:S]
        self._cache[prefix] = d
        return d

    def occupancy(self, profile: TruncationProfile) -> np.ndarray:
        """``d*_{M^r}[h, s]`` for the truncation given by ``profile``."""
        return np.array([self._reach(profile.levels[:h]) for h in range(self.m.horizon)])

    def __call__(self, r: float) -> TruncationProfile:
        if not 0 <= r <= 1:
            raise MdpError(f"threshold must lie in [0, 1], got {r}")
        levels: tuple = ()
        for _ in range(self.m.horizon):
            d = self._reach(levels)
            levels = levels + (frozenset(np.flatnonzero(d <= r).tolist()),)
        return TruncationProfile(levels, STRONG)


def strong_profile(m: TabularMdp, r: float) -> TruncationProfile:
    return StrongProfiler(m)(r)


class WeakProfiler:
    """Global sets ``T_h(r) = {s : d*(s, h) <= r}``; no coupling across levels."""

    def __init__(self, m: TabularMdp):
        self.m = m
        self.d_star = max_occupancy(m)

    def __call__(self, r: float) -> TruncationProfile:
        if not 0 <= r <= 1:
            raise MdpError(f"threshold must lie in [0, 1], got {r}")
        return TruncationProfile(
            tuple(frozenset(np.flatnonzero(row <= r).tolist()) for row in self.d_star), WEAK
        )


def weak_profile(m: TabularMdp, r: float) -> TruncationProfile:
    return WeakProfiler(m)(r)


def strong_truncation(m: TabularMdp, r: float) -> TruncatedMdp:
    return truncate(m, strong_profile(m, r), "M^r")


def weak_truncation(m: TabularMdp, r: float) -> TruncatedMdp:
    return truncate(m, weak_profile(m, r), "M_bar^r")


def reach_reward_mdp(base, s: int, h: int) -> TabularMdp:
    """Auxiliary MDP whose optimal value is the max probability of being at ``s`` on level ``h``.

    Transitions of ``base`` are kept below level ``h``; from ``h`` on everything
    drops into the absorbing state. A plain ``TabularMdp`` is first padded with
    an absorbing state.
    """
    if isinstance(base, TruncatedMdp):
        p = base.mdp.transitions.copy()
        s0 = base.mdp.initial_state
    else:
        p, _ = with_absorbing(base.transitions, base.rewards)
        s0 = base.initial_state
    H, S1, A, _ = p.shape
    if not 0 <= h < H:
        raise MdpError(f"level {h} outside [0, {H})")
    p[h:] = 0.0
    p[h:, :, :, S1 - 1] = 1.0
    r = np.zeros((H, S1, A))
    r[h, s, :] = 1.0
    return TabularMdp(p, r, s0)


@dataclass
class ProfileCensus:
    counts: dict  # key -> number of grid points
    intervals: dict  # key -> list of (r_lo, r_hi) runs of consecutive grid points
    profiles: dict  # key -> TruncationProfile

    @property
    def distinct(self) -> int:
        return len(self.counts)


def count_distinct_profiles(m: TabularMdp, grid, flavor: str = STRONG) -> ProfileCensus:
    grid = [float(r) for r in grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise MdpError("grid must be sorted")
    profiler = StrongProfiler(m) if flavor == STRONG else WeakProfiler(m)
    counts, intervals, profiles = {}, {}, {}
    prev = None
    for r in grid:
        prof = profiler(r)
        key = prof.key()
        counts[key] = counts.get(key, 0) + 1
        profiles.setdefault(key, prof)
        runs = intervals.setdefault(key, [])
        if key == prev:
            runs[-1] = (runs[-1][0], r)
        else:
            runs.append((r, r))
        prev = key
    return ProfileCensus(counts, intervals, profiles)
