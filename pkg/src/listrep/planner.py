"""Tolerance-based lexicographic planning and the intervals where it is unstable."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import TOL
from .envs import BudgetExceeded, GenerativeEnv
from .mdp import MdpError, Policy, TabularMdp, backward_dp
from .oracle import gap_set


class InvalidInterval(ValueError):
    pass


def robust_plan(m_hat: TabularMdp, r_action: float) -> Policy:
    """At every (h, s) take the first action whose Q* is within ``r_action`` of V*.

    The comparison is an exact float ``>=``; the argmax always qualifies, so
    the candidate set is never empty.
    """
    if r_action < 0:
        raise MdpError(f"r_action must be non-negative, got {r_action}")
    vt = backward_dp(m_hat)
    ok = vt.q >= (vt.v[:, :, None] - r_action)
    return Policy(ok.argmax(axis=2))


def greedy_plan(m_hat: TabularMdp) -> Policy:
    return robust_plan(m_hat, 0.0)


def suboptimality_bound(horizon: int, eps0: float, r_action: float) -> float:
    if horizon < 0 or eps0 < 0 or r_action < 0:
        raise ValueError("inputs must be non-negative")
    return 2 * horizon**2 * eps0 + r_action * horizon


@dataclass(frozen=True)
class BadIntervalSet:
    """Union of closed balls ``[x - radius, x + radius]`` clipped to ``[0, inf)``."""

    centers: np.ndarray
    radius: float

    def __contains__(self, r: float) -> bool:
        if self.centers.size == 0:
            return False
        return bool(np.any(np.abs(self.centers - r) <= self.radius))

    def contains_many(self, rs) -> np.ndarray:
        rs = np.asarray(rs, dtype=float)
        return (np.abs(rs[:, None] - self.centers[None, :]) <= self.radius).any(axis=1)

    def intervals(self) -> list[tuple[float, float]]:
        """Merged disjoint intervals, sorted."""
        out: list[list[float]] = []
        for x in np.unique(self.centers):
            lo, hi = max(0.0, x - self.radius), x + self.radius
            if out and lo <= out[-1][1]:
                out[-1][1] = max(out[-1][1], hi)
            else:
                out.append([lo, hi])
        return [(a, b) for a, b in out]

    def measure(self, lo: float, hi: float) -> float:
        """Length of the set inside ``[lo, hi]``."""
        total = 0.0
        for a, b in self.intervals():
            total += max(0.0, min(b, hi) - max(a, lo))
        return total


def bad_action_set(m: TabularMdp, eps0: float) -> BadIntervalSet:
    if eps0 < 0:
        raise ValueError("eps0 must be non-negative")
    radius = 2 * m.horizon**2 * eps0
    return BadIntervalSet(gap_set(m).values().copy(), radius)


@dataclass(frozen=True)
class ToleranceDraw:
    r_action: float
    r_trunc: float | None = None
    action_bounds: tuple[float, float] | None = None
    trunc_bounds: tuple[float, float] | None = None
    seed: object = None

    def __post_init__(self):
        if self.r_action < 0 or (self.r_trunc is not None and self.r_trunc < 0):
            raise ValueError("tolerances must be non-negative")
        for value, bounds in ((self.r_action, self.action_bounds), (self.r_trunc, self.trunc_bounds)):
            if bounds is not None:
                lo, hi = bounds
                if not lo < hi or not lo < value < hi:
                    raise ValueError(f"draw {value} outside recorded interval {bounds}")

    def to_dict(self) -> dict:
        return {
            "r_action": self.r_action,
            "r_trunc": self.r_trunc,
            "action_bounds": self.action_bounds,
            "trunc_bounds": self.trunc_bounds,
            "seed": self.seed,
        }


def draw_tolerance(rng: np.random.Generator, lo: float, hi: float) -> float:
    """Uniform draw from the open interval ``(lo, hi)``."""
    if not (0 <= lo < hi) or not math.isfinite(hi):
        raise InvalidInterval(f"need 0 <= lo < hi, got ({lo}, {hi})")
    while True:
        x = float(rng.uniform(lo, hi))
        if lo < x < hi:
            return x


def generative_eps0(eps: float, delta: float, horizon: int) -> float:
    return delta * eps / (20 * horizon**3)


def generative_sample_size(shape: tuple[int, int, int], eps: float, delta: float) -> int:
    """Samples per (s, a, h) so the empirical model is eps0-related w.p. 1 - delta/2.

    Hoeffding per entry at accuracy eps0/|S|, union bound over the
    |S|^2 |A| H entries.
    """
    S, A, H = shape
    eps0 = generative_eps0(eps, delta, H)
    return math.ceil(math.log(4 * S * S * A * H / delta) * S * S / (2 * eps0 * eps0))


@dataclass
class LearnResult:
    policy: Policy
    draws: ToleranceDraw | None = None
    trace: object = None
    diagnostics: dict = field(default_factory=dict)
    model: object = None


def generative_learn(
    gen: GenerativeEnv,
    eps: float,
    delta: float,
    rng: np.random.Generator,
    n: int | None = None,
    budget: int = TOL.sample_budget,
) -> LearnResult:
    """Estimate the model from N samples per pair, then plan with a random tolerance."""
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ValueError("eps and delta must lie in (0, 1)")
    m = gen.mdp
    H, S, A = m.horizon, m.num_states, m.num_actions
    required = generative_sample_size(m.shape, eps, delta) if n is None else int(n)
    if required * H * S * A > budget:
        raise BudgetExceeded(f"generative learner needs N={required} samples per pair; budget is {budget}")
    m_hat = gen.empirical_model(required, budget)
    hi = eps / (5 * H)
    r_action = draw_tolerance(rng, 0.0, hi)
    pi = robust_plan(m_hat, r_action)
    return LearnResult(pi, ToleranceDraw(r_action, action_bounds=(0.0, hi)), diagnostics={"n": required})
