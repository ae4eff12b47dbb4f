"""Online list-replicable learners and reference black-box PAC learners.

Both learners iterate levels ascending, then states, then actions; that order
is part of what the strong learner's execution trace records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np

from .config import TOL
from .envs import BudgetExceeded, EpisodicEnv, GenerativeEnv
from .mdp import MdpError, Policy, TabularMdp, backward_dp, level_max_occupancy
from .oracle import all_policy_values, policy_array
from .planner import LearnResult, ToleranceDraw, draw_tolerance, robust_plan
from .truncation import with_absorbing

STRONG = "strong"
WEAK = "weak"
PAPER = "paper"
SCALED = "scaled"

CONSTANT_NAMES = ("c1", "eps0", "eps1", "eta0", "w")


def _ceil_log_ratio(numer: Fraction, log_arg: Fraction, denom: Fraction) -> int:
    # ceil(numer * ln(log_arg) / denom) at 60 significant digits
    with localcontext() as ctx:
        ctx.prec = 60
        ln = (Decimal(log_arg.numerator) / Decimal(log_arg.denominator)).ln()
        x = Decimal(numer.numerator) / Decimal(numer.denominator) * ln
        x = x * Decimal(denom.denominator) / Decimal(denom.numerator)
        return int(x.to_integral_value(rounding="ROUND_CEILING"))


def closed_form_constants(shape, eps: float, delta: float, algo: str) -> dict:
    """Exact constants of the strong/weak algorithm, as Python numbers.

    Rational quantities are carried as fractions of the float inputs and
    rounded once, so every float returned is correctly rounded.
    """
    S, A, H = shape
    e, d = Fraction(eps), Fraction(delta)
    if algo == STRONG:
        c1 = Fraction(8 * A * S * S * H * H) / d
        eps0 = e * d / (1440 * S**3 * H**7 * A)
        eps1 = 5 * c1 * H * H * eps0
        eta0 = 3 * eps1 * H
        w = _ceil_log_ratio(Fraction(S * S), Fraction(8 * H * S * S * A) / d, eps0 * eps0 * eta0)
    elif algo == WEAK:
        c1 = Fraction(4 * A * S * H) / d
        eps0 = e * d / (100 * S * H**5 * A)
        eps1 = 5 * c1 * H * H * eps0
        eta0 = None
        w = _ceil_log_ratio(Fraction(S * S), Fraction(16 * S * S * A * H) / d, eps0 * eps0 * eps1)
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    return {
        "c1": float(c1),
        "eps0": float(eps0),
        "eps1": float(eps1),
        "eta0": None if eta0 is None else float(eta0),
        "w": w,
    }


@dataclass(frozen=True)
class AlgorithmConstants:
    algo: str
    mode: str
    shape: tuple[int, int, int]
    eps: float
    delta: float
    c1: float
    eps0: float
    eps1: float
    eta0: float | None
    w: int
    closed_form: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "algo": self.algo,
            "mode": self.mode,
            "shape": list(self.shape),
            "eps": self.eps,
            "delta": self.delta,
            "c1": self.c1,
            "eps0": self.eps0,
            "eps1": self.eps1,
            "eta0": self.eta0,
            "w": self.w,
            # W in closed-form mode overflows every float budget; keep it as a string
            "closed_form": {k: (str(v) if k == "w" else v) for k, v in self.closed_form.items()},
        }


def derive_constants(
    shape,
    eps: float,
    delta: float,
    algo: str = STRONG,
    mode: str = PAPER,
    overrides: dict | None = None,
    budget: float | None = TOL.sample_budget,
) -> AlgorithmConstants:
    """Constants of the strong or weak learner.

    The "paper" mode uses the closed forms unchanged. Scaled mode starts from the
    same chain of formulas but lets any of ``c1, eps0, eps1, eta0, w`` be
    overridden; later constants are derived from the overridden earlier ones.
    """
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ValueError(f"eps and delta must lie in (0, 1), got eps={eps}, delta={delta}")
    S, A, H = (int(x) for x in shape)
    if min(S, A, H) < 1:
        raise ValueError(f"shape must be positive, got {shape}")
    closed = closed_form_constants((S, A, H), eps, delta, algo)
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(CONSTANT_NAMES)
    if unknown:
        raise ValueError(f"unknown constant overrides {sorted(unknown)}")
    if mode == PAPER:
        if overrides:
            raise ValueError("paper mode takes no overrides")
        vals = dict(closed)
    elif mode == SCALED:
        c1 = float(overrides.get("c1", closed["c1"]))
        eps0 = float(overrides.get("eps0", closed["eps0"]))
        eps1 = float(overrides.get("eps1", 5 * c1 * H * H * eps0))
        eta0 = float(overrides.get("eta0", 3 * eps1 * H)) if algo == STRONG else None
        if "w" in overrides:
            w = int(overrides["w"])
        elif algo == STRONG:
            w = math.ceil(S * S * math.log(8 * H * S * S * A / delta) / (eps0 * eps0 * eta0))
        else:
            w = math.ceil(S * S / (eps0 * eps0 * eps1) * math.log(16 * S * S * A * H / delta))
        vals = {"c1": c1, "eps0": eps0, "eps1": eps1, "eta0": eta0, "w": w}
    else:
        raise ValueError(f"unknown constants mode {mode!r}")
    for name, v in vals.items():
        if v is not None and not v > 0:
            raise ValueError(f"constant {name} must be positive, got {v}")
    if budget is not None and vals["w"] > budget:
        raise BudgetExceeded(f"W={vals['w']} episodes per batch exceeds sample budget {budget:g}")
    return AlgorithmConstants(algo, mode, (S, A, H), eps, delta, closed_form=closed, **vals)


@dataclass
class ExecutionTrace:
    entries: list = field(default_factory=list)  # (Policy, episodes)
    returned: Policy | None = None

    def key(self) -> bytes:
        parts = [p.key() + n.to_bytes(8, "little") for p, n in self.entries]
        parts.append(b"->" + (self.returned.key() if self.returned is not None else b""))
        return b";".join(parts)

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class RollInPolicy:
    """Probe policy for (s, h, a) built from a roll-in policy.

    ``tail`` plays ``a`` at every level from ``h`` on (strong learner);
    ``point`` overrides the action only at (s, h) (weak learner).
    """

    s: int
    h: int
    base: Policy
    mode: str

    def with_action(self, a: int) -> Policy:
        table = np.array(self.base.actions)
        if self.mode == "tail":
            table[self.h :, :] = a
        elif self.mode == "point":
            table[self.h, self.s] = a
        else:
            raise ValueError(f"unknown override mode {self.mode!r}")
        return Policy(table)


@dataclass
class EmpiricalModel:
    """Row estimates from roll-in batches; rows never sampled stay ``None``."""

    num_states: int
    num_actions: int
    horizon: int
    counts: np.ndarray = None  # (H, S, A, S) transition counts
    visits: np.ndarray = None  # (H, S, A) effective samples
    estimated: np.ndarray = None  # (H, S, A) bool
    d_hat: np.ndarray = None  # (H, S) reach estimates, weak learner only

    def __post_init__(self):
        H, S, A = self.horizon, self.num_states, self.num_actions
        self.counts = np.zeros((H, S, A, S), dtype=np.int64)
        self.visits = np.zeros((H, S, A), dtype=np.int64)
        self.estimated = np.zeros((H, S, A), dtype=bool)
        self.d_hat = np.zeros((H, S))

    def record(self, h: int, s: int, a: int, states: np.ndarray, actions: np.ndarray) -> int:
        hit = (states[:, h] == s) & (actions[:, h] == a)
        n = int(hit.sum())
        self.counts[h, s, a] = np.bincount(states[hit, h + 1], minlength=self.num_states)
        self.visits[h, s, a] = n
        self.estimated[h, s, a] = True
        return n

    def row(self, h: int, s: int, a: int) -> np.ndarray | None:
        n = self.visits[h, s, a]
        if n == 0:
            return None
        return self.counts[h, s, a] / n

    def padded_transitions(self, truncated, last_level: int):
        """Transitions over S + 1 states for levels ``<= last_level``.

        ``truncated[h]`` is the set of states routed to the absorbing state on
        level ``h``; levels above ``last_level`` absorb everything. Returns the
        table and the list of required rows that had no samples (those fall
        back to the absorbing state).
        """
        H, S, A = self.horizon, self.num_states, self.num_actions
        p = np.zeros((H, S + 1, A, S + 1))
        p[:, :, :, S] = 1.0
        empty = []
        for h in range(min(last_level, H - 1) + 1):
            for s in range(S):
                if s in truncated[h]:
                    continue
                for a in range(A):
                    row = self.row(h, s, a)
                    if row is None:
                        empty.append((h, s, a))
                        continue
                    p[h, s, a, :] = 0.0
                    p[h, s, a, :S] = row
        return p, empty


def _indicator_rewards(H: int, S1: int, A: int, s: int, h: int) -> np.ndarray:
    r = np.zeros((H, S1, A))
    r[h, s, :] = 1.0
    return r


def next_unreachable(p_tilde: np.ndarray, initial_state: int, level: int, r_trunc: float, num_states: int) -> frozenset:
    """States whose estimated max reach probability on ``level`` is at most ``r_trunc``."""
    d = level_max_occupancy(p_tilde, initial_state, level)[:num_states]
    return frozenset(np.flatnonzero(d <= r_trunc).tolist())


def estimated_profile(model: EmpiricalModel, initial_state: int, r_trunc: float) -> list[frozenset]:
    """Replay the strong learner's truncation on a frozen set of row estimates."""
    S, H = model.num_states, model.horizon
    sets = [frozenset(range(S)) - {initial_state}]
    for h in range(H - 1):
        p, _ = model.padded_transitions(sets + [frozenset()] * (H - len(sets)), h)
        sets.append(next_unreachable(p, initial_state, h + 1, r_trunc, S))
    return sets


def strong_learn(
    env: EpisodicEnv,
    eps: float,
    delta: float,
    rng: np.random.Generator,
    consts: AlgorithmConstants,
    r_action: float | None = None,
    r_trunc: float | None = None,
) -> LearnResult:
    """Layer-by-layer exploration with robust roll-ins; records every executed policy."""
    m = env.mdp
    S, A, H = m.num_states, m.num_actions, m.horizon
    if consts.shape != (S, A, H):
        raise MdpError(f"constants derived for shape {consts.shape}, env has {(S, A, H)}")
    if consts.eta0 is None:
        raise ValueError("strong learner needs constants derived with algo='strong'")
    s0 = m.initial_state
    W = consts.w
    a_lo, a_hi = consts.eps1, 2 * consts.eps1
    t_lo, t_hi = 3 * consts.eta0, 6 * consts.eta0
    if r_action is None:
        r_action = draw_tolerance(rng, a_lo, a_hi)
    if r_trunc is None:
        r_trunc = draw_tolerance(rng, t_lo, t_hi)
    draws = ToleranceDraw(
        r_action,
        r_trunc,
        (a_lo, a_hi) if a_lo < r_action < a_hi else None,
        (t_lo, t_hi) if t_lo < r_trunc < t_hi else None,
    )

    _, r_pad = with_absorbing(m.transitions, m.rewards)
    model = EmpiricalModel(S, A, H)
    unreachable = [frozenset(range(S)) - {s0}]
    rollins = {}
    trace = ExecutionTrace()
    empty_rows = set()
    p_tilde = np.zeros((H, S + 1, A, S + 1))
    p_tilde[:, :, :, S] = 1.0

    for h in range(H - 1):
        for s in range(S):
            if s in unreachable[h]:
                continue
            base = rollins.get((s, h), Policy.constant(H, S + 1, 0))
            probe = RollInPolicy(s, h, base, "tail")
            for a in range(A):
                pi = probe.with_action(a)
                states, actions = env.run_batch(pi, W)
                trace.entries.append((pi.restrict(S), W))
                model.record(h, s, a, states, actions)
        levels = unreachable + [frozenset()] * (H - len(unreachable))
        p_tilde, empty = model.padded_transitions(levels, h)
        empty_rows.update(empty)
        unreachable.append(next_unreachable(p_tilde, s0, h + 1, r_trunc, S))
        for s in range(S):
            if s in unreachable[h + 1]:
                continue
            aux = TabularMdp(p_tilde, _indicator_rewards(H, S + 1, A, s, h + 1), s0)
            rollins[(s, h + 1)] = robust_plan(aux, r_action)

    final = robust_plan(TabularMdp(p_tilde, r_pad, s0), r_action).restrict(S)
    trace.returned = final
    diagnostics = {
        "empty_rows": sorted(empty_rows),
        "fallback": bool(empty_rows),
        "visits": {f"{h},{s},{a}": int(model.visits[h, s, a]) for h, s, a in zip(*np.nonzero(model.estimated))},
        "unreachable": [sorted(u) for u in unreachable],
        "episodes": len(trace.entries) * W,
    }
    return LearnResult(final, draws, trace, diagnostics, model)


# black-box PAC learners for the weak reduction


def hoeffding_samples(shape, eps0: float, delta0: float) -> int:
    """Samples per (s, a, h) for an eps0-optimal plan w.p. 1 - delta0.

    A model within eps0 / (2 H^2) per row keeps every value within eps0 / 2;
    per-entry Hoeffding at that accuracy over |S|, union bound over all entries.
    """
    S, A, H = shape
    acc = eps0 / (2 * H * H)
    return math.ceil(math.log(2 * S * S * A * H / delta0) * S * S / (2 * acc * acc))


def blackbox_reference(env, reward: np.ndarray, eps0: float, delta0: float, rng, n: int | None = None) -> Policy:
    """Plan greedily on a generative-model estimate under the given reward."""
    m = env.mdp
    if reward.shape != m.rewards.shape:
        raise MdpError(f"reward shape {reward.shape} != {m.rewards.shape}")
    n = hoeffding_samples(m.shape, eps0, delta0) if n is None else n
    gen = GenerativeEnv(m, rng)
    m_hat = gen.empirical_model(n).replace(rewards=reward)
    return robust_plan(m_hat, 0.0)


def blackbox_adversarial(env, reward: np.ndarray, eps0: float, delta0: float, rng) -> Policy:
    """A uniformly random eps0-optimal policy, found by enumeration."""
    m = env.mdp.replace(rewards=reward)
    pols = policy_array(m)
    vals = all_policy_values(m, pols)
    good = np.flatnonzero(vals >= backward_dp(m).at_start(m) - eps0)
    return Policy(pols[rng.choice(good)])


def weak_learn(
    env: EpisodicEnv,
    blackbox,
    eps: float,
    delta: float,
    rng: np.random.Generator,
    consts: AlgorithmConstants,
    r_action: float | None = None,
    r_trunc: float | None = None,
) -> LearnResult:
    """Black-box reduction: estimate reach and transitions with roll-ins, truncate, plan robustly."""
    m = env.mdp
    S, A, H = m.num_states, m.num_actions, m.horizon
    if consts.shape != (S, A, H):
        raise MdpError(f"constants derived for shape {consts.shape}, env has {(S, A, H)}")
    s0 = m.initial_state
    W = consts.w
    a_lo, a_hi = consts.eps1, 2 * consts.eps1
    t_lo, t_hi = 2 * consts.eps1, 3 * consts.eps1
    if r_action is None:
        r_action = draw_tolerance(rng, a_lo, a_hi)
    if r_trunc is None:
        r_trunc = draw_tolerance(rng, t_lo, t_hi)
    draws = ToleranceDraw(
        r_action,
        r_trunc,
        (a_lo, a_hi) if a_lo < r_action < a_hi else None,
        (t_lo, t_hi) if t_lo < r_trunc < t_hi else None,
    )
    delta0 = delta / (8 * S * H)

    model = EmpiricalModel(S, A, H)
    for h in range(H - 1):
        for s in range(S):
            reward = np.zeros_like(m.rewards)
            reward[h, s, :] = 1.0
            base = blackbox(env, reward, consts.eps0, delta0, rng)
            states, _ = env.run_batch(base, W)
            model.d_hat[h, s] = float(np.mean(states[:, h] == s))
            probe = RollInPolicy(s, h, base, "point")
            for a in range(A):
                states, actions = env.run_batch(probe.with_action(a), W)
                model.record(h, s, a, states, actions)

    truncated = [frozenset(np.flatnonzero(model.d_hat[h] <= r_trunc).tolist()) for h in range(H - 1)]
    # the last level's transitions never influence values; absorb them
    truncated.append(frozenset(range(S)))
    p, empty = model.padded_transitions(truncated, H - 1)
    _, r_pad = with_absorbing(m.transitions, m.rewards)
    final = robust_plan(TabularMdp(p, r_pad, s0), r_action).restrict(S)
    diagnostics = {
        "empty_rows": empty,
        "fallback": bool(empty),
        "truncated": [sorted(t) for t in truncated[:-1]],
        "d_hat": model.d_hat.tolist(),
    }
    return LearnResult(final, draws, None, diagnostics, model)
