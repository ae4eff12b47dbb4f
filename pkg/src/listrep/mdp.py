"""Finite-horizon tabular MDPs and the dynamic programs over them.

Arrays are level-major: ``transitions[h, s, a, s']`` and ``rewards[h, s, a]``.
Occupancies are returned as ``(H, S)`` arrays indexed ``d[h, s]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TOL

FORMAT_VERSION = 1
# row-sum error attributable to summation round-off alone
ROUNDOFF = 1e-12


class MdpError(ValueError):
    """Raised for malformed models or incompatible inputs."""


class ShapeMismatch(MdpError):
    pass


class RewardMismatch(MdpError):
    pass


def _frozen(x, dtype) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TabularMdp:
    transitions: np.ndarray
    rewards: np.ndarray
    initial_state: int = 0

    def __post_init__(self):
        p = np.array(self.transitions, dtype=np.float64, copy=True)
        r = np.array(self.rewards, dtype=np.float64, copy=True)
        if p.ndim != 4 or p.shape[1] != p.shape[3]:
            raise ShapeMismatch(f"transitions must have shape (H, S, A, S), got {p.shape}")
        if r.shape != p.shape[:3]:
            raise ShapeMismatch(f"rewards shape {r.shape} does not match transitions {p.shape[:3]}")
        if min(p.shape) < 1:
            raise ShapeMismatch("S, A and H must all be positive")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise MdpError("transition probabilities must be finite and non-negative")
        drift = np.abs(p.sum(axis=-1) - 1.0)
        worst = float(drift.max())
        if worst > TOL.row_sum:
            h, s, a = np.unravel_index(int(drift.argmax()), drift.shape)
            raise MdpError(f"row (h={h}, s={s}, a={a}) sums to {p[h, s, a].sum()!r}")
        if worst > ROUNDOFF:
            # only rows that drifted beyond float noise; touching exact-enough
            # rows would make save/load round trips lossy
            bad = drift > ROUNDOFF
            p[bad] = p[bad] / p[bad].sum(axis=-1, keepdims=True)
        if not np.all(np.isfinite(r)) or np.any(r < 0) or np.any(r > 1):
            raise MdpError("rewards must lie in [0, 1]")
        s0 = int(self.initial_state)
        if not 0 <= s0 < p.shape[1]:
            raise MdpError(f"initial_state {s0} out of range for {p.shape[1]} states")
        p.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transitions", p)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "initial_state", s0)

    @property
    def horizon(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.num_states, self.num_actions, self.horizon

    def replace(self, transitions=None, rewards=None, initial_state=None) -> TabularMdp:
        return TabularMdp(
            self.transitions if transitions is None else transitions,
            self.rewards if rewards is None else rewards,
            self.initial_state if initial_state is None else initial_state,
        )

    def __eq__(self, other):
        if not isinstance(other, TabularMdp):
            return NotImplemented
        return (
            self.initial_state == other.initial_state
            and np.array_equal(self.transitions, other.transitions)
            and np.array_equal(self.rewards, other.rewards)
        )

    __hash__ = None

    # serialization

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_VERSION,
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "horizon": self.horizon,
            "initial_state": self.initial_state,
            "rewards": self.rewards.tolist(),
            "transitions": self.transitions.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> TabularMdp:
        if doc.get("format") != FORMAT_VERSION:
            raise MdpError(f"unsupported MDP format {doc.get('format')!r}")
        m = cls(doc["transitions"], doc["rewards"], doc["initial_state"])
        declared = (doc["num_states"], doc["num_actions"], doc["horizon"])
        if declared != m.shape:
            raise ShapeMismatch(f"declared shape {declared} disagrees with tables {m.shape}")
        return m

    def dumps(self) -> str:
        # json writes floats with repr, which round-trips exactly
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> TabularMdp:
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path) -> TabularMdp:
        return cls.loads(Path(path).read_text())


@dataclass(frozen=True, eq=False)
class Policy:
    """Deterministic non-stationary policy, ``actions[h, s]``."""

    actions: np.ndarray

    def __post_init__(self):
        a = np.array(self.actions, dtype=np.int64, copy=True)
        if a.ndim != 2:
            raise ShapeMismatch(f"policy table must be 2-D (H, S), got shape {a.shape}")
        if np.any(a < 0):
            raise MdpError("negative action index in policy")
        a.setflags(write=False)
        object.__setattr__(self, "actions", a)

    @classmethod
    def constant(cls, horizon: int, num_states: int, action: int = 0) -> Policy:
        return cls(np.full((horizon, num_states), action, dtype=np.int64))

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    @property
    def num_states(self) -> int:
        return self.actions.shape[1]

    def restrict(self, num_states: int) -> Policy:
        """Drop trailing state columns (e.g. the absorbing state)."""
        return Policy(self.actions[:, :num_states])

    def key(self) -> bytes:
        return self.actions.shape[0].to_bytes(4, "little") + self.actions.astype("<i8").tobytes()

    def __eq__(self, other):
        if not isinstance(other, Policy):
            return NotImplemented
        return np.array_equal(self.actions, other.actions)

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"Policy({self.actions.tolist()})"

    def check(self, m: TabularMdp) -> None:
        if self.actions.shape != (m.horizon, m.num_states):
            raise ShapeMismatch(
                f"policy shape {self.actions.shape} does not match (H, S) = {(m.horizon, m.num_states)}"
            )
        if np.any(self.actions >= m.num_actions):
            raise MdpError(f"policy uses an action outside [0, {m.num_actions})")


@dataclass(frozen=True)
class ValueTables:
    q: np.ndarray  # (H, S, A)
    v: np.ndarray  # (H, S); v_H = 0 is implicit

    def at_start(self, m: TabularMdp) -> float:
        return float(self.v[0, m.initial_state])


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.states)

    @property
    def ret(self) -> float:
        return float(self.rewards.sum())


def backward_dp(m: TabularMdp) -> ValueTables:
    H, S, A = m.horizon, m.num_states, m.num_actions
    q = np.empty((H, S, A))
    v = np.empty((H, S))
    v_next = np.zeros(S)
    for h in range(H - 1, -1, -1):
        q[h] = m.rewards[h] + m.transitions[h] @ v_next
        v[h] = q[h].max(axis=1)
        v_next = v[h]
    return ValueTables(_frozen(q, float), _frozen(v, float))


def evaluate_policy(m: TabularMdp, pi: Policy) -> ValueTables:
    pi.check(m)
    H, S, A = m.horizon, m.num_states, m.num_actions
    q = np.empty((H, S, A))
    v = np.empty((H, S))
    v_next = np.zeros(S)
    idx = np.arange(S)
    for h in range(H - 1, -1, -1):
        q[h] = m.rewards[h] + m.transitions[h] @ v_next
        v[h] = q[h][idx, pi.actions[h]]
        v_next = v[h]
    return ValueTables(_frozen(q, float), _frozen(v, float))


def policy_value(m: TabularMdp, pi: Policy) -> float:
    return evaluate_policy(m, pi).at_start(m)


def optimal_value(m: TabularMdp) -> float:
    return backward_dp(m).at_start(m)


def policy_occupancy(m: TabularMdp, pi: Policy) -> np.ndarray:
    """``d[h, s] = Pr[s_h = s]`` under ``pi``, by forward recursion."""
    pi.check(m)
    H, S = m.horizon, m.num_states
    d = np.zeros((H, S))
    d[0, m.initial_state] = 1.0
    idx = np.arange(S)
    for h in range(H - 1):
        rows = m.transitions[h][idx, pi.actions[h]]  # (S, S')
        d[h + 1] = d[h] @ rows
    return _frozen(d, float)


def level_max_occupancy(transitions: np.ndarray, initial_state: int, h: int) -> np.ndarray:
    """``max_pi Pr[s_h = s]`` for every ``s``, from raw ``(H, S, A, S)`` tables."""
    S = transitions.shape[1]
    reach = np.eye(S)  # reach[x, target]
    for k in range(h - 1, -1, -1):
        reach = np.einsum("xay,yt->xat", transitions[k], reach).max(axis=1)
    return reach[initial_state]


def max_occupancy(m: TabularMdp) -> np.ndarray:
    """``d*[h, s] = max_pi Pr[s_h = s]``.

    Each entry is the optimal value of the reach-reward MDP whose only reward
    is the indicator of being at ``s`` on level ``h``. All targets of one level
    share the backward sweep, carried as columns of ``reach``.
    """
    H, S = m.horizon, m.num_states
    d = np.zeros((H, S))
    d[0, m.initial_state] = 1.0
    for h in range(1, H):
        d[h] = level_max_occupancy(m.transitions, m.initial_state, h)
    return _frozen(d, float)


def model_distance(m1: TabularMdp, m2: TabularMdp) -> float:
    """Largest per-row L1 distance between the two transition models."""
    if m1.shape != m2.shape:
        raise ShapeMismatch(f"shapes differ: {m1.shape} vs {m2.shape}")
    if not np.array_equal(m1.rewards, m2.rewards):
        raise RewardMismatch("models have different reward tables")
    if m1.initial_state != m2.initial_state:
        raise RewardMismatch("models have different initial states")
    return float(np.abs(m1.transitions - m2.transitions).sum(axis=-1).max())


def rollout(env, pi: Policy, rng: np.random.Generator | None = None) -> Trajectory:
    """Run one episode of ``pi`` in an episodic environment.

    When ``rng`` is given it replaces the environment's randomness first, so
    a fixed seed reproduces the trajectory exactly.
    """
    if pi.horizon != env.horizon:
        raise ShapeMismatch(f"policy horizon {pi.horizon} != env horizon {env.horizon}")
    if rng is not None:
        env.rng = rng
    s = env.reset()
    states, actions, rewards = [], [], []
    for h in range(env.horizon):
        a = int(pi.actions[h, s])
        s_next, r, _ = env.step(a)
        states.append(s)
        actions.append(a)
        rewards.append(r)
        s = s_next
    return Trajectory(np.array(states), np.array(actions), np.array(rewards, dtype=float))
