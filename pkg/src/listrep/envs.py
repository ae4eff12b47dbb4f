"""Environment generators and the episodic / generative interaction interfaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TOL
from .mdp import MdpError, Policy, TabularMdp


class BudgetExceeded(RuntimeError):
    """A learner asked for more samples than the configured budget."""


def _sample_rows(rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    # inverse-CDF sampling, one uniform per row
    cdf = np.cumsum(rows, axis=-1)
    out = (u[:, None] >= cdf).sum(axis=-1)
    return np.minimum(out, rows.shape[-1] - 1)


class EpisodicEnv:
    """Online access: episodes of exactly H steps from the fixed initial state."""

    def __init__(self, mdp: TabularMdp, rng: np.random.Generator | int | None = None):
        self.mdp = mdp
        self.rng = np.random.default_rng(rng)
        self.episodes = 0
        self._state = None
        self._level = None

    @property
    def horizon(self) -> int:
        return self.mdp.horizon

    @property
    def num_states(self) -> int:
        return self.mdp.num_states

    @property
    def num_actions(self) -> int:
        return self.mdp.num_actions

    def reset(self) -> int:
        self._state = self.mdp.initial_state
        self._level = 0
        self.episodes += 1
        return self._state

    def step(self, action: int) -> tuple[int, float, int]:
        if self._level is None or self._level >= self.horizon:
            raise RuntimeError("episode finished; call reset()")
        h, s = self._level, self._state
        reward = float(self.mdp.rewards[h, s, action])
        row = self.mdp.transitions[h, s, action]
        nxt = int(_sample_rows(row[None, :], self.rng.random(1))[0])
        self._state, self._level = nxt, h + 1
        return nxt, reward, h + 1

    def run_batch(self, policy: Policy, n: int, budget: int = TOL.sample_budget) -> tuple[np.ndarray, np.ndarray]:
        """Execute ``policy`` for ``n`` episodes at once.

        Returns ``(states, actions)`` arrays of shape ``(n, H)``. Policies with
        extra columns (absorbing state) are accepted; those columns are never
        consulted because the real environment cannot enter them.
        """
        if n > budget:
            raise BudgetExceeded(f"batch of W={n} episodes exceeds sample budget {budget}")
        H, S = self.horizon, self.num_states
        table = policy.actions[:, :S]
        if table.shape != (H, S):
            raise MdpError(f"policy table {policy.actions.shape} incompatible with env (H={H}, S={S})")
        states = np.empty((n, H), dtype=np.int64)
        actions = np.empty((n, H), dtype=np.int64)
        s = np.full(n, self.mdp.initial_state, dtype=np.int64)
        for h in range(H):
            a = table[h, s]
            states[:, h] = s
            actions[:, h] = a
            if h < H - 1:
                s = _sample_rows(self.mdp.transitions[h, s, a], self.rng.random(n))
        self.episodes += n
        return states, actions


class GenerativeEnv:
    """Simulator access: a next-state sample for any (s, a, h)."""

    def __init__(self, mdp: TabularMdp, rng: np.random.Generator | int | None = None):
        self.mdp = mdp
        self.rng = np.random.default_rng(rng)
        self.samples = 0

    @property
    def horizon(self) -> int:
        return self.mdp.horizon

    def sample(self, s: int, a: int, h: int) -> int:
        self.samples += 1
        row = self.mdp.transitions[h, s, a]
        return int(_sample_rows(row[None, :], self.rng.random(1))[0])

    def sample_counts(self, n: int, budget: int = TOL.sample_budget) -> np.ndarray:
        """Draw ``n`` next states for every (h, s, a); returns counts ``(H, S, A, S)``."""
        H, S, A = self.mdp.horizon, self.mdp.num_states, self.mdp.num_actions
        total = n * H * S * A
        if total > budget:
            raise BudgetExceeded(f"N={n} samples per pair ({total} total) exceeds sample budget {budget}")
        self.samples += total
        return self.rng.multinomial(n, self.mdp.transitions)

    def empirical_model(self, n: int, budget: int = TOL.sample_budget) -> TabularMdp:
        counts = self.sample_counts(n, budget)
        return self.mdp.replace(transitions=counts / float(n))


# generators


def make_chain(h: int, delta: float) -> TabularMdp:
    """Near-tie chain with ``h`` decision levels.

    States ``0..h-1`` are the live states (state ``k`` is live on level ``k``),
    state ``h`` is the goal and ``h + 1`` the failure sink. Action 0 advances
    with probability 0.5 + delta, action 1 with 0.5 - delta. The model has
    horizon ``h + 1``: the extra level pays reward 1 for standing on the goal,
    so the value of a policy is the product of its ``h`` success probabilities.
    """
    if h < 1:
        raise MdpError("chain needs at least one level")
    if not 0 <= delta < 0.5:
        raise MdpError(f"delta must lie in [0, 0.5), got {delta}")
    S, A, H = h + 2, 2, h + 1
    goal, fail = h, h + 1
    p = np.zeros((H, S, A, S))
    p[:, :, :, fail] = 1.0
    succ = (0.5 + delta, 0.5 - delta)
    for k in range(h):
        for a in range(A):
            p[k, k, a, fail] = 1.0 - succ[a]
            p[k, k, a, k + 1] = succ[a]
    p[H - 1, goal, :, :] = 0.0
    p[H - 1, goal, :, goal] = 1.0
    r = np.zeros((H, S, A))
    r[H - 1, goal, :] = 1.0
    return TabularMdp(p, r, 0)


def gridworld_cell(n: int, x: int, y: int) -> int:
    return y * n + x


def make_gridworld(n: int, adv: float, base: float = 0.5) -> TabularMdp:
    """N x N grid, actions R (0) and U (1), start (0, 0), goal (N-1, N-1).

    A move succeeds with probability ``base +/- adv`` (sign alternating with the
    parity of x + y, opposite for the two actions); otherwise, or when the move
    would leave the grid, the agent drops into the failure sink (index N*N).
    Horizon is 2(N-1) + 1: 2(N-1) moves and one level paying reward 1 on the
    goal. Cells off their natural level x + y == h also go to the sink.
    """
    if n < 2:
        raise MdpError("grid side must be at least 2")
    if not 0 <= adv < 0.5:
        raise MdpError(f"adv must lie in [0, 0.5), got {adv}")
    if not (0 <= base - adv and base + adv <= 1):
        raise MdpError("success probabilities must lie in [0, 1]")
    S, A, H = n * n + 1, 2, 2 * (n - 1) + 1
    fail = n * n
    goal = gridworld_cell(n, n - 1, n - 1)
    p = np.zeros((H, S, A, S))
    p[:, :, :, fail] = 1.0
    for y in range(n):
        for x in range(n):
            h = x + y
            if h >= H - 1:
                continue
            s = gridworld_cell(n, x, y)
            sign = 1.0 if h % 2 == 0 else -1.0
            prob = (base + sign * adv, base - sign * adv)
            moves = ((x + 1, y), (x, y + 1))
            for a, (nx, ny) in enumerate(moves):
                if nx < n and ny < n:
                    p[h, s, a, fail] = 1.0 - prob[a]
                    p[h, s, a, gridworld_cell(n, nx, ny)] += prob[a]
    p[H - 1, goal, :, :] = 0.0
    p[H - 1, goal, :, goal] = 1.0
    r = np.zeros((H, S, A))
    r[H - 1, goal, :] = 1.0
    return TabularMdp(p, r, gridworld_cell(n, 0, 0))


def make_random(shape: tuple[int, int, int], seed, support: float = 1.0) -> TabularMdp:
    """Random MDP: each row is uniform on the simplex over a random support set."""
    S, A, H = shape
    if not 0 < support <= 1:
        raise MdpError(f"support must lie in (0, 1], got {support}")
    rng = np.random.default_rng(seed)
    k = max(1, int(round(support * S)))
    p = np.zeros((H, S, A, S))
    for h in range(H):
        for s in range(S):
            for a in range(A):
                cols = rng.choice(S, size=k, replace=False)
                p[h, s, a, cols] = rng.dirichlet(np.ones(k))
    r = rng.random((H, S, A))
    return TabularMdp(p, r, 0)


@dataclass(frozen=True)
class BanditLayout:
    """State indexing of the best-arm embedding."""

    z: int
    m: int
    n: int
    depth: int
    tree: dict  # (depth, prefix) -> state index
    start: int = 0

    @property
    def keys(self) -> list[int]:
        base = 1 + len(self.tree)
        return list(range(base, base + self.m))

    @property
    def heads(self) -> int:
        return 1 + len(self.tree) + self.m

    @property
    def tails(self) -> int:
        return self.heads + 1

    @property
    def num_states(self) -> int:
        return self.tails + 1

    @property
    def horizon(self) -> int:
        return self.z + self.depth + 3

    def key_level(self, i: int) -> int:
        # wait i steps at the start, one step to enter, depth steps down the tree
        return i + 1 + self.depth


def bandit_layout(z: int, m: int, n: int) -> BanditLayout:
    if z < 1 or m < 1 or n < 2:
        raise MdpError("need z >= 1, m >= 1 and at least two actions")
    depth = 0
    while n**depth < m:
        depth += 1
    tree = {}
    for k in range(depth):
        for prefix in range(n**k):
            if prefix * n ** (depth - k) < m:
                tree[(k, prefix)] = 1 + len(tree)
    return BanditLayout(z, m, n, depth, tree)


def make_bandit_embedding(means) -> TabularMdp:
    """Embed a z*m*n-armed Bernoulli bandit into an MDP.

    ``means[i, j, l]`` is the mean of arm (i, j, l): wait ``i`` steps at the
    start, route down the n-ary tree to key state ``q_j`` and play ``l``.
    """
    means = np.asarray(means, dtype=float)
    if means.ndim != 3:
        raise MdpError(f"means must have shape (z, m, n), got {means.shape}")
    if np.any(means < 0) or np.any(means > 1):
        raise MdpError("arm means must lie in [0, 1]")
    z, m, n = means.shape
    lay = bandit_layout(z, m, n)
    S, A, H = lay.num_states, n, lay.horizon
    keys, heads, tails = lay.keys, lay.heads, lay.tails
    p = np.zeros((H, S, A, S))

    def child(k, prefix, a):
        nxt = prefix * n + a
        if k + 1 == lay.depth:
            return keys[nxt] if nxt < m else None
        return lay.tree.get((k + 1, nxt))

    root = lay.tree[(0, 0)] if lay.depth > 0 else keys[0]
    for h in range(H):
        p[h, lay.start, 0, root] = 1.0
        p[h, lay.start, 1, lay.start] = 1.0
        p[h, lay.start, 2:, tails] = 1.0
        for (k, prefix), s in lay.tree.items():
            for a in range(A):
                dst = child(k, prefix, a)
                p[h, s, a, s if dst is None else dst] = 1.0
        for j, q in enumerate(keys):
            p[h, q, :, tails] = 1.0
        p[h, heads, :, heads] = 1.0
        p[h, tails, :, tails] = 1.0
    for i in range(z):
        h = lay.key_level(i)
        for j, q in enumerate(keys):
            p[h, q, :, :] = 0.0
            p[h, q, :, heads] = means[i, j]
            p[h, q, :, tails] += 1.0 - means[i, j]
    r = np.zeros((H, S, A))
    r[H - 1, heads, :] = 1.0
    return TabularMdp(p, r, lay.start)


def bandit_arm_policy(lay: BanditLayout, i: int, j: int, l: int) -> Policy:
    """The deterministic policy that pulls arm (i, j, l)."""
    acts = np.zeros((lay.horizon, lay.num_states), dtype=np.int64)
    acts[:, lay.start] = 1
    acts[i, lay.start] = 0
    for (k, prefix), s in lay.tree.items():
        if j // lay.n ** (lay.depth - k) == prefix:
            acts[:, s] = (j // lay.n ** (lay.depth - k - 1)) % lay.n
    acts[:, lay.keys[j]] = l
    return Policy(acts)
