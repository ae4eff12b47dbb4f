"""Replicability measurement: repeated seeded runs, canonical keys, list statistics."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .envs import (
    BudgetExceeded,
    EpisodicEnv,
    GenerativeEnv,
    make_bandit_embedding,
    make_chain,
    make_gridworld,
    make_random,
)
from .learners import (
    PAPER,
    SCALED,
    STRONG,
    WEAK,
    blackbox_adversarial,
    blackbox_reference,
    derive_constants,
    strong_learn,
    weak_learn,
)
from .mdp import MdpError, Policy, TabularMdp, backward_dp, policy_value
from .planner import generative_learn, robust_plan

FULL_TABLE = "full-table"
ROLLOUT = "rollout"
CANONICAL_MODES = (FULL_TABLE, ROLLOUT)

ALGOS = ("robust-plan", "greedy-baseline", "generative", "weak", "strong")
QUANTILES = (0.5, 0.9, 1.0)


# canonical keys


def _sinks(m: TabularMdp) -> np.ndarray:
    """States that loop on themselves under every action at every level."""
    S = m.num_states
    idx = np.arange(S)
    stay = m.transitions[:, idx, :, idx]  # (S, H, A)
    return np.all(stay == 1.0, axis=(1, 2))


def rollout_actions(pi: Policy, m: TabularMdp) -> list[int]:
    """Action sequence along the most likely non-sink path from the start state.

    The path stops once every successor is a sink, which for the grid and
    chain environments is exactly the start-to-goal walk.
    """
    sinks = _sinks(m)
    s, seq = m.initial_state, []
    for h in range(m.horizon - 1):
        a = int(pi.actions[h, s])
        seq.append(a)
        row = np.where(sinks, -1.0, m.transitions[h, s, a])
        if row.max() <= 0:
            break
        s = int(row.argmax())
    return seq


def canonical_policy(pi: Policy, relevance: str = FULL_TABLE, mdp: TabularMdp | None = None) -> str:
    """String key for a policy.

    ``full-table`` writes the whole (H, S) table, dropping columns beyond the
    model's state count (the absorbing state); ``rollout`` writes the action
    sequence realized under the most likely transitions of ``mdp``.
    """
    if relevance == FULL_TABLE:
        table = pi.actions if mdp is None else pi.actions[:, : mdp.num_states]
        return "|".join(",".join(str(int(a)) for a in row) for row in table)
    if relevance == ROLLOUT:
        if mdp is None:
            raise ValueError("rollout canonicalization needs the model")
        return ",".join(str(a) for a in rollout_actions(pi.restrict(mdp.num_states), mdp))
    raise ValueError(f"unknown canonicalization {relevance!r}")


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:24]


# specs


@dataclass(frozen=True)
class EnvSpec:
    """A builtin generator with parameters, or an MDP file path."""

    name: str
    params: dict = field(default_factory=dict)

    def build(self) -> TabularMdp:
        p = dict(self.params)
        if self.name == "chain":
            return make_chain(int(p.get("h", 8)), float(p.get("delta", 0.02)))
        if self.name == "gridworld":
            return make_gridworld(int(p.get("n", 5)), float(p.get("adv", 0.02)))
        if self.name == "random":
            shape = (int(p.get("s", 4)), int(p.get("a", 2)), int(p.get("h", 3)))
            return make_random(shape, int(p.get("seed", 0)), float(p.get("support", 1.0)))
        if self.name == "bandit":
            return make_bandit_embedding(np.asarray(p["means"], dtype=float))
        if self.name == "file":
            return TabularMdp.load(p["path"])
        raise MdpError(f"unknown environment {self.name!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, "params": dict(self.params)}


@dataclass(frozen=True)
class LearnerSpec:
    algo: str
    r_action: float | None = None
    n_per_pair: int | None = None  # generative sample size per (s, a, h)
    eps: float = 0.1
    delta: float = 0.1
    mode: str = SCALED
    overrides: dict = field(default_factory=dict)
    blackbox: str = "reference"
    blackbox_n: int | None = None

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"unknown algorithm {self.algo!r}; choose from {ALGOS}")
        if self.mode not in (PAPER, SCALED):
            raise ValueError(f"unknown constants mode {self.mode!r}")
        if self.blackbox not in ("reference", "adversarial"):
            raise ValueError(f"unknown black-box learner {self.blackbox!r}")
        if self.r_action is not None and self.r_action < 0:
            raise ValueError("r_action must be non-negative")
        if self.algo == "robust-plan" and self.r_action is None:
            raise ValueError("robust-plan needs r_action")
        if self.algo in ("robust-plan", "greedy-baseline") and self.n_per_pair is None:
            raise ValueError(f"{self.algo} needs n_per_pair")
        if self.n_per_pair is not None and self.n_per_pair < 1:
            raise ValueError("n_per_pair must be positive")

    def with_r(self, r: float | None) -> LearnerSpec:
        d = asdict(self)
        d["r_action"] = r
        return LearnerSpec(**d)

    def constants(self, shape):
        if self.algo not in (STRONG, WEAK):
            return None
        return derive_constants(shape, self.eps, self.delta, self.algo, self.mode, self.overrides)

    def to_dict(self) -> dict:
        return asdict(self)


# single runs


@dataclass
class RunRecord:
    index: int
    policy_key: str | None = None
    trace_key: str | None = None
    value: float | None = None
    error: str | None = None
    draws: dict | None = None
    flags: dict = field(default_factory=dict)


def child_seed(master: int, cell: int, index: int) -> np.random.SeedSequence:
    """Independent stream for run ``index`` of sweep cell ``cell``."""
    return np.random.SeedSequence(int(master), spawn_key=(int(cell), int(index)))


def _execute(spec: LearnerSpec, m: TabularMdp, consts, rng: np.random.Generator):
    """Run one learner; returns (policy, trace key or None, draws, flags)."""
    algo = spec.algo
    if algo in ("robust-plan", "greedy-baseline"):
        r = 0.0 if algo == "greedy-baseline" else spec.r_action
        m_hat = GenerativeEnv(m, rng).empirical_model(spec.n_per_pair)
        return robust_plan(m_hat, r), None, {"r_action": r}, {}
    if algo == "generative":
        res = generative_learn(GenerativeEnv(m, rng), spec.eps, spec.delta, rng, n=spec.n_per_pair)
        return res.policy, None, res.draws.to_dict(), dict(res.diagnostics)
    env = EpisodicEnv(m, rng)
    if algo == STRONG:
        res = strong_learn(env, spec.eps, spec.delta, rng, consts, r_action=spec.r_action)
        trace = _digest(res.trace.key())
        return res.policy, trace, res.draws.to_dict(), {"fallback": res.diagnostics["fallback"]}
    if spec.blackbox == "adversarial":
        bb = blackbox_adversarial
    else:

        def bb(env_, reward, eps0, delta0, rng_):
            return blackbox_reference(env_, reward, eps0, delta0, rng_, n=spec.blackbox_n)

    res = weak_learn(env, bb, spec.eps, spec.delta, rng, consts, r_action=spec.r_action)
    return res.policy, None, res.draws.to_dict(), {"fallback": res.diagnostics["fallback"]}


def _run_one(job) -> RunRecord:
    spec, m, consts, relevance, master, cell, index = job
    rng = np.random.default_rng(child_seed(master, cell, index))
    rec = RunRecord(index)
    try:
        pi, trace, draws, flags = _execute(spec, m, consts, rng)
    except (BudgetExceeded, MdpError, ValueError) as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
        return rec
    rec.policy_key = canonical_policy(pi, relevance, m)
    # strong learner: the trace is the executed sequence plus the returned policy;
    # planners: the realized start-to-goal action sequence
    rec.trace_key = trace if trace is not None else canonical_policy(pi, ROLLOUT, m)
    rec.value = policy_value(m, pi.restrict(m.num_states))
    rec.draws = draws
    rec.flags = flags
    return rec


# statistics


def k_quantile(counts: dict, q: float) -> int:
    """Smallest k such that the k most frequent keys cover a q-fraction of runs.

    Keys are taken by descending frequency, ties by key order.
    """
    if not 0 < q <= 1:
        raise ValueError(f"quantile must lie in (0, 1], got {q}")
    total = sum(counts.values())
    if total == 0:
        return 0
    acc = 0
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    for k, (_, c) in enumerate(ordered, start=1):
        acc += c
        # integer comparison avoids float round-off at exact fractions
        if acc * 10**9 >= round(q * 10**9) * total:
            return k
    return len(ordered)


def _census(keys) -> dict:
    out: dict = {}
    for k in keys:
        out[k] = out.get(k, 0) + 1
    return dict(sorted(out.items()))


@dataclass
class ReplicabilityReport:
    r_value: float | None
    runs: int
    failures: int
    policy_counts: dict
    trace_counts: dict
    values: list
    optimal_value: float
    relevance: str
    config: dict
    errors: list = field(default_factory=list)

    @property
    def distinct_policies(self) -> int:
        return len(self.policy_counts)

    @property
    def distinct_traces(self) -> int:
        return len(self.trace_counts)

    def k_quantile(self, q: float, of: str = "trace") -> int:
        return k_quantile(self.trace_counts if of == "trace" else self.policy_counts, q)

    def top1_coverage(self, of: str = "trace") -> float:
        counts = self.trace_counts if of == "trace" else self.policy_counts
        return max(counts.values()) / self.runs if self.runs else 0.0

    def eps_optimal_fraction(self, eps: float) -> float:
        if not self.runs:
            return 0.0
        return sum(self.optimal_value - v <= eps for v in self.values) / self.runs

    def row(self) -> dict:
        return {
            "r_value": self.r_value,
            "runs": self.runs,
            "distinct_policies": self.distinct_policies,
            "distinct_traces": self.distinct_traces,
            "k50": self.k_quantile(0.5),
            "k90": self.k_quantile(0.9),
            "top1": round(self.top1_coverage(), 6),
        }

    def to_dict(self) -> dict:
        return {
            **self.row(),
            "failures": self.failures,
            "errors": self.errors,
            "canonicalization": self.relevance,
            "k_quantile": {
                "policy": {str(q): self.k_quantile(q, "policy") for q in QUANTILES},
                "trace": {str(q): self.k_quantile(q, "trace") for q in QUANTILES},
            },
            "top1_policy": round(self.top1_coverage("policy"), 6),
            "optimal_value": self.optimal_value,
            "mean_value": float(np.mean(self.values)) if self.values else None,
            "policy_frequencies": self.policy_counts,
            "trace_frequencies": self.trace_counts,
            "config": self.config,
        }


def _map(jobs: list, n_jobs: int):
    if n_jobs <= 1 or len(jobs) < 2:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * n_jobs))))


def _report(spec, env, m, consts, relevance, seed, cell, records) -> ReplicabilityReport:
    records = sorted(records, key=lambda r: r.index)
    ok = [r for r in records if r.error is None]
    config = {
        "learner": spec.to_dict(),
        "env": env.to_dict(),
        "master_seed": int(seed),
        "cell": cell,
        "constants": consts.to_dict() if consts is not None else None,
        "draws": [r.draws for r in ok],
        "fallback_runs": sum(bool(r.flags.get("fallback")) for r in ok),
    }
    return ReplicabilityReport(
        r_value=0.0 if spec.algo == "greedy-baseline" else spec.r_action,
        runs=len(ok),
        failures=len(records) - len(ok),
        policy_counts=_census(r.policy_key for r in ok),
        trace_counts=_census(r.trace_key for r in ok),
        values=[r.value for r in ok],
        optimal_value=backward_dp(m).at_start(m),
        relevance=relevance,
        config=config,
        errors=[{"index": r.index, "error": r.error} for r in records if r.error is not None],
    )


def run_replicated(
    learner: LearnerSpec,
    env: EnvSpec,
    runs: int,
    seed: int,
    relevance: str = FULL_TABLE,
    jobs: int = 1,
    cell: int = 0,
    mdp: TabularMdp | None = None,
) -> ReplicabilityReport:
    """Run ``learner`` ``runs`` times on fresh child seeds and census the outputs."""
    if runs < 1:
        raise ValueError("need at least one run")
    if relevance not in CANONICAL_MODES:
        raise ValueError(f"unknown canonicalization {relevance!r}")
    m = env.build() if mdp is None else mdp
    consts = learner.constants(m.shape)
    jobs_ = [(learner, m, consts, relevance, seed, cell, i) for i in range(runs)]
    return _report(learner, env, m, consts, relevance, seed, cell, _map(jobs_, jobs))


def sweep(
    learner: LearnerSpec,
    env: EnvSpec,
    r_values,
    runs: int,
    seed: int,
    relevance: str = FULL_TABLE,
    jobs: int = 1,
) -> list[ReplicabilityReport]:
    """One census per tolerance; cell ``i`` gets its own family of child seeds."""
    r_values = list(r_values)
    if not r_values:
        raise ValueError("empty r grid")
    m = env.build()
    return [
        run_replicated(learner.with_r(r), env, runs, seed, relevance, jobs, cell=i, mdp=m)
        for i, r in enumerate(r_values)
    ]


# report files

CSV_COLUMNS = ("r_value", "runs", "distinct_policies", "distinct_traces", "k50", "k90", "top1")


def write_csv(reports, path) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for rep in reports:
        row = rep.row()
        lines.append(",".join("" if row[c] is None else repr(row[c]) for c in CSV_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(reports, path, extra: dict | None = None) -> None:
    doc = {"reports": [r.to_dict() for r in reports]}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def write_svg(reports, path, width: int = 480, height: int = 300) -> None:
    """Line chart of distinct policies and traces against the tolerance grid."""
    pad = 48
    xs = [i for i, _ in enumerate(reports)]
    ymax = max([1] + [max(r.distinct_policies, r.distinct_traces) for r in reports])
    span = max(1, len(xs) - 1)

    def px(i):
        return pad + (width - 2 * pad) * i / span

    def py(v):
        return height - pad - (height - 2 * pad) * v / ymax

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{pad - 6}" y="{pad}" text-anchor="end">{ymax}</text>',
        f'<text x="{pad - 6}" y="{height - pad}" text-anchor="end">0</text>',
        f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle">r_action</text>',
    ]
    for i, rep in enumerate(reports):
        out.append(f'<text x="{px(i):.1f}" y="{height - pad + 14}" text-anchor="middle">{rep.r_value}</text>')
    for attr, color in (("distinct_policies", "steelblue"), ("distinct_traces", "darkorange")):
        pts = " ".join(f"{px(i):.1f},{py(getattr(r, attr)):.1f}" for i, r in enumerate(reports))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
    out.append(f'<text x="{width - pad}" y="{pad - 20}" text-anchor="end" fill="steelblue">policies</text>')
    out.append(f'<text x="{width - pad}" y="{pad - 8}" text-anchor="end" fill="darkorange">traces</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def default_jobs() -> int:
    return os.cpu_count() or 1
