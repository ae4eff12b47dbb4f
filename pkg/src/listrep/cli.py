"""Command-line front end: generate environments, run censuses, plan, verify."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__, harness, verify
from .config import TOL
from .envs import BudgetExceeded
from .learners import CONSTANT_NAMES
from .mdp import MdpError, TabularMdp
from .planner import generative_sample_size, robust_plan

EXIT_OK, EXIT_INVALID, EXIT_BUDGET, EXIT_VERIFY = 0, 2, 3, 4
OUTPUT_ENV = "LISTREP_OUTPUT_ROOT"
ENVS = ("chain", "gridworld", "random", "bandit", "file")

# samples per (s, a, h) when --n-per-pair is not given
DEFAULT_N = {"gridworld": 100}
DEFAULT_N_OTHER = 40


class UsageError(ValueError):
    pass


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be a 64-bit unsigned integer, got {text}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _grid(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _override(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    if not sep or name not in CONSTANT_NAMES:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE with NAME in {CONSTANT_NAMES}, got {text!r}")
    return name, (int(value) if name == "w" else float(value))


# environment options shared by every subcommand that needs a model


def _add_env_args(p: argparse.ArgumentParser, positional: bool = False) -> None:
    if positional:
        p.add_argument("env", choices=ENVS[:-1])
    else:
        p.add_argument("--env", choices=ENVS, default="random", help="builtin environment or 'file'")
        p.add_argument("--mdp", help="MDP file (with --env file)")
    p.add_argument("--h", type=_positive_int, help="chain levels / random horizon")
    p.add_argument("--delta", dest="env_delta", type=float, help="chain advantage (default 0.02)")
    p.add_argument("--n", type=int, help="grid side (default 5)")
    p.add_argument("--adv", type=float, help="grid advantage (default 0.02)")
    p.add_argument("--s", type=_positive_int, help="random: number of states")
    p.add_argument("--a", type=_positive_int, help="random: number of actions")
    p.add_argument("--support", type=float, help="random: support fraction")
    p.add_argument("--env-seed", type=_seed, help="random: generator seed")
    p.add_argument("--means", help="bandit: JSON array of shape (z, m, n), or a path to one")


def env_spec(args) -> harness.EnvSpec:
    name = args.env
    p = {}
    if name == "chain":
        p = {"h": args.h or 8, "delta": 0.02 if args.env_delta is None else args.env_delta}
    elif name == "gridworld":
        p = {"n": 5 if args.n is None else args.n, "adv": 0.02 if args.adv is None else args.adv}
    elif name == "random":
        p = {
            "s": args.s or 4,
            "a": args.a or 2,
            "h": args.h or 3,
            "seed": args.env_seed or 0,
            "support": 1.0 if args.support is None else args.support,
        }
    elif name == "bandit":
        if not args.means:
            raise UsageError("bandit environment needs --means")
        text = Path(args.means).read_text() if os.path.exists(args.means) else args.means
        p = {"means": json.loads(text)}
    elif name == "file":
        if not getattr(args, "mdp", None):
            raise UsageError("--env file needs --mdp PATH")
        p = {"path": args.mdp}
    return harness.EnvSpec(name, p)


# run configuration


@dataclass
class RunConfig:
    env: dict
    algo: str
    mode: str = "scaled"
    overrides: dict = field(default_factory=dict)
    eps: float = 0.1
    delta: float = 0.1
    r_grid: list | None = None
    n_per_pair: int | None = None
    blackbox: str = "reference"
    blackbox_n: int | None = None
    canonical: str = harness.FULL_TABLE
    runs: int = 100
    seed: int = 0
    out: str | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise UsageError(f"unknown configuration keys {sorted(unknown)}")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not isinstance(self.env, dict) or "name" not in self.env:
            raise UsageError("env must be a mapping with a 'name'")
        if self.algo not in harness.ALGOS:
            raise UsageError(f"unknown algorithm {self.algo!r}")
        if self.runs < 1:
            raise UsageError("runs must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise UsageError("seed must be a 64-bit unsigned integer")
        if self.canonical not in harness.CANONICAL_MODES:
            raise UsageError(f"unknown canonicalization {self.canonical!r}")
        if self.r_grid is not None and not self.r_grid:
            raise UsageError("empty r grid")
        if self.r_grid and self.algo in ("generative", "greedy-baseline"):
            raise UsageError(f"{self.algo} draws or fixes its own tolerance; drop --r-action/--r-grid")
        if self.algo == "robust-plan" and not self.r_grid:
            raise UsageError("robust-plan needs --r-action or --r-grid")
        if any(r < 0 for r in self.r_grid or ()):
            raise UsageError("tolerances must be non-negative")

    def env_spec(self) -> harness.EnvSpec:
        return harness.EnvSpec(self.env["name"], dict(self.env.get("params", {})))

    def learner(self) -> harness.LearnerSpec:
        n = self.n_per_pair
        if n is None and self.algo in ("robust-plan", "greedy-baseline"):
            n = DEFAULT_N.get(self.env["name"], DEFAULT_N_OTHER)
        return harness.LearnerSpec(
            self.algo,
            r_action=self.r_grid[0] if self.r_grid else None,
            n_per_pair=n,
            eps=self.eps,
            delta=self.delta,
            mode=self.mode,
            overrides=dict(self.overrides),
            blackbox=self.blackbox,
            blackbox_n=self.blackbox_n,
        )


def _config_from_args(args) -> RunConfig:
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        return RunConfig.from_dict(doc)
    grid = args.r_grid if args.r_grid is not None else ([args.r_action] if args.r_action is not None else None)
    cfg = RunConfig(
        env=env_spec(args).to_dict(),
        algo=args.algo,
        mode=args.mode,
        overrides=dict(args.set or []),
        eps=args.eps,
        delta=args.delta_conf,
        r_grid=grid,
        n_per_pair=args.n_per_pair,
        blackbox=args.blackbox,
        blackbox_n=args.blackbox_n,
        canonical=args.canonical,
        runs=args.runs,
        seed=args.seed,
        out=args.out,
    )
    cfg.validate()
    return cfg


def _output_dir(root: str | None, seed: int) -> Path:
    base = Path(root or os.environ.get(OUTPUT_ENV) or "runs")
    stamp = time.strftime("%Y%m%dT%H%M%S")
    out = base / f"{stamp}-seed{seed}"
    k = 1
    while out.exists():
        out = base / f"{stamp}-seed{seed}-{k}"
        k += 1
    out.mkdir(parents=True)
    return out


# commands


def cmd_gen_env(args) -> int:
    m = env_spec(args).build()
    text = m.dumps() + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    learner, env = cfg.learner(), cfg.env_spec()
    m = env.build()
    if learner.algo == "generative" and learner.n_per_pair is None:
        n = generative_sample_size(m.shape, learner.eps, learner.delta)
        S, A, H = m.shape
        if n * S * A * H > TOL.sample_budget:
            raise BudgetExceeded(f"generative learner needs N={n} samples per pair; budget is {TOL.sample_budget:g}")
    # fails fast with the name of the offending constant
    learner.constants(m.shape)
    jobs = args.jobs or harness.default_jobs()
    grid = cfg.r_grid or [None]
    reports = [
        harness.run_replicated(learner.with_r(r) if cfg.r_grid else learner, env, cfg.runs, cfg.seed, cfg.canonical, jobs, cell=i, mdp=m)
        for i, r in enumerate(grid)
    ]
    out = _output_dir(cfg.out, cfg.seed)
    manifest = {"version": __version__, "config": asdict(cfg), "files": ["report.csv", "report.json", "chart.svg"]}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    harness.write_csv(reports, out / "report.csv")
    harness.write_json(reports, out / "report.json")
    harness.write_svg(reports, out / "chart.svg")
    for rep in reports:
        row = rep.row()
        print(", ".join(f"{k}={v}" for k, v in row.items()) + (f", failures={rep.failures}" if rep.failures else ""))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_plan(args) -> int:
    m = TabularMdp.load(args.mdp) if args.env == "file" else env_spec(args).build()
    pi = robust_plan(m, args.r_action)
    doc = {"r_action": args.r_action, "policy": pi.actions.tolist(), "key": harness.canonical_policy(pi, harness.FULL_TABLE, m)}
    print(json.dumps(doc))
    return EXIT_OK


def cmd_verify(args) -> int:
    only = [n for chunk in (args.only or []) for n in chunk.split(",") if n]
    results = verify.run_checks(only or None, args.instances, args.seed)
    for res in results:
        print(res.line())
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="listrep", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-env", help="write a builtin environment as an MDP file")
    _add_env_args(g, positional=True)
    g.add_argument("--out", help="output file (default: stdout)")
    g.set_defaults(func=cmd_gen_env)

    r = sub.add_parser("run", help="replicate a learner and census its outputs")
    _add_env_args(r)
    r.add_argument("--config", help="RunConfig JSON file; replaces the flags below")
    r.add_argument("--algo", choices=harness.ALGOS, default="robust-plan")
    r.add_argument("--mode", choices=("paper", "scaled"), default="scaled", help="constants mode")
    r.add_argument("--set", action="append", type=_override, metavar="NAME=VALUE", help="override a scaled constant")
    r.add_argument("--eps", type=float, default=0.1)
    r.add_argument("--delta-conf", type=float, default=0.1, help="failure probability of the learner")
    r.add_argument("--r-action", type=float, help="fixed tolerance")
    r.add_argument("--r-grid", type=_grid, help="comma-separated tolerances, one census each")
    r.add_argument("--n-per-pair", type=_positive_int, help="generative samples per (s, a, h)")
    r.add_argument("--blackbox", choices=("reference", "adversarial"), default="reference")
    r.add_argument("--blackbox-n", type=_positive_int, help="samples per pair for the reference black box")
    r.add_argument("--canonical", choices=harness.CANONICAL_MODES, default=harness.FULL_TABLE)
    r.add_argument("--runs", type=_positive_int, default=100)
    r.add_argument("--seed", type=_seed, default=0, help="master seed")
    r.add_argument("--jobs", type=_positive_int, help="worker processes (default: logical cores)")
    r.add_argument("--out", help=f"output root (default: ${OUTPUT_ENV} or ./runs)")
    r.set_defaults(func=cmd_run)

    p = sub.add_parser("plan", help="run the tolerance planner on a known model")
    _add_env_args(p)
    p.add_argument("--r-action", type=float, required=True)
    p.set_defaults(func=cmd_plan)

    v = sub.add_parser("verify", help="run the property battery")
    v.add_argument("--only", action="append", help=f"comma-separated subset of: {', '.join(verify.CHECKS)}")
    v.add_argument("--instances", type=_positive_int, help="instances per check (default: per-check)")
    v.add_argument("--seed", type=_seed, default=0)
    v.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BudgetExceeded as exc:
        print(f"budget error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (UsageError, MdpError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
