"""Command-line entry point.

    cofeesim run --config reliable --policy cofee --seeds 1..20 --out results/

Every flag is mirrored by a COFEESIM_* environment variable (e.g.
COFEESIM_CONFIG, COFEESIM_POLICY, COFEESIM_SEEDS, COFEESIM_OUT,
COFEESIM_TRACE, COFEESIM_WORKERS); flags win over the environment.
"""

from __future__ import annotations

import argparse
import os
import sys

from .harness import PRESET_NAMES, load_config, run_experiment
from .model import ConfigError

ENV_PREFIX = "COFEESIM_"


def _env(name, default=None):
    return os.environ.get(ENV_PREFIX + name, default)


def parse_seeds(spec: str) -> list:
    """Seed list syntax: '7' or '1..20' (inclusive) or '1,4,9'."""
    spec = spec.strip()
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError(f"empty seed range {spec!r}")
        return list(range(lo, hi + 1))
    if "," in spec:
        return [int(s) for s in spec.split(",") if s.strip()]
    return [int(spec)]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cofeesim",
        description="Deterministic edge/fog/cloud dataflow scheduling simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment configuration")
    run.add_argument("--config", default=_env("CONFIG"),
                     help=f"preset name ({', '.join(PRESET_NAMES)}) or JSON file path")
    run.add_argument("--policy", default=_env("POLICY", "cofee"),
                     help="cofee | cloud-only | lfp, or comma-separated list")
    run.add_argument("--seed", default=_env("SEED"), help="single seed (shorthand)")
    run.add_argument("--seeds", default=_env("SEEDS"),
                     help="seed list: N, N..M or N,M,K (default: 1)")
    run.add_argument("--out", default=_env("OUT"), help="output directory for metrics.csv")
    run.add_argument("--trace", action="store_true",
                     default=_env("TRACE", "") not in ("", "0", "false"),
                     help="also write per-run event traces (NDJSON)")
    run.add_argument("--workers", type=int, default=int(_env("WORKERS", "1")),
                     help="worker threads for fanning out seeds")
    return parser


def cmd_run(args) -> int:
    if not args.config:
        print("error: --config (or COFEESIM_CONFIG) is required", file=sys.stderr)
        return 2
    try:
        setup = load_config(args.config)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2
    try:
        seeds = parse_seeds(args.seeds or args.seed or "1")
    except ValueError as exc:
        print(f"error: bad seed spec: {exc}", file=sys.stderr)
        return 2
    policies = [p.strip() for p in args.policy.split(",") if p.strip()]
    try:
        reports = run_experiment(setup, policies, seeds,
                                 workers=max(1, args.workers),
                                 out_dir=args.out, keep_trace=args.trace)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 1
    for rep in reports:
        print(f"{rep.policy} seed={rep.seed}: "
              f"pipelines {rep.pipelines_completed}/{rep.pipelines_triggered} ok, "
              f"total cost {rep.total_cost:.4g} c, "
              f"tiers e/f/c {rep.frac_edge:.3f}/{rep.frac_fog:.3f}/{rep.frac_cloud:.3f}")
    if args.out:
        print(f"wrote {args.out}/metrics.csv")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
