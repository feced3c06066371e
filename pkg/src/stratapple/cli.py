"""Command line entry point: ``stratapple <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import parse_config
from .errors import ConfigError, ScaleGuardError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SCALE = 3


def _cmd_run(args) -> int:
    from .harness import run_experiment

    cfg = parse_config(args.config)
    art = run_experiment(cfg, out_dir=args.out, threads=args.threads, trace=args.trace)
    final = art.final_regrets()
    print(f"run {art.run_id}: {len(final)} seeds, mean final regret {final.mean():.6g}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .harness import parse_vary, sweep

    cfg = parse_config(args.config)
    key, values = parse_vary(args.vary)
    _, summary = sweep(cfg, key, values, out_dir=args.out, threads=args.threads,
                       plot=not args.no_plot)
    for v, m, s in zip(summary.values, summary.means, summary.stds):
        print(f"{key}={v}: {m:.6g} +- {s:.6g}")
    if summary.slope is not None:
        print(f"log-log slope: {summary.slope:.4f}")
    return EXIT_OK


def _cmd_constants(args) -> int:
    from .evaluation import constants_report

    if not 0 <= args.delta < 1:
        raise ConfigError("delta must lie in [0,1)")
    if args.d < 1:
        raise ConfigError("d must be a positive integer")
    if args.samples < 1000:
        raise ConfigError("samples must be at least 1000")
    report = constants_report(args.d, args.delta, args.samples, np.random.default_rng(args.seed))
    text = json.dumps(asdict(report), indent=2) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    from .harness import oracle_check

    cfg = parse_config(args.config)
    ok = True
    for i in range(cfg.seeds):
        chk = oracle_check(cfg, cfg.base_seed + i, args.grid)
        ok &= chk.holds
        print(f"seed {chk.seed}: oracle {chk.oracle_reward:.6g}  algorithm {chk.algorithm_reward:.6g}  "
              f"stackelberg regret {chk.stackelberg_regret:.6g}  strategic regret "
              f"{chk.strategic_regret:.6g}  slack {chk.slack:.6g}  {'ok' if chk.holds else 'VIOLATED'}")
    return EXIT_OK if ok else 1


def _cmd_demo(args) -> int:
    from .evaluation import inconsistency_over_seeds

    cfg = parse_config(args.config)
    errs = inconsistency_over_seeds(cfg)
    for i, (clean, full) in enumerate(errs):
        print(f"seed {cfg.base_seed + i}: clean-only {clean:.6g}  all-data {full:.6g}")
    med = np.median(errs, axis=0)
    print(f"median: clean-only {med[0]:.6g}  all-data {med[1]:.6g}  ratio {med[1] / med[0]:.3g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stratapple",
                                description="Strategic apple-tasting simulations.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run every seed of one configuration")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--trace", action="store_true", help="also write per-round trace.csv")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help="rerun a configuration over several values of one field")
    s.add_argument("--config", required=True)
    s.add_argument("--vary", required=True, help="KEY=v1,v2,...")
    s.add_argument("--out", required=True)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--no-plot", action="store_true")
    s.set_defaults(func=_cmd_sweep)

    c = sub.add_parser("constants", help="Monte-Carlo c1, c2 and their lower bounds")
    c.add_argument("--d", type=int, required=True)
    c.add_argument("--delta", type=float, required=True)
    c.add_argument("--samples", type=int, default=1_000_000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.set_defaults(func=_cmd_constants)

    o = sub.add_parser("oracle", help="Stackelberg oracle comparison at small scale")
    o.add_argument("--config", required=True)
    o.add_argument("--grid", type=int, default=720)
    o.set_defaults(func=_cmd_oracle)

    dm = sub.add_parser("demo-inconsistency", help="clean-only versus all-data OLS")
    dm.add_argument("--config", required=True)
    dm.set_defaults(func=_cmd_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScaleGuardError as exc:
        print(f"scale guard: {exc}", file=sys.stderr)
        return EXIT_SCALE


if __name__ == "__main__":
    sys.exit(main())
