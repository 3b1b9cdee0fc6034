"""Command-line entry point: ``gridchain <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import rng as rngmod
from .billing import RegistryGapError, TariffError, bills_to_csv, compute_bills, load_tariff
from .bloom import analytic_fpr, build_filter, estimate_fpr, size_filter
from .chainfile import ChainParseError, ChainRejected, load_bloom, load_chain, parse_registry
from .config import ConfigError, load_config
from .crypto_identity import random_pseudonym


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def cmd_run(args) -> int:
    from .report import write_report
    from .simulator import run_scenario

    config = load_config(args.config, seed=args.seed)
    report = run_scenario(config)
    write_report(report, args.out, figures=not args.no_figures)
    print(f"blocks accepted={report.blocks_accepted} rejected={report.blocks_rejected} -> {args.out}")
    if report.halted:
        print(f"halted: {report.halted}", file=sys.stderr)
        return 2
    return 0


def cmd_bench_auth(args) -> int:
    from .bench import bench_auth, timing_csv

    rows = bench_auth(args.sizes, args.reps, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(timing_csv(rows))
    if not args.no_figures:
        from .plots import plot_auth_timing

        plot_auth_timing(rows, out.with_suffix(".png"))
    for r in rows:
        print(f"n={r['group_size']:>4}  bloom={r['bloom_ns']:9.1f} ns  naive={r['naive_ns']:9.1f} ns")
    return 0


def cmd_fpr(args) -> int:
    rng = rngmod.fork(args.seed, "fpr-cli")
    params = size_filter(args.capacity, args.target)
    members = [random_pseudonym(64, rng) for _ in range(args.capacity)]
    bloom = build_filter(members, params)
    measured = estimate_fpr(bloom, members, args.trials, rng)
    print(f"theta={params.theta} k={params.k} capacity={args.capacity} target={args.target}")
    print(f"measured={measured:.6f} analytic={analytic_fpr(params.theta, params.k, args.capacity):.6f}")
    return 0


def _load_filter(path):
    return load_bloom(path) if path else None


def cmd_bill(args) -> int:
    bloom = _load_filter(args.filter)
    chain = load_chain(args.chain, bloom)
    tariff = load_tariff(args.tariff)
    registry = parse_registry(Path(args.registry).read_text())
    bills = compute_bills(chain, tariff, registry)
    Path(args.out).write_text(bills_to_csv(bills))
    print(f"{len(bills)} bills, total={sum(b.total for b in bills)} micro-units -> {args.out}")
    return 0


def cmd_validate(args) -> int:
    chain = load_chain(args.chain, _load_filter(args.filter))
    print(f"accept group={chain.group_id} blocks={len(chain)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridchain", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and write the report directory")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench-auth", help="time bloom vs naive pseudonym checks")
    p.add_argument("--sizes", type=_int_list, default=[10, 50, 100, 200])
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_bench_auth)

    p = sub.add_parser("fpr", help="measure a sized filter's false-positive rate")
    p.add_argument("--capacity", type=int, required=True)
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fpr)

    p = sub.add_parser("bill", help="bill users from a chain file")
    p.add_argument("--chain", required=True)
    p.add_argument("--tariff", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--filter", default=None, help="bloom snapshot to check registration against")
    p.set_defaults(func=cmd_bill)

    p = sub.add_parser("validate", help="parse and re-verify a chain file")
    p.add_argument("--chain", required=True)
    p.add_argument("--filter", default=None, help="bloom snapshot to check registration against")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ChainRejected as exc:
        print(f"reject slot={exc.verdict.slot} reason={exc.verdict.reason}", file=sys.stderr)
        return 1
    except (ChainParseError, ConfigError, RegistryGapError, TariffError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
