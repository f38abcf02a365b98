"""Command-line entry point: ``spdl run``, ``spdl aggregate``, ``spdl verify-inference``."""

from __future__ import annotations

import argparse
import logging
import sys

import yaml

from spdl import harness
from spdl.envs import ENV_NAMES


def _parse_override(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    return key.strip(), yaml.safe_load(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spdl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one seed and write a per-iteration CSV")
    run.add_argument("--env", choices=ENV_NAMES)
    run.add_argument("--curriculum", choices=harness.CURRICULA)
    run.add_argument("--seed", type=int)
    run.add_argument("--iterations", type=int)
    run.add_argument("--config", help="flat YAML file of ExperimentConfig fields")
    run.add_argument("--set", dest="overrides", action="append", type=_parse_override, default=[],
                     metavar="KEY=VALUE", help="override one config field (repeatable)")
    run.add_argument("--out", required=True)
    run.add_argument("--quiet", action="store_true", help="no per-iteration progress lines")

    agg = sub.add_parser("aggregate", help="summarise per-seed CSVs by curriculum")
    agg.add_argument("--inputs", nargs="+", required=True)
    agg.add_argument("--out", required=True)

    ver = sub.add_parser("verify-inference", help="run the exact inference identity checks")
    ver.add_argument("--seed", type=int, default=0)
    return parser


def cmd_run(args) -> int:
    overrides = dict(args.overrides)
    overrides.update(env=args.env, curriculum=args.curriculum, seed=args.seed,
                     iterations=args.iterations)
    config = harness.load_config(args.config, **overrides)

    def progress(i, params, record):
        if not args.quiet:
            print(f"[{config.curriculum} seed={config.seed}] it {i:4d}  train {record['train_return_mean']:.3f}"
                  f"  eval {record['eval_return_mean']:.3f}  kl {record['kl_to_target']:.4g}"
                  f"  alpha {record['alpha']:.3g}", flush=True)

    result = harness.run_experiment(config, args.out, callback=progress)
    problems = harness.check_invariants(config, harness.read_csv(args.out))
    for p in problems:
        print(f"invariant violated: {p}", file=sys.stderr)
    return 1 if problems or len(result.rows) != config.iterations else 0


def cmd_aggregate(args) -> int:
    rows = harness.aggregate(args.inputs, args.out)
    for r in rows:
        print(f"{r['curriculum']:>8s}  n={r['n_seeds']}  it={r['iteration']}"
              f"  final {r['final_mean']:.3f} ± {r['final_stderr']:.3f}")
    return 0


def cmd_verify(args) -> int:
    from spdl.inference import run_suite

    ok = True
    for name, passed, worst in run_suite(args.seed):
        print(f"{'PASS' if passed else 'FAIL'}  {name}  (worst {worst:.3g})")
        ok &= passed
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "aggregate": cmd_aggregate, "verify-inference": cmd_verify}[args.command]
    try:
        return handler(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
