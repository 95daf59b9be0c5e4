"""Entry point for the ``mabc`` command."""

from __future__ import annotations

import argparse
import logging
import sys

from . import bench, environments, lqr
from .bench import ConfigError


def _parse_params(items) -> dict:
    params = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"expected key=value, got {item!r}")
        params[key.strip()] = bench._scalar(value)
    return params


def cmd_run(args) -> int:
    cfg = bench.load_config(args.config)
    if args.output:
        cfg.output = args.output
    rows = bench.run_experiment(cfg)
    if not cfg.output:
        bench.write_summary(bench.summarize(rows), sys.stdout)
    else:
        print(f"wrote {len(rows)} rows to {cfg.output}", file=sys.stderr)
    return 0


def cmd_front(args) -> int:
    params = _parse_params(args.params)
    if args.env == bench.DRONE:
        front = lqr.continuous_front(lqr.build_drone(), int(params.get("n_weights", 101)))
    else:
        bench.ExperimentConfig(args.env, ("mabc",), (1,), env_params=params).validate()
        bundle = environments.build(args.env, **params)
        front = bench.cached_front(bundle.momdp, args.cache)
        if args.save_env:
            bundle.save(args.save_env)
    if args.output:
        front.to_csv(args.output)
    else:
        d = front.num_objectives
        print(",".join([f"J_{i + 1}" for i in range(d)] + [f"w_{i + 1}" for i in range(d)]))
        for v, w in zip(front.vertices, front.supporting_weights):
            print(",".join(repr(float(x)) for x in (*v, *w)))
    return 0


def cmd_summarize(args) -> int:
    rows = bench.read_rows(args.csv)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            bench.write_summary(bench.summarize(rows), fh)
    else:
        bench.write_summary(bench.summarize(rows), sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mabc", description="Multi-expert imitation benchmarks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("-o", "--output", help="override the config's output CSV")
    run.set_defaults(func=cmd_run)

    front = sub.add_parser("front", help="compute a reference Pareto front")
    front.add_argument("env", help="environment name (or 'drone')")
    front.add_argument("params", nargs="*", help="builder arguments as key=value")
    front.add_argument("-o", "--output", help="CSV path (default stdout)")
    front.add_argument("--cache", help="front cache directory")
    front.add_argument("--save-env", help="also write <stem>.momdp and <stem>.layout.json")
    front.set_defaults(func=cmd_front)

    summ = sub.add_parser("summarize", help="mean and SEM per learner and sweep value")
    summ.add_argument("csv")
    summ.add_argument("-o", "--output")
    summ.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
