"""Command-line entry point.

``run --config PATH``, ``bench --problem ... --method ...`` and
``plot --summaries ... --out FILE``. Exit codes: 0 success, 2 configuration
error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import sys
import traceback

from .runner import ConfigError, emit_regret_svg, load_config, parse_config, parse_overrides, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cmabo", description="CMA-guided local Bayesian optimization experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment from a key=value config file")
    run.add_argument("--config", required=True)
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")

    bench = sub.add_parser("bench", help="run one problem/method combination")
    bench.add_argument("--problem", required=True)
    bench.add_argument("--method", required=True)
    bench.add_argument("--budget", type=int, required=True)
    bench.add_argument("--repeats", type=int, default=10)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--n0", type=int, default=20)
    bench.add_argument("--out", default="results")
    bench.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")

    plot = sub.add_parser("plot", help="render summary CSVs as an SVG regret plot")
    plot.add_argument("--summaries", nargs="+", required=True)
    plot.add_argument("--out", required=True)
    plot.add_argument("--title", default="")
    return parser


def _report(seed, record):
    print(f"  seed {seed}: best {record.best_value:.6g} after {record.n_evals} evaluations "
          f"({record.wall_time:.1f} s)", flush=True)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "plot":
            emit_regret_svg(args.summaries, args.out, title=args.title)
            print(f"wrote {args.out}")
            return EXIT_OK
        overrides = parse_overrides(args.set)
        if args.command == "run":
            config = load_config(args.config, overrides)
        else:
            text = (f"problem={args.problem}\nmethod={args.method}\nbudget={args.budget}\n"
                    f"repeats={args.repeats}\nbase_seed={args.seed}\nn0={args.n0}\nout={args.out}\n")
            config = parse_config(text, overrides)
        print(f"{config.method} on {config.problem}: {config.repeats} repeats, budget {config.budget}", flush=True)
        result = run_experiment(config, progress=_report)
        print(f"summary: {result.summary_file}")
        return EXIT_OK
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        traceback.print_exc()
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
