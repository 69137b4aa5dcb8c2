"""Command-line entry point.

    cfcayley propagate   --config run.toml --out results/ [--seed N] [--workers N]
    cfcayley optimize    ...
    cfcayley order-study ...
    cfcayley bench       ...

Exit status: 0 on success, 1 on invalid configuration or usage, 2 when the
numerics fail.
"""

import argparse
import logging
import sys

from .errors import NumericalError
from .output import OutputError

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2

SUBCOMMANDS = {
    "propagate": ("propagate", "forward propagation with a fixed control"),
    "optimize": ("optimize", "Krotov state transfer, one run per scheme"),
    "order-study": ("order_study", "convergence order against a fine-step reference"),
    "bench": ("bench", "CaylPol vs RKMK4 timing over a list of g values"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="cfcayley", description="Cayley-type propagators and Krotov optimization.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, text) in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="TOML configuration file (defaults are used if omitted)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="random seed (overrides config)")
        p.add_argument("--workers", type=int, default=None,
                       help="concurrent runs for scheme or g sweeps (overrides config)")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    # imported here so that --help stays fast
    from .config import load_config
    from .experiments import run_experiment

    try:
        cfg = load_config(args.config, kind=SUBCOMMANDS[args.command][0],
                          overrides={"seed": args.seed, "workers": args.workers})
    except ValueError as exc:
        print(f"cfcayley: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        bundle = run_experiment(cfg, args.out)
    except (ValueError, OutputError) as exc:
        print(f"cfcayley: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"cfcayley: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"wrote {len(bundle.files)} files to {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
