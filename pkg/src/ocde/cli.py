"""Command-line entry point: ``ocde {toy,bench,fit,predict}``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ocde", description="Odds conditional density estimation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("toy", "fit the circle toy problem and dump density curves"),
                       ("bench", "run the Raw and Debiased benchmark on CSV files"),
                       ("fit", "fit a model on a CSV and save it"),
                       ("predict", "write density curves for query rows")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="flat key=value configuration file")
        for key, kind in harness.RunConfig.keys().items():
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None,
                           metavar=kind.__name__.upper())
        if name == "bench":
            p.add_argument("csv", nargs="+", help="dataset CSV files")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    overrides = {k: v for k, v in vars(args).items()
                 if k in harness.RunConfig.keys() and v is not None}
    try:
        cfg = harness.resolve_config(args.config, overrides)
        if args.command == "toy":
            result = harness.cmd_toy(cfg)
            print(result["report"])
        elif args.command == "bench":
            print(harness.cmd_bench(cfg, args.csv))
        elif args.command == "fit":
            print(harness.cmd_fit(cfg))
        else:
            print(harness.cmd_predict(cfg))
    except Exception as exc:
        print(f"error: {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
