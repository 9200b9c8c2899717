"""Command-line entry point: ``palaeovar {assimilate,tune,twin,validate}``."""
from __future__ import annotations

import argparse
import logging
import sys
import traceback

from .config import ConfigError, RunConfig
from .ingest import IngestError
from . import pipeline

EXIT_OK, EXIT_USAGE, EXIT_INGEST, EXIT_NONCONVERGED, EXIT_INTERNAL = 0, 2, 3, 4, 5

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="YAML run configuration or a manifest.json")
    common.add_argument("--output", metavar="DIR", help="output directory (overrides config and environment)")
    common.add_argument("--seed", type=int, metavar="N", help="random seed (twin runs, synthetic fixtures)")
    common.add_argument("--log-level", choices=sorted(LOG_LEVELS), default="warn")

    p = _Parser(prog="palaeovar", description="Variational palaeoclimate reconstruction.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("assimilate", parents=[common], help="run the full analysis")
    t = sub.add_parser("tune", parents=[common], help="length-scale studies")
    t.add_argument("--study", choices=["lt", "ls", "both"], default="both")
    sub.add_parser("twin", parents=[common], help="synthetic-truth verification")
    sub.add_parser("validate", parents=[common], help="ingestion checks only")
    return p


def _error(kind, exc):
    print(f"error[{kind}]: {exc}", file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=LOG_LEVELS[args.log_level], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        cfg = RunConfig.load(args.config).with_overrides(args.output, args.seed)
        if args.command == "assimilate":
            out = pipeline.assimilate(cfg)
        elif args.command == "tune":
            which = ("lt", "ls") if args.study == "both" else (args.study,)
            out = pipeline.tune(cfg, which=which)
        elif args.command == "twin":
            out = pipeline.twin(cfg)
        else:
            out = pipeline.validate(cfg)
        outdir = pipeline.write_bundle(cfg, out)
    except ConfigError as exc:
        _error("config", exc)
        return EXIT_USAGE
    except IngestError as exc:
        _error("ingest", exc)
        return EXIT_INGEST
    except Exception as exc:  # noqa: BLE001 - last-resort report for the user
        _error("internal", exc)
        if args.log_level == "debug":
            traceback.print_exc()
        return EXIT_INTERNAL
    print(f"{args.command}: wrote {outdir}")
    if not out.converged:
        print(f"{args.command}: solver did not converge; outputs are flagged in manifest.json", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
