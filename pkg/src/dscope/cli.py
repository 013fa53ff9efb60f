"""``dscope`` command line: one subcommand per pipeline stage plus ``pipeline``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import formats, svg
from .pipeline import STAGES, ExperimentConfig, MissingArtifact, run_pipeline, run_stage

log = logging.getLogger("dscope")


def load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        config = replace(config, seeds=[args.seed])
    if args.out:
        config = replace(config, output_dir=args.out)
    return config


def _echo(line: str) -> None:
    print(line, flush=True)


def cmd_stage(args) -> int:
    config = load_config(args)
    paths = run_stage(config, args.command, force=args.force, echo=_echo)
    if not paths:
        print(f"{args.command}: up to date", file=sys.stderr)
    return 0


def cmd_pipeline(args) -> int:
    config = load_config(args)
    run_pipeline(config, until=args.stage, echo=_echo)
    return 0


def cmd_plot(args) -> int:
    if args.input is None:
        return cmd_stage(args)
    src = Path(args.input)
    if not src.exists():
        raise MissingArtifact(src)
    coords, labels = formats.read_embedding(src)
    out = Path(args.output) if args.output else src.with_suffix(".svg")
    formats.atomic_write(out, svg.render_scatter(coords, labels))
    _echo(str(out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dscope", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config JSON (defaults built in when omitted)")
        p.add_argument("--seed", type=int, help="run only this seed")
        p.add_argument("--out", help="output directory, overrides the config")
        p.add_argument("--force", action="store_true", help="ignore the stage marker and recompute")

    for stage in STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        common(p)
        p.set_defaults(func=cmd_stage)
        if stage == "plot":
            p.add_argument("--input", help="render a single x,y,label embedding CSV instead")
            p.add_argument("--output", help="SVG path for --input (default: next to the CSV)")
            p.set_defaults(func=cmd_plot)

    p = sub.add_parser("pipeline", help="run every stage, skipping finished ones")
    common(p)
    p.add_argument("--stage", choices=STAGES, help="stop after this stage")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MissingArtifact as exc:
        print(f"dscope: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"dscope: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
