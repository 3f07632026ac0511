"""Command line entry point.

Subcommands mirror the pipeline stages:

* ``synth``    - write a synthetic bundle from a scenario script
* ``cas``      - alarm logs -> cyber attack sequences
* ``pae``      - PMU traces -> physical attack events
* ``mine``     - sequences + events -> attack patterns
* ``pipeline`` - all three stages in order

Exit codes: 0 success, 2 configuration error, 3 missing input, 4 stage failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from cpsmine.errors import (
    ConfigError,
    CpsmineError,
    FormatError,
    InputError,
    ParseError,
    SchemaError,
    ScriptError,
    ValidationError,
)
from cpsmine.pipeline import (
    config_from_raw,
    load_config,
    run_cas,
    run_mine,
    run_pae,
    run_pipeline,
)
from cpsmine.synth import demo_criteria_script, demo_pattern_script, generate, load_script

EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_STAGE = 4

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpsmine",
        description="Coordinated cyber-physical attack pattern mining",
    )
    parser.add_argument("--verbose", action="store_true", help="log at debug level")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic bundle")
    group = synth.add_mutually_exclusive_group(required=True)
    group.add_argument("script", nargs="?", help="scenario script JSON")
    group.add_argument(
        "--demo",
        choices=("pattern", "criteria"),
        help="use a built-in demo scenario instead of a script file",
    )
    synth.add_argument("--out", required=True, help="bundle output directory")
    synth.add_argument("--seed", type=int, default=None, help="override the script seed")

    for name in ("cas", "pae", "mine", "pipeline"):
        stage = sub.add_parser(name, help=f"run the {name} stage")
        stage.add_argument("--config", required=True, help="pipeline config JSON")
        stage.add_argument("--out", default=None, help="output directory")
        stage.add_argument("--seed", type=int, default=None, help="override config seed")
    return parser


def _cmd_synth(args) -> int:
    if args.demo:
        script = (
            demo_pattern_script() if args.demo == "pattern" else demo_criteria_script()
        )
    else:
        path = Path(args.script)
        if not path.is_file():
            print(f"script not found: {path}", file=sys.stderr)
            return EXIT_CONFIG
        script = load_script(path)
    if args.seed is not None:
        from dataclasses import replace

        script = replace(script, seed=args.seed)
    paths = generate(script, args.out)
    for name in sorted(paths):
        logger.info("wrote %s", paths[name])
    print(f"bundle written to {args.out}")
    return 0


def _cmd_stage(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        raw = dict(cfg.raw)
        raw["seed"] = args.seed
        cfg = config_from_raw(raw, cfg.base_dir)
    out_dir = Path(args.out) if args.out else cfg.base_dir / "out"
    runner = {
        "cas": run_cas,
        "pae": run_pae,
        "mine": run_mine,
        "pipeline": run_pipeline,
    }[args.command]
    result = runner(cfg, out_dir)
    print(f"{args.command} outputs in {out_dir} ({result.name})")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        return _cmd_stage(args)
    except (ConfigError, ScriptError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, ParseError, SchemaError, FormatError, ValidationError,
            FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CpsmineError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
