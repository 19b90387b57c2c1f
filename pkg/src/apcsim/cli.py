"""Command line interface: generate / ingest / run / report.

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import traceback
from pathlib import Path

from .corpus import SyntheticConfig, generate_synthetic, load_mpd_slice, save_corpus
from .errors import ConfigError, ParseError, SchemaError
from .runner import ExperimentConfig, emit_reports, load_experiment_config, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def _load_table(path: str) -> dict:
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() == ".json":
        return json.loads(text)
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(text)


def _cmd_generate(args: argparse.Namespace) -> int:
    raw = _load_table(args.config) if args.config else {}
    raw = raw.get("synthetic", raw)
    config = SyntheticConfig(**raw)
    if args.seed is not None:
        config.seed = args.seed
    corpus = generate_synthetic(config)
    save_corpus(corpus, args.out)
    print(f"wrote {corpus.n} playlists ({len(corpus.songs())} songs) to {args.out}")
    return EXIT_OK


def _cmd_ingest(args: argparse.Namespace) -> int:
    corpus = load_mpd_slice(args.input)
    save_corpus(corpus, args.out)
    print(
        f"wrote {corpus.n} playlists to {args.out}"
        f" (dropped {corpus.duplicates_dropped} duplicate tracks)"
    )
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_experiment_config(args.config)
    if args.out:
        config.out_dir = args.out
    if args.folds is not None:
        config.folds = args.folds
    if args.seed is not None:
        config.master_seed = args.seed
    if args.recommender:
        config.recommender = args.recommender
    if args.strategy:
        config.strategies = [s for s in config.strategies if s.kind == args.strategy]
        if not config.strategies:
            raise ConfigError(f"strategy {args.strategy!r} not present in config")
    if args.alpha:
        config.alphas = [float(a) for a in args.alpha.split(",")]
    manifest = run_experiment(config)
    print(f"run complete: {config.out_dir} ({manifest.timings['total_seconds']:.1f}s)")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    written = emit_reports(args.out)
    print(f"emitted {len(written)} report files under {args.out}/reports")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apcsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic long-tail corpus")
    p.add_argument("--config", help="TOML/JSON file with synthetic-corpus parameters")
    p.add_argument("--out", required=True, help="output corpus path (.ndjson)")
    p.add_argument("--seed", type=int, help="override the generator seed")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("ingest", help="convert an MPD JSON slice to the canonical format")
    p.add_argument("--input", required=True, help="MPD slice JSON file")
    p.add_argument("--out", required=True, help="output corpus path (.ndjson)")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("run", help="run a full experiment from a config file")
    p.add_argument("--config", required=True, help="experiment TOML/JSON config")
    p.add_argument("--out", help="override output directory")
    p.add_argument("--folds", type=int, help="override fold count")
    p.add_argument("--seed", type=int, help="override master seed")
    p.add_argument("--recommender", choices=["oracle", "neural"], help="override recommender")
    p.add_argument("--strategy", help="keep only the named strategy from the config")
    p.add_argument("--alpha", help="comma-separated alpha list override")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="re-emit report CSVs from run artifacts")
    p.add_argument("--out", required=True, help="run output directory")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError, SchemaError, FileNotFoundError, TypeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # stage failure
        traceback.print_exc()
        print(f"stage failure: {e}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
