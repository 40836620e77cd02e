import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

import phonalign
from phonalign.data import CorpusConfig, generate_corpus, load_corpus, save_corpus
from phonalign.errors import ConfigError, PhonalignError
from phonalign.metrics import write_report
from phonalign.model import Checkpoint
from phonalign.pipeline import (SweepConfig, TrainConfig, evaluate, load_config, reproduce_tradeoff,
                                write_posteriorgram_dump)
from phonalign.pipeline import train as train_model
from phonalign.utils import format_run_stats

from .recipe import RecipeConfig, run_recipe

load_dotenv()


def _env_flag(name: str) -> bool:
    return os.getenv(name, "").strip().lower() in ("1", "true", "yes", "on")


def _default_workers() -> int:
    raw = os.getenv("PHONALIGN_WORKERS", "1")
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"PHONALIGN_WORKERS must be an integer, got {raw!r}") from None
    if workers < 1:
        raise ConfigError(f"PHONALIGN_WORKERS must be >= 1, got {workers}")
    return workers


def _load_corpus_or_generate(corpus_dir: Optional[str], config, workers: int):
    if corpus_dir:
        return load_corpus(corpus_dir)
    if config is None:
        raise ConfigError("no --corpus directory and no corpus section in the config")
    return generate_corpus(config, workers=workers)


def cmd_gen_corpus(args) -> int:
    config = load_config(args.config, CorpusConfig) if args.config else CorpusConfig()
    corpus = generate_corpus(config, workers=args.workers)
    save_corpus(corpus, args.out)
    return 0


def cmd_train(args) -> int:
    config = load_config(args.config, TrainConfig)
    if args.workers is not None:
        config = config.model_copy(update={"workers": args.workers})
    corpus = _load_corpus_or_generate(args.corpus, config.corpus, config.workers)
    teacher = None
    if args.teacher:
        teacher = Checkpoint.load(args.teacher)
        config = config.model_copy(update={"loss": config.loss.with_teacher(args.teacher)})
    checkpoint, run_log = train_model(config, corpus, teacher=teacher, cache_dir=args.cache_dir, progress=True)
    checkpoint.save(args.out)
    run_log.checkpoint = str(args.out)
    run_log.save(Path(f"{args.out}.runlog.json"))
    if run_log.skipped_total:
        logging.warning(f"Phonalign: {run_log.skipped_total} utterance updates skipped as CTC-infeasible")
    return 0


def cmd_evaluate(args) -> int:
    checkpoint = Checkpoint.load(args.ckpt)
    reference = Checkpoint.load(args.reference) if args.reference else None
    corpus = load_corpus(args.corpus)
    result = evaluate(checkpoint, corpus, split=args.split, reference=reference, workers=args.workers)
    write_report([result.report], args.report)
    report = result.report
    print(f"{report.model}\t{report.loss}\tPER={report.per:.2f}\tF1={report.f1:.2f}\t"
          f"frames={report.frames:.1f}\tpeaks={report.peaks:.2f}")
    return 0


def cmd_stats(args) -> int:
    checkpoint = Checkpoint.load(args.ckpt)
    corpus = load_corpus(args.corpus)
    write_posteriorgram_dump(checkpoint, corpus.split(args.split), args.out, workers=args.workers)
    return 0


def cmd_reproduce_tradeoff(args) -> int:
    config = load_config(args.config, SweepConfig)
    corpus = load_corpus(args.corpus) if args.corpus else None
    result = reproduce_tradeoff(config, args.out, corpus=corpus, progress=True)
    for mode, rho in result.spearman.items():
        print(f"{mode}\tspearman(lag, delay)={rho:.3f}")
    return 0


def cmd_run_recipe(args) -> int:
    config = load_config(args.config, RecipeConfig) if args.config else RecipeConfig()
    corpus = load_corpus(args.corpus) if args.corpus else None
    run_recipe(config, args.out, corpus=corpus, progress=True)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phonalign",
        description="Alignment-loss and teacher-student phoneme recognizers on a synthetic scripted-speech corpus.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--debug", action="store_true", help="Enable debug logging (also PHONALIGN_DEBUG=1)")
    parser.add_argument("--log-file", default=None, help="Write one JSON entry per completed span here")
    sub = parser.add_subparsers(dest="command", required=True)
    workers = _default_workers()

    p = sub.add_parser("gen-corpus", help="Generate and save a synthetic corpus")
    p.add_argument("--config", default=None, help="CorpusConfig YAML (defaults when omitted)")
    p.add_argument("--out", required=True, help="Output corpus directory")
    p.add_argument("--workers", type=int, default=workers)
    p.set_defaults(handler=cmd_gen_corpus)

    p = sub.add_parser("train", help="Train one model (distills when the loss has a ts term)")
    p.add_argument("--config", required=True, help="TrainConfig YAML")
    p.add_argument("--corpus", default=None, help="Corpus directory (else generated from the config)")
    p.add_argument("--out", required=True, help="Output checkpoint path")
    p.add_argument("--teacher", default=None, help="Teacher checkpoint for ts recipes")
    p.add_argument("--cache-dir", default=None, help="Directory for cached teacher logits")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("evaluate", help="Evaluate a checkpoint on one split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", choices=("dev", "test"), default="test")
    p.add_argument("--reference", default=None, help="Reference checkpoint defining delay 0")
    p.add_argument("--report", required=True, help="Report path (.tsv, plus a .json twin)")
    p.add_argument("--workers", type=int, default=workers)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("stats", help="Dump per-utterance and per-frame posterior statistics")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", choices=("dev", "test"), default="test")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=workers)
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("reproduce-tradeoff", help="Window x mode latency sweep against one teacher")
    p.add_argument("--config", required=True, help="SweepConfig YAML")
    p.add_argument("--out", required=True)
    p.add_argument("--corpus", default=None, help="Corpus directory (else generated from the config)")
    p.set_defaults(handler=cmd_reproduce_tradeoff)

    p = sub.add_parser("run-recipe", help="Train and evaluate every stage of a recipe")
    p.add_argument("--config", default=None, help="RecipeConfig YAML (the full default recipe when omitted)")
    p.add_argument("--out", required=True)
    p.add_argument("--corpus", default=None, help="Corpus directory (else generated from the config)")
    p.set_defaults(handler=cmd_run_recipe)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        parser = build_parser()
    except PhonalignError as e:
        print(f"phonalign: error: {e}", file=sys.stderr)
        return 2
    args = parser.parse_args(argv)
    debug = args.debug or _env_flag("PHONALIGN_DEBUG")
    if not debug:
        logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s")
    tracker = phonalign.init(tags=[args.command], debug=debug, log_file=args.log_file)
    try:
        return args.handler(args)
    except (PhonalignError, OSError) as e:
        print(f"phonalign: error: {e}", file=sys.stderr)
        return 2
    finally:
        logging.info(f"Phonalign: {args.command} finished.{format_run_stats(tracker.stats())}")


def run():
    """Entry point for the `phonalign` script."""
    sys.exit(main())


def gen_corpus():
    sys.exit(main(["gen-corpus", *sys.argv[1:]]))


def train():
    """
    Shortcut for `phonalign train`.
    """
    sys.exit(main(["train", *sys.argv[1:]]))
