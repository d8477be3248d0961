"""Command-line front end: train-prior, run, plot, oracle."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .corpus import read_id_sequences
from .oracle import run_oracle_suite
from .pipeline import load_config, run_experiment
from .priors import NGramPrior
from .vocab import Vocabulary


def _cmd_train_prior(args) -> int:
    vocab = Vocabulary.from_file(args.vocab)
    sequences = read_id_sequences(args.corpus)
    model = NGramPrior.from_corpus(
        vocab,
        sequences,
        lambda_forward=args.lambda_forward,
        lambda_backward=args.lambda_backward,
        lambda_unigram=args.lambda_unigram,
        alpha=args.alpha,
    )
    model.save(args.out)
    n_tokens = sum(len(s) for s in sequences)
    print(f"trained on {len(sequences)} sequences / {n_tokens} tokens (V={vocab.size})")
    print(f"wrote {args.out}")
    return 0


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.out_dir:
        cfg = type(cfg)(**{**cfg.__dict__, "out_dir": args.out_dir})
    trials_path, agg_path, results = run_experiment(cfg)
    print(f"{len(results)} trials -> {trials_path}")
    print(f"aggregates -> {agg_path}")
    return 0


def _cmd_plot(args) -> int:
    from .plots import render_all

    made = render_all(args.aggregate, args.out_dir)
    for path in made:
        print(f"wrote {path}")
    return 0


def _cmd_oracle(args) -> int:
    rows = run_oracle_suite(seed=args.seed, map_trials=args.map_trials)
    failed = 0
    for name, passed, detail in rows:
        status = "PASS" if passed else "FAIL"
        if not passed:
            failed += 1
        print(f"[{status}] {name}: {detail}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tokencom",
        description="Context-aware wireless token communication simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train-prior", help="count a corpus into an n-gram prior model file")
    train.add_argument("--corpus", required=True, help="token-id sequences, one per line")
    train.add_argument("--vocab", required=True, help="vocabulary file, one token per line")
    train.add_argument("--out", required=True, help="output model file (.npz)")
    train.add_argument("--lambda-forward", type=float, default=0.4)
    train.add_argument("--lambda-backward", type=float, default=0.4)
    train.add_argument("--lambda-unigram", type=float, default=0.2)
    train.add_argument("--alpha", type=float, default=0.1)
    train.set_defaults(func=_cmd_train_prior)

    run = sub.add_parser("run", help="run an experiment config to CSV files")
    run.add_argument("--config", required=True, help="YAML experiment config")
    run.add_argument("--out-dir", default=None, help="override the config's output directory")
    run.set_defaults(func=_cmd_run)

    plot = sub.add_parser("plot", help="render charts from aggregate CSV files")
    plot.add_argument("--aggregate", nargs="+", required=True, help="aggregate CSV file(s)")
    plot.add_argument("--out-dir", default="plots", help="chart output directory")
    plot.set_defaults(func=_cmd_plot)

    oracle = sub.add_parser("oracle", help="run tiny-instance brute-force verification suites")
    oracle.add_argument("--seed", type=int, default=0)
    oracle.add_argument("--map-trials", type=int, default=200)
    oracle.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
