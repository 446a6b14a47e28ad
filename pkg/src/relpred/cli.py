"""Command-line entry point.

Subcommands: preprocess, train, evaluate, gridsearch, predict. Each run is
reproducible from its config and seed; wall-clock timings go to a separate
run log so the report files themselves are bit-stable across reruns.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from contextlib import nullcontext
from dataclasses import fields
from datetime import datetime, timezone

import numpy as np

from . import kg, plots
from .errors import ConfigError, NumericError, ParseError, VocabularyError
from .evaluation import evaluate, format_metrics_table, rank_relations, write_metrics
from .kg import build_pair_labels, count_multilabel_pairs
from .model import load_checkpoint, predict_scores, save_checkpoint
from .training import (
    GridSpec,
    Hyperparams,
    fit,
    grid_search,
    load_hyperparams,
    save_hyperparams,
)

log = logging.getLogger("relpred")

_HYPER_FLAGS = {
    "d": "embedding_dim",
    "k": "hidden_dim",
    "epochs": "epochs",
    "batch_size": "batch_size",
    "dropout": "dropout_rate",
    "l2": "l2_coefficient",
    "lr": "learning_rate",
    "seed": "seed",
}


def _thread_context(threads: int | None, deterministic: bool):
    # deterministic mode pins BLAS to one thread so reductions have a fixed order
    limit = 1 if deterministic else threads
    if limit is None:
        return nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        log.warning("threadpoolctl not available; thread limit not enforced")
        return nullcontext()
    return threadpool_limits(limits=limit)


def _require_dataset_dir(path: str) -> None:
    if not os.path.isdir(path):
        raise FileNotFoundError(f"dataset directory not found: {path}")
    for split, fname in kg.SPLIT_FILES.items():
        full = os.path.join(path, fname)
        if not os.path.isfile(full):
            raise FileNotFoundError(f"missing {split} file: {full}")


def _prepare_out_dir(path: str) -> None:
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise OSError(f"output directory not writable: {path}")


def _resolve_hyperparams(args) -> Hyperparams:
    overrides = {}
    for flag, name in _HYPER_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "config", None):
        return load_hyperparams(args.config, overrides)
    values = Hyperparams().to_dict()
    values.update(overrides)
    return Hyperparams(**values)


def cmd_preprocess(args) -> int:
    _require_dataset_dir(args.dataset_dir)
    _prepare_out_dir(args.out_dir)
    splits = kg.load_dataset(args.dataset_dir, args.oov_policy)
    kg.write_vocabulary(splits.vocab, args.out_dir)

    for split_name, triples in (("train", splits.train), ("valid", splits.valid), ("test", splits.test)):
        path = os.path.join(args.out_dir, f"{split_name}_indexed.tsv")
        with open(path, "w", encoding="utf-8") as f:
            for s, p, o in triples:
                f.write(f"{s}\t{p}\t{o}\n")

    pair_index = build_pair_labels(splits.train, splits.vocab.num_relations)
    stats = {
        "dataset": splits.name,
        "num_entities": splits.vocab.num_entities,
        "num_relations": splits.vocab.num_relations,
        "num_train_triples": len(splits.train),
        "num_valid_triples": len(splits.valid),
        "num_test_triples": len(splits.test),
        "skipped_valid": splits.skipped_valid,
        "skipped_test": splits.skipped_test,
        "distinct_train_pairs": len(pair_index),
        "multirelation_train_pairs": count_multilabel_pairs(pair_index),
    }
    with open(os.path.join(args.out_dir, "stats.json"), "w", encoding="utf-8") as f:
        json.dump(stats, f, indent=2, sort_keys=True)
        f.write("\n")

    relation_counts = np.bincount(
        [p for _, p, _ in splits.train], minlength=splits.vocab.num_relations
    )
    plots.save_dataset_stats(
        relation_counts,
        pair_index.label_counts(),
        os.path.join(args.out_dir, "dataset_stats.png"),
    )
    for key, value in stats.items():
        print(f"{key}: {value}")
    return 0


def cmd_train(args) -> int:
    _require_dataset_dir(args.dataset_dir)
    _prepare_out_dir(args.out_dir)
    hyper = _resolve_hyperparams(args)
    splits = kg.load_dataset(args.dataset_dir, args.oov_policy)
    log.info("training on %s: |E|=%d |R|=%d, %s", splits.name, splits.vocab.num_entities,
             splits.vocab.num_relations, hyper)

    params, history = fit(splits, hyper, track_validation=args.track_validation)
    report = evaluate(
        params,
        splits,
        "test",
        train_runtime_seconds=history.total_seconds,
        seed=hyper.seed,
        hyperparams=hyper.to_dict(),
    )

    written: list[str] = []
    try:
        ckpt_path = os.path.join(args.out_dir, "model.ckpt")
        save_checkpoint(ckpt_path, params, splits.vocab.content_hash())
        written.append(ckpt_path)

        metrics_path = os.path.join(args.out_dir, "metrics.json")
        write_metrics(metrics_path, report, include_runtime=False)
        written.append(metrics_path)

        config_path = os.path.join(args.out_dir, "train_config.cfg")
        save_hyperparams(config_path, hyper)
        written.append(config_path)

        history_path = os.path.join(args.out_dir, "history.csv")
        with open(history_path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            header = ["epoch", "loss"]
            if history.validation_hits1 is not None:
                header.append("valid_hits_at_1")
            writer.writerow(header)
            for i, loss in enumerate(history.epoch_losses):
                row = [i + 1, repr(loss)]
                if history.validation_hits1 is not None:
                    row.append(repr(history.validation_hits1[i]))
                writer.writerow(row)
        written.append(history_path)

        run_log_path = os.path.join(args.out_dir, "run_log.json")
        with open(run_log_path, "w", encoding="utf-8") as f:
            json.dump(
                {
                    "finished_utc": datetime.now(timezone.utc).isoformat(),
                    "train_runtime_seconds": history.total_seconds,
                    "epoch_seconds": history.epoch_seconds,
                    "threads": args.threads,
                    "deterministic": args.deterministic,
                },
                f,
                indent=2,
            )
            f.write("\n")
        written.append(run_log_path)

        loss_fig = os.path.join(args.out_dir, "loss_curve.png")
        plots.save_loss_curve(history.epoch_losses, loss_fig, history.validation_hits1)
        written.append(loss_fig)
        hits_fig = os.path.join(args.out_dir, "hits_bar.png")
        plots.save_hits_bar(report.hits, hits_fig, title=f"{splits.name} ({report.split})")
        written.append(hits_fig)
    except Exception:
        for path in written:
            try:
                os.remove(path)
            except OSError:
                pass
        raise

    print(format_metrics_table(report))
    return 0


def cmd_evaluate(args) -> int:
    _require_dataset_dir(args.dataset_dir)
    params, vocab_hash = load_checkpoint(args.checkpoint)
    splits = kg.load_dataset(args.dataset_dir, args.oov_policy)
    if splits.vocab.content_hash() != vocab_hash:
        raise ConfigError(
            "checkpoint was trained against a different vocabulary than this dataset"
        )
    report = evaluate(params, splits, args.split)
    print(format_metrics_table(report))
    if args.out_dir:
        _prepare_out_dir(args.out_dir)
        write_metrics(os.path.join(args.out_dir, f"metrics_{args.split}.json"), report)
        plots.save_hits_bar(
            report.hits,
            os.path.join(args.out_dir, f"hits_bar_{args.split}.png"),
            title=f"{splits.name} ({args.split})",
        )
    return 0


def _parse_grid_list(raw: str | None, cast, default: tuple) -> tuple:
    if raw is None:
        return default
    try:
        values = tuple(cast(item) for item in raw.split(",") if item.strip())
    except ValueError as exc:
        raise ConfigError(f"bad grid list: {raw!r}") from exc
    if not values:
        raise ConfigError(f"empty grid list: {raw!r}")
    return values


def cmd_gridsearch(args) -> int:
    _require_dataset_dir(args.dataset_dir)
    _prepare_out_dir(args.out_dir)
    defaults = GridSpec()
    grid = GridSpec(
        embedding_dims=_parse_grid_list(args.grid_d, int, defaults.embedding_dims),
        epochs=_parse_grid_list(args.grid_epochs, int, defaults.epochs),
        hidden_multipliers=_parse_grid_list(args.grid_k_mult, float, defaults.hidden_multipliers),
        batch_sizes=_parse_grid_list(args.grid_batch_size, int, defaults.batch_sizes),
        dropout_rates=_parse_grid_list(args.grid_dropout, float, defaults.dropout_rates),
        l2_coefficients=_parse_grid_list(args.grid_l2, float, defaults.l2_coefficients),
        learning_rates=_parse_grid_list(args.grid_lr, float, defaults.learning_rates),
    )
    splits = kg.load_dataset(args.dataset_dir, args.oov_policy)
    log.info("grid search over %d configurations on %s", grid.size, splits.name)
    root_seed = args.seed if args.seed is not None else 0
    best, results = grid_search(splits, grid, root_seed=root_seed)

    csv_path = os.path.join(args.out_dir, "grid_results.csv")
    hyper_names = [f.name for f in fields(Hyperparams)]
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["index", *hyper_names, "validation_hits_at_1", "train_seconds", "error"])
        for r in results:
            writer.writerow(
                [
                    r.index,
                    *[getattr(r.hyper, name) for name in hyper_names],
                    "" if r.validation_hits1 is None else repr(r.validation_hits1),
                    "" if r.train_seconds is None else f"{r.train_seconds:.3f}",
                    r.error or "",
                ]
            )
    save_hyperparams(os.path.join(args.out_dir, "best_config.cfg"), best)
    plots.save_grid_results(results, os.path.join(args.out_dir, "grid_hits.png"))

    best_result = next(r for r in results if r.error is None and r.hyper == best)
    print(f"best configuration (validation hits@1 = {best_result.validation_hits1:.4f}):")
    for name in hyper_names:
        print(f"  {name} = {getattr(best, name)}")
    print(f"results written to {csv_path}")
    return 0


def cmd_predict(args) -> int:
    params, vocab_hash = load_checkpoint(args.checkpoint)
    if args.vocab_dir:
        vocab = kg.read_vocabulary(args.vocab_dir)
    elif args.dataset_dir:
        raw_train = kg.parse_triples_file(os.path.join(args.dataset_dir, kg.SPLIT_FILES["train"]))
        vocab = kg.build_vocabulary(raw_train)
    else:
        raise ConfigError("predict needs --vocab-dir or --dataset-dir")
    if vocab.content_hash() != vocab_hash:
        raise ConfigError("checkpoint was trained against a different vocabulary")

    if args.subject not in vocab.entity_to_id:
        raise VocabularyError(args.subject, "entity")
    if args.object not in vocab.entity_to_id:
        raise VocabularyError(args.object, "entity")
    s = vocab.entity_to_id[args.subject]
    o = vocab.entity_to_id[args.object]

    top_k = args.top_k
    if top_k > vocab.num_relations:
        print(f"note: top-k clamped to the {vocab.num_relations} known relations")
        top_k = vocab.num_relations
    if top_k < 1:
        raise ConfigError("--top-k must be >= 1")

    scores = predict_scores(params, s, o)
    ranked = rank_relations(scores)
    print(f"{args.subject} ? {args.object}")
    for rank, rel in enumerate(ranked[:top_k], start=1):
        print(f"{rank:4d}  {scores[rel]:.6g}  {vocab.id_to_relation[rel]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relpred",
        description="Relation prediction over knowledge-graph triples: train, evaluate, inspect.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
    common.add_argument(
        "--deterministic",
        action="store_true",
        help="single-threaded reductions for bit-stable reruns",
    )

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--dataset-dir", required=True, help="directory with train/valid/test files")
    data.add_argument(
        "--oov-policy",
        choices=[kg.OOV_SKIP, kg.OOV_ERROR],
        default=kg.OOV_SKIP,
        help="handling of valid/test labels unseen in train",
    )

    hyper = argparse.ArgumentParser(add_help=False)
    hyper.add_argument("--config", help="flat key=value hyperparameter file")
    hyper.add_argument("--seed", type=int, default=None)
    hyper.add_argument("--d", type=int, default=None, help="embedding size")
    hyper.add_argument("--k", type=int, default=None, help="hidden layer width")
    hyper.add_argument("--epochs", type=int, default=None)
    hyper.add_argument("--batch-size", type=int, default=None)
    hyper.add_argument("--dropout", type=float, default=None)
    hyper.add_argument("--l2", type=float, default=None)
    hyper.add_argument("--lr", type=float, default=None)

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", parents=[common, data], help="index a dataset and report statistics")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", parents=[common, data, hyper], help="train a model and evaluate it on test")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--track-validation", action="store_true", help="validation hits@1 after each epoch")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common, data], help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["valid", "test"], default="test")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gridsearch", parents=[common, data], help="hyperparameter grid search")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None, help="root seed for per-point seeds")
    p.add_argument("--grid-d", help="comma list of embedding sizes")
    p.add_argument("--grid-epochs", help="comma list of epoch counts")
    p.add_argument("--grid-k-mult", help="comma list of hidden width multipliers")
    p.add_argument("--grid-batch-size", help="comma list of batch sizes")
    p.add_argument("--grid-dropout", help="comma list of dropout rates")
    p.add_argument("--grid-l2", help="comma list of L2 coefficients")
    p.add_argument("--grid-lr", help="comma list of learning rates")
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("predict", parents=[common], help="rank relations for one entity pair")
    p.add_argument("subject")
    p.add_argument("object")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab-dir", help="directory with entities.txt / relations.txt")
    p.add_argument("--dataset-dir", help="rebuild the vocabulary from this dataset's train split")
    p.add_argument("--top-k", type=int, default=10)
    p.set_defaults(func=cmd_predict)
    return parser


def _fail(category: str, exc: Exception) -> int:
    print(f"error[{category}] {exc}", file=sys.stderr)
    return 1


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_context(args.threads, args.deterministic):
            return args.func(args)
    except ParseError as exc:
        return _fail("parse", exc)
    except VocabularyError as exc:
        return _fail("vocab", exc)
    except ConfigError as exc:
        return _fail("config", exc)
    except NumericError as exc:
        return _fail("numeric", exc)
    except FileNotFoundError as exc:
        return _fail("io", exc)
    except OSError as exc:
        return _fail("io", exc)
    except ValueError as exc:
        return _fail("data", exc)
    except Exception as exc:  # pragma: no cover - last-resort guard
        return _fail("internal", exc)


if __name__ == "__main__":
    sys.exit(main())
