"""Hits@N relation ranking, a uniform-random baseline, and metric reports.

For every test triple the model scores all relations for its entity pair;
relations are sorted by descending score (ties broken by ascending index so
the order is total and reproducible) and the true relation's position
decides the hit. Triples dropped by the OOV policy enter the denominator
as misses, so skipping can never inflate a metric.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError
from .kg import DatasetSplits, Triple
from .model import ModelParams, predict_scores

HITS_LEVELS = (1, 3, 5, 10)

_EVAL_CHUNK = 8192


def rank_relations(scores: np.ndarray) -> np.ndarray:
    """Relation indices sorted by descending score.

    Equal scores are ordered by ascending relation index (stable), so the
    result is a total, deterministic order over all relations.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1:
        raise ValueError("expected a 1-D score vector")
    if not np.all(np.isfinite(s)):
        raise NumericError("scores contain non-finite values")
    return np.argsort(-s, kind="stable")


def hit_at(ranked: np.ndarray, relation: int, n: int) -> int:
    """1 if ``relation`` sits within the first ``n`` ranked positions."""
    num = len(ranked)
    if not 1 <= n <= num:
        raise ValueError(f"n must be in [1, {num}], got {n}")
    if not 0 <= relation < num:
        raise ValueError(f"relation index out of range: {relation}")
    position = int(np.nonzero(ranked == relation)[0][0])
    return 1 if position < n else 0


def relation_ranks(
    params: ModelParams,
    triples: list[Triple],
    chunk_size: int = _EVAL_CHUNK,
) -> np.ndarray:
    """0-based rank of the true relation for every triple."""
    arr = np.asarray(triples, dtype=np.int64).reshape(len(triples), 3)
    ranks = np.empty(len(arr), dtype=np.int64)
    for start in range(0, len(arr), chunk_size):
        chunk = arr[start : start + chunk_size]
        scores = predict_scores(params, chunk[:, 0], chunk[:, 2])
        scores = np.atleast_2d(scores)
        for i, row in enumerate(scores):
            ranked = rank_relations(row)
            ranks[start + i] = int(np.nonzero(ranked == chunk[i, 1])[0][0])
    return ranks


def hits_at_n(
    params: ModelParams,
    test: list[Triple],
    n: int,
    oov_skipped: int = 0,
) -> float:
    """Fraction of test triples whose true relation ranks in the top n.

    ``oov_skipped`` triples count as misses in the denominator.
    """
    total = len(test) + oov_skipped
    if total == 0:
        raise ValueError("empty test set")
    if not test:
        return 0.0
    ranks = relation_ranks(params, test)
    return int(np.count_nonzero(ranks < n)) / total


def urc_baseline(
    num_relations: int,
    n: int,
    test_size: int,
    seed: int,
) -> tuple[float, float]:
    """Uniform random classifier Hits@N: (analytic n/|R|, sampled estimate).

    The estimate assigns every simulated triple an independent uniformly
    random score per relation, ranks them descending, and measures hits.
    """
    if not 1 <= n <= num_relations:
        raise ValueError(f"n must be in [1, {num_relations}]")
    if test_size < 1:
        raise ValueError("test_size must be >= 1")
    analytic = n / num_relations
    rng = np.random.default_rng(seed)
    scores = rng.random((test_size, num_relations))
    true = rng.integers(0, num_relations, size=test_size)
    true_scores = scores[np.arange(test_size), true]
    greater = (scores > true_scores[:, None]).sum(axis=1)
    ties_ahead = (
        (scores == true_scores[:, None]) & (np.arange(num_relations)[None, :] < true[:, None])
    ).sum(axis=1)
    ranks = greater + ties_ahead
    empirical = int(np.count_nonzero(ranks < n)) / test_size
    return analytic, empirical


@dataclass
class MetricsReport:
    """Evaluation summary for one model and split.

    ``num_test_triples`` is the full denominator (scored plus OOV-skipped).
    ``train_runtime_seconds`` is carried through when the caller trained the
    model; it is excluded from the deterministic report file and lives in
    the run log instead.
    """

    dataset: str
    split: str
    hits: dict[int, float]
    num_test_triples: int
    skipped_oov: int
    train_runtime_seconds: float | None = None
    seed: int | None = None
    hyperparams: dict | None = None
    notes: list[str] = field(default_factory=list)

    def to_flat_dict(self, include_runtime: bool = False) -> dict:
        out: dict = {"dataset": self.dataset, "split": self.split}
        for n in sorted(self.hits):
            out[f"hits_at_{n}"] = self.hits[n]
        out["num_test_triples"] = self.num_test_triples
        out["skipped_oov"] = self.skipped_oov
        if include_runtime and self.train_runtime_seconds is not None:
            out["train_runtime_seconds"] = self.train_runtime_seconds
        if self.seed is not None:
            out["seed"] = self.seed
        if self.hyperparams:
            out.update({k: v for k, v in sorted(self.hyperparams.items())})
        if self.notes:
            out["notes"] = "; ".join(self.notes)
        return out


def evaluate(
    params: ModelParams,
    splits: DatasetSplits,
    which: str = "test",
    train_runtime_seconds: float | None = None,
    seed: int | None = None,
    hyperparams: dict | None = None,
) -> MetricsReport:
    """Hits@{1,3,5,10} of ``params`` on the chosen split.

    Levels above the relation count are reported as 1.0 with a note.
    """
    if which not in ("valid", "test"):
        raise ValueError(f"split must be 'valid' or 'test', got {which!r}")
    triples = splits.valid if which == "valid" else splits.test
    skipped = splits.skipped_valid if which == "valid" else splits.skipped_test
    total = len(triples) + skipped
    if total == 0:
        raise ValueError(f"{which} split is empty")

    num_relations = splits.vocab.num_relations
    notes: list[str] = []
    hits: dict[int, float] = {}
    ranks = relation_ranks(params, triples) if triples else np.empty(0, dtype=np.int64)
    for n in HITS_LEVELS:
        if n > num_relations:
            hits[n] = 1.0 if skipped == 0 else len(triples) / total
            notes.append(f"hits@{n} saturated: only {num_relations} relations")
        else:
            hits[n] = int(np.count_nonzero(ranks < n)) / total
    return MetricsReport(
        dataset=splits.name,
        split=which,
        hits=hits,
        num_test_triples=total,
        skipped_oov=skipped,
        train_runtime_seconds=train_runtime_seconds,
        seed=seed,
        hyperparams=hyperparams,
        notes=notes,
    )


def write_metrics(path, report: MetricsReport, include_runtime: bool = False) -> None:
    """Serialize the report as flat JSON; deterministic for identical runs."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_flat_dict(include_runtime=include_runtime), f, indent=2, sort_keys=True)
        f.write("\n")


def format_metrics_table(report: MetricsReport) -> str:
    """Small human-readable summary for standard output."""
    lines = [f"dataset: {report.dataset}  split: {report.split}"]
    header = "  ".join(f"hits@{n:<3d}" for n in sorted(report.hits))
    values = "  ".join(f"{report.hits[n]:<8.4f}" for n in sorted(report.hits))
    lines.append(header)
    lines.append(values)
    lines.append(
        f"triples: {report.num_test_triples} (skipped OOV: {report.skipped_oov})"
    )
    if report.train_runtime_seconds is not None:
        lines.append(f"train runtime: {report.train_runtime_seconds:.1f} s")
    for note in report.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines)
