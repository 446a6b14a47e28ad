"""Mini-batch training on pair-level multi-label targets, plus grid search.

Each training example is one distinct (subject, object) pair with a
multi-hot target over all relations; no negative sampling takes place.
Optimization is an adaptive-moment update (decay 0.9 / 0.999, epsilon
1e-8) with bias correction. Embedding rows that a batch does not touch are
not updated and their moment accumulators are not decayed.
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, fields, replace
from typing import Iterable, Iterator

import numpy as np

from .errors import ConfigError, NumericError
from .kg import DatasetSplits, PairLabelIndex, build_pair_labels
from .model import (
    Gradients,
    ModelParams,
    backward,
    forward,
    init_params,
    l2_penalty,
)
from .seeding import child_seed, substream

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_DENSE_TENSORS = ("hidden_weight", "hidden_bias", "output_weight", "output_bias")


@dataclass(frozen=True)
class Hyperparams:
    """One training configuration; validated on construction."""

    embedding_dim: int = 100
    hidden_dim: int = 300
    epochs: int = 50
    batch_size: int = 1000
    dropout_rate: float = 0.2
    l2_coefficient: float = 0.0
    learning_rate: float = 0.001
    seed: int = 1

    def __post_init__(self):
        if self.embedding_dim < 1 or self.hidden_dim < 1:
            raise ConfigError("embedding_dim and hidden_dim must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")
        if self.l2_coefficient < 0.0:
            raise ConfigError("l2_coefficient must be >= 0")
        if self.learning_rate <= 0.0:
            raise ConfigError("learning_rate must be > 0")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class TrainHistory:
    """Per-epoch record of one fit call."""

    epoch_losses: list[float]
    epoch_seconds: list[float]
    validation_hits1: list[float] | None = None

    @property
    def total_seconds(self) -> float:
        return float(sum(self.epoch_seconds))


@dataclass(frozen=True)
class GridSpec:
    """Candidate values for the hyperparameter search.

    Hidden width candidates are multipliers of the embedding size (width =
    round(multiplier * d), at least 1). The default lists enumerate to 432
    configurations.
    """

    embedding_dims: tuple[int, ...] = (30, 50, 100, 200)
    epochs: tuple[int, ...] = (30, 50, 100)
    hidden_multipliers: tuple[float, ...] = (0.5, 1.0, 3.0)
    batch_sizes: tuple[int, ...] = (256, 1000)
    dropout_rates: tuple[float, ...] = (0.0, 0.2, 0.5)
    l2_coefficients: tuple[float, ...] = (0.0, 0.1)
    learning_rates: tuple[float, ...] = (0.001,)

    def __post_init__(self):
        if self.size == 0:
            raise ConfigError("grid is empty")

    @property
    def size(self) -> int:
        return (
            len(self.embedding_dims)
            * len(self.epochs)
            * len(self.hidden_multipliers)
            * len(self.batch_sizes)
            * len(self.dropout_rates)
            * len(self.l2_coefficients)
            * len(self.learning_rates)
        )

    def points(self) -> Iterator[Hyperparams]:
        """Enumerate configurations in a fixed, documented order."""
        for d, epochs, mult, batch, dropout, l2, lr in itertools.product(
            self.embedding_dims,
            self.epochs,
            self.hidden_multipliers,
            self.batch_sizes,
            self.dropout_rates,
            self.l2_coefficients,
            self.learning_rates,
        ):
            yield Hyperparams(
                embedding_dim=d,
                hidden_dim=max(1, round(mult * d)),
                epochs=epochs,
                batch_size=batch,
                dropout_rate=dropout,
                l2_coefficient=l2,
                learning_rate=lr,
            )


@dataclass
class GridPointResult:
    """Outcome of one grid configuration."""

    index: int
    hyper: Hyperparams
    validation_hits1: float | None
    train_seconds: float | None
    error: str | None = None


@dataclass
class AdamState:
    """Moment accumulators; embeddings keep a per-row step counter."""

    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    m_embeddings: np.ndarray
    v_embeddings: np.ndarray
    embedding_steps: np.ndarray


def init_adam_state(params: ModelParams) -> AdamState:
    return AdamState(
        step=0,
        m={name: np.zeros_like(getattr(params, name)) for name in _DENSE_TENSORS},
        v={name: np.zeros_like(getattr(params, name)) for name in _DENSE_TENSORS},
        m_embeddings=np.zeros_like(params.entity_embeddings),
        v_embeddings=np.zeros_like(params.entity_embeddings),
        embedding_steps=np.zeros(params.num_entities, dtype=np.int64),
    )


def optimizer_step(
    params: ModelParams,
    grads: Gradients,
    opt_state: AdamState,
    learning_rate: float,
) -> tuple[ModelParams, AdamState]:
    """Apply one adaptive-moment update in place.

    Dense tensors share one step counter; embedding rows are corrected with
    their own counts so a rarely seen entity still gets unbiased moments.
    """
    opt_state.step += 1
    t = opt_state.step
    for name in _DENSE_TENSORS:
        g = getattr(grads, name)
        m = opt_state.m[name]
        v = opt_state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        m_hat = m / (1.0 - ADAM_BETA1**t)
        v_hat = v / (1.0 - ADAM_BETA2**t)
        update = learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        if not np.all(np.isfinite(update)):
            raise NumericError(f"non-finite update for {name}")
        getattr(params, name).__isub__(update)

    rows = grads.embedding_rows
    if len(rows):
        g = grads.embedding_grads
        opt_state.embedding_steps[rows] += 1
        t_rows = opt_state.embedding_steps[rows][:, None].astype(float)
        m = ADAM_BETA1 * opt_state.m_embeddings[rows] + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * opt_state.v_embeddings[rows] + (1.0 - ADAM_BETA2) * g * g
        opt_state.m_embeddings[rows] = m
        opt_state.v_embeddings[rows] = v
        m_hat = m / (1.0 - ADAM_BETA1**t_rows)
        v_hat = v / (1.0 - ADAM_BETA2**t_rows)
        update = learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        if not np.all(np.isfinite(update)):
            raise NumericError("non-finite update for entity embeddings")
        params.entity_embeddings[rows] -= update
    return params, opt_state


def make_batches(
    pairs: PairLabelIndex,
    batch_size: int,
    rng: np.random.Generator,
) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """One epoch of (subjects, objects, multi-hot targets) batches.

    Visits every distinct pair exactly once in a seeded random order; the
    last batch may be short. Target entry (b, p) is 1 iff relation p links
    the b-th pair in the training split.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    total = len(pairs)
    if total == 0:
        raise ValueError("pair index is empty")
    order = rng.permutation(total)
    counts_all = pairs.label_counts()
    for start in range(0, total, batch_size):
        idx = order[start : start + batch_size]
        s = pairs.pairs[idx, 0]
        o = pairs.pairs[idx, 1]
        counts = counts_all[idx]
        # gather each pair's label slice from the CSR arrays
        row_of_label = np.repeat(np.arange(len(idx)), counts)
        within = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        cols = pairs.label_values[pairs.label_offsets[idx][row_of_label] + within]
        targets = np.zeros((len(idx), pairs.num_relations))
        targets[row_of_label, cols] = 1.0
        yield s, o, targets


def train_epoch(
    params: ModelParams,
    opt_state: AdamState,
    batches: Iterable[tuple[np.ndarray, np.ndarray, np.ndarray]],
    hyper: Hyperparams,
    dropout_rng: np.random.Generator | None = None,
) -> tuple[ModelParams, AdamState, float]:
    """Run one optimization pass over the given batches.

    Per batch: forward in train mode, mean cross-entropy plus the L2
    penalty on the touched tensors, backward, one optimizer step. Returns
    the mean of the batch losses.
    """
    if dropout_rng is None and hyper.dropout_rate > 0.0:
        dropout_rng = substream(hyper.seed, "dropout")
    losses = []
    for batch_index, (s, o, targets) in enumerate(batches):
        try:
            cache = forward(params, s, o, dropout_rate=hyper.dropout_rate, rng=dropout_rng)
            loss, grads = backward(params, cache, targets)
            if hyper.l2_coefficient > 0.0:
                penalty, penalty_grads = l2_penalty(
                    params, hyper.l2_coefficient, grads.embedding_rows
                )
                loss += penalty
                grads.add_(penalty_grads)
            optimizer_step(params, grads, opt_state, hyper.learning_rate)
        except NumericError as exc:
            raise NumericError(f"batch {batch_index}: {exc}") from exc
        losses.append(loss)
    return params, opt_state, float(np.mean(losses))


def fit(
    splits: DatasetSplits,
    hyper: Hyperparams,
    track_validation: bool = False,
) -> tuple[ModelParams, TrainHistory]:
    """Train a fresh model on the train split.

    Records per-epoch mean loss and wall-clock seconds (target construction
    happens before the clock starts). With ``track_validation`` the
    validation Hits@1 is computed after every epoch. No early stopping:
    exactly ``hyper.epochs`` epochs run.
    """
    from .evaluation import hits_at_n  # deferred: evaluation imports model

    pair_index = build_pair_labels(splits.train, splits.vocab.num_relations)
    params = init_params(
        splits.vocab.num_entities,
        splits.vocab.num_relations,
        hyper.embedding_dim,
        hyper.hidden_dim,
        seed=child_seed(hyper.seed, "init"),
    )
    opt_state = init_adam_state(params)
    shuffle_rng = substream(hyper.seed, "shuffle")
    dropout_rng = substream(hyper.seed, "dropout")

    history = TrainHistory(epoch_losses=[], epoch_seconds=[], validation_hits1=[] if track_validation else None)
    for epoch in range(hyper.epochs):
        start = time.perf_counter()
        batches = make_batches(pair_index, hyper.batch_size, shuffle_rng)
        try:
            _, _, mean_loss = train_epoch(params, opt_state, batches, hyper, dropout_rng)
        except NumericError as exc:
            raise NumericError(f"epoch {epoch}, {exc}") from exc
        history.epoch_seconds.append(time.perf_counter() - start)
        history.epoch_losses.append(mean_loss)
        if track_validation:
            score = hits_at_n(params, splits.valid, 1, splits.skipped_valid)
            history.validation_hits1.append(score)
            log.info("epoch %d: loss %.4f, valid hits@1 %.4f", epoch, mean_loss, score)
        else:
            log.info("epoch %d: loss %.4f", epoch, mean_loss)
    return params, history


def grid_search(
    splits: DatasetSplits,
    grid: GridSpec,
    root_seed: int = 0,
) -> tuple[Hyperparams, list[GridPointResult]]:
    """Train one model per grid point and pick the best validation Hits@1.

    Every point gets its own seed derived from ``root_seed`` and its
    position, so the winning configuration (seed included) retrains to the
    recorded score. Ties keep the earlier point. A failing point is
    recorded and skipped; only a fully failing grid raises.
    """
    from .evaluation import hits_at_n

    results: list[GridPointResult] = []
    best: GridPointResult | None = None
    for index, point in enumerate(grid.points()):
        hyper = replace(point, seed=child_seed(root_seed, f"grid-{index}"))
        try:
            params, history = fit(splits, hyper)
            score = hits_at_n(params, splits.valid, 1, splits.skipped_valid)
            result = GridPointResult(index, hyper, score, history.total_seconds)
        except Exception as exc:  # record and move on; surface at the end
            log.warning("grid point %d failed: %s", index, exc)
            result = GridPointResult(index, hyper, None, None, error=str(exc))
        results.append(result)
        if result.error is None and (best is None or result.validation_hits1 > best.validation_hits1):
            best = result
    if best is None:
        raise RuntimeError("every grid point failed")
    return best.hyper, results


def save_hyperparams(path, hyper: Hyperparams) -> None:
    """Write a flat key = value config file mirroring the field names."""
    with open(path, "w", encoding="utf-8") as fh:
        for f in fields(Hyperparams):
            fh.write(f"{f.name} = {getattr(hyper, f.name)}\n")


def load_hyperparams(path, overrides: dict | None = None) -> Hyperparams:
    """Read a flat key = value config file; ``overrides`` wins over the file."""
    field_types = {f.name: f.type for f in fields(Hyperparams)}
    values: dict = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in field_types:
                raise ConfigError(f"{path}:{lineno}: unknown hyperparameter '{key}'")
            values[key] = _parse_value(key, raw, path, lineno)
    if overrides:
        values.update(overrides)
    return Hyperparams(**values)


def _parse_value(key: str, raw: str, path, lineno: int):
    kind = {f.name: f.type for f in fields(Hyperparams)}[key]
    try:
        if kind in (int, "int"):
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{path}:{lineno}: bad value for {key}: {raw!r}") from exc
