"""Two-layer neural scorer over concatenated entity embeddings.

For an entity pair (s, o) the network computes

    probs = sigmoid(Wo @ relu(Wh @ [emb[s]; emb[o]] + bh) + bo)

one probability per relation. Training minimizes the multi-label binary
cross-entropy of these probabilities against the set of relations observed
for the pair. Gradients are computed analytically (no autodiff); the
embedding gradient is kept sparse, touching only the rows used by a batch.

All forward/backward entry points accept either a single index pair or
aligned index arrays (a batch); caches and gradients are always batched
internally.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import NumericError

PROB_EPS = 1e-7  # probability clamp inside the loss, avoids log(0)

_CHECKPOINT_MAGIC = b"RELPRED1"
_TENSOR_ORDER = ("entity_embeddings", "hidden_weight", "hidden_bias", "output_weight", "output_bias")


@dataclass
class ModelParams:
    """All trainable tensors.

    Shapes: entity_embeddings (num_entities, d), hidden_weight (k, 2d),
    hidden_bias (k,), output_weight (num_relations, k), output_bias
    (num_relations,).
    """

    entity_embeddings: np.ndarray
    hidden_weight: np.ndarray
    hidden_bias: np.ndarray
    output_weight: np.ndarray
    output_bias: np.ndarray

    @property
    def num_entities(self) -> int:
        return self.entity_embeddings.shape[0]

    @property
    def num_relations(self) -> int:
        return self.output_weight.shape[0]

    @property
    def embedding_dim(self) -> int:
        return self.entity_embeddings.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.hidden_weight.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.entity_embeddings.copy(),
            self.hidden_weight.copy(),
            self.hidden_bias.copy(),
            self.output_weight.copy(),
            self.output_bias.copy(),
        )


@dataclass
class ForwardCache:
    """Intermediates of one forward pass, retained for the backward pass.

    ``dropout_mask`` holds the multiplicative factor applied to the hidden
    activation: all ones in eval mode, entries in {0, 1/(1-rate)} in train
    mode (inverted dropout).
    """

    subjects: np.ndarray  # (B,)
    objects: np.ndarray  # (B,)
    inputs: np.ndarray  # (B, 2d) concatenated embeddings
    pre_activation: np.ndarray  # (B, k)
    hidden: np.ndarray  # (B, k) after ReLU and dropout
    dropout_mask: np.ndarray  # (B, k)
    probabilities: np.ndarray  # (B, num_relations)

    @property
    def batch_size(self) -> int:
        return len(self.subjects)


@dataclass
class Gradients:
    """Loss gradients, with the embedding part restricted to touched rows.

    ``embedding_rows`` lists the unique entity indices that appear as a
    subject or object in the batch; ``embedding_grads[i]`` is the gradient
    of row ``embedding_rows[i]``. When a pair has s == o, both
    contributions accumulate into that single row.
    """

    hidden_weight: np.ndarray
    hidden_bias: np.ndarray
    output_weight: np.ndarray
    output_bias: np.ndarray
    embedding_rows: np.ndarray  # (U,) int64
    embedding_grads: np.ndarray  # (U, d)

    def add_(self, other: "Gradients") -> None:
        """In-place accumulation; both sides must cover the same rows."""
        if not np.array_equal(self.embedding_rows, other.embedding_rows):
            raise ValueError("gradient row sets differ")
        self.hidden_weight += other.hidden_weight
        self.hidden_bias += other.hidden_bias
        self.output_weight += other.output_weight
        self.output_bias += other.output_bias
        self.embedding_grads += other.embedding_grads


def init_params(
    num_entities: int,
    num_relations: int,
    embedding_dim: int,
    hidden_dim: int,
    seed: int,
) -> ModelParams:
    """Initialize weights; deterministic for a given seed.

    Weight matrices are uniform on [-a, a] with a = sqrt(6 / (fan_in +
    fan_out)); embeddings use a = sqrt(6 / d); biases start at zero. Draw
    order is fixed (embeddings, hidden, output) so identical dimensions and
    seed give bit-identical tensors.
    """
    if num_entities < 1 or num_relations < 1 or embedding_dim < 1 or hidden_dim < 1:
        raise ValueError("all model dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    d, k, m = embedding_dim, hidden_dim, num_relations
    emb_limit = np.sqrt(6.0 / d)
    hidden_limit = np.sqrt(6.0 / (2 * d + k))
    output_limit = np.sqrt(6.0 / (k + m))
    return ModelParams(
        entity_embeddings=rng.uniform(-emb_limit, emb_limit, size=(num_entities, d)),
        hidden_weight=rng.uniform(-hidden_limit, hidden_limit, size=(k, 2 * d)),
        hidden_bias=np.zeros(k),
        output_weight=rng.uniform(-output_limit, output_limit, size=(m, k)),
        output_bias=np.zeros(m),
    )


def _as_index_batch(params: ModelParams, subjects, objects) -> tuple[np.ndarray, np.ndarray, bool]:
    scalar = np.isscalar(subjects) or (np.ndim(subjects) == 0)
    s = np.atleast_1d(np.asarray(subjects, dtype=np.int64))
    o = np.atleast_1d(np.asarray(objects, dtype=np.int64))
    if s.shape != o.shape:
        raise ValueError("subject and object index arrays must align")
    n = params.num_entities
    if s.size and (s.min() < 0 or s.max() >= n or o.min() < 0 or o.max() >= n):
        raise IndexError("entity index out of range")
    return s, o, scalar


def concat_pair(entity_embeddings: np.ndarray, subjects, objects) -> np.ndarray:
    """Concatenate subject and object embedding rows, subject first.

    Accepts scalars (returns a (2d,) vector) or index arrays (returns
    (B, 2d)). Order matters: swapping s and o produces a different input
    whenever their embeddings differ.
    """
    scalar = np.isscalar(subjects) or (np.ndim(subjects) == 0)
    s = np.atleast_1d(np.asarray(subjects, dtype=np.int64))
    o = np.atleast_1d(np.asarray(objects, dtype=np.int64))
    n = entity_embeddings.shape[0]
    if s.size and (s.min() < 0 or s.max() >= n or o.min() < 0 or o.max() >= n):
        raise IndexError("entity index out of range")
    x = np.concatenate([entity_embeddings[s], entity_embeddings[o]], axis=1)
    return x[0] if scalar else x


def forward(
    params: ModelParams,
    subjects,
    objects,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> ForwardCache:
    """Run the scorer on a batch of entity pairs.

    Eval mode is the default (no dropout). Train mode is selected by a
    positive ``dropout_rate`` and needs ``rng`` for the masks; retained
    hidden units are scaled by 1/(1-rate) so eval needs no rescaling.
    """
    if not 0.0 <= dropout_rate < 1.0:
        raise ValueError("dropout_rate must be in [0, 1)")
    s, o, _ = _as_index_batch(params, subjects, objects)
    x = np.concatenate([params.entity_embeddings[s], params.entity_embeddings[o]], axis=1)

    z1 = x @ params.hidden_weight.T + params.hidden_bias
    if not np.all(np.isfinite(z1)):
        raise NumericError("hidden affine layer produced non-finite values")
    a1 = np.maximum(z1, 0.0)
    if dropout_rate > 0.0:
        if rng is None:
            raise ValueError("dropout requires a random generator")
        keep = rng.random(a1.shape) >= dropout_rate
        mask = keep / (1.0 - dropout_rate)
    else:
        mask = np.ones_like(a1)
    a1 = a1 * mask

    z2 = a1 @ params.output_weight.T + params.output_bias
    if not np.all(np.isfinite(z2)):
        raise NumericError("output affine layer produced non-finite values")
    probs = _sigmoid(z2)
    return ForwardCache(
        subjects=s,
        objects=o,
        inputs=x,
        pre_activation=z1,
        hidden=a1,
        dropout_mask=mask,
        probabilities=probs,
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # piecewise form avoids overflow in exp for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _bce_rows(probabilities: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-row binary cross-entropy sums for (B, m) inputs."""
    p = np.clip(probabilities, PROB_EPS, 1.0 - PROB_EPS)
    y = np.asarray(targets, dtype=p.dtype)
    return -np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p), axis=-1)


def bce_loss(probabilities: np.ndarray, targets: np.ndarray) -> float:
    """Binary cross-entropy summed over one probability vector.

    Probabilities are clamped to [PROB_EPS, 1 - PROB_EPS] before the logs,
    so the result is always finite and non-negative.
    """
    p = np.asarray(probabilities, dtype=float)
    y = np.asarray(targets, dtype=float)
    if p.shape != y.shape or p.ndim != 1:
        raise ValueError(f"expected matching vectors, got {p.shape} and {y.shape}")
    return float(_bce_rows(p, y))


def backward(params: ModelParams, cache: ForwardCache, targets) -> tuple[float, Gradients]:
    """Loss and its exact gradients for the batch behind ``cache``.

    The loss is the mean over the batch of per-example cross-entropy sums
    (for a single pair it equals ``bce_loss(cache.probabilities, targets)``).
    The probability clamp inside the loss is treated as the identity when
    differentiating: the output-layer error signal is (probs - targets),
    which is the exact gradient of the unclamped sigmoid cross-entropy.
    """
    y = np.asarray(targets, dtype=float)
    if y.ndim == 1:
        y = y[None, :]
    if y.shape != cache.probabilities.shape:
        raise ValueError(
            f"targets shape {y.shape} does not match cached probabilities "
            f"{cache.probabilities.shape}"
        )
    if cache.hidden.shape[1] != params.hidden_dim or y.shape[1] != params.num_relations:
        raise ValueError("cache does not match the model dimensions")

    batch = cache.batch_size
    loss = float(np.mean(_bce_rows(cache.probabilities, y)))

    dz2 = (cache.probabilities - y) / batch  # (B, m)
    g_output_weight = dz2.T @ cache.hidden
    g_output_bias = dz2.sum(axis=0)

    da1 = dz2 @ params.output_weight  # (B, k)
    dz1 = da1 * cache.dropout_mask * (cache.pre_activation > 0.0)
    g_hidden_weight = dz1.T @ cache.inputs
    g_hidden_bias = dz1.sum(axis=0)

    dx = dz1 @ params.hidden_weight  # (B, 2d)
    d = params.embedding_dim
    touched = np.concatenate([cache.subjects, cache.objects])
    rows, inverse = np.unique(touched, return_inverse=True)
    g_rows = np.zeros((len(rows), d))
    np.add.at(g_rows, inverse[:batch], dx[:, :d])
    np.add.at(g_rows, inverse[batch:], dx[:, d:])

    return loss, Gradients(
        hidden_weight=g_hidden_weight,
        hidden_bias=g_hidden_bias,
        output_weight=g_output_weight,
        output_bias=g_output_bias,
        embedding_rows=rows,
        embedding_grads=g_rows,
    )


def predict_scores(params: ModelParams, subjects, objects) -> np.ndarray:
    """Relation probabilities in eval mode; pure function of its inputs.

    Returns a (num_relations,) vector for scalar indices, (B, num_relations)
    for index arrays.
    """
    _, _, scalar = _as_index_batch(params, subjects, objects)
    probs = forward(params, subjects, objects).probabilities
    return probs[0] if scalar else probs


def l2_penalty(
    params: ModelParams,
    coefficient: float,
    embedding_rows: np.ndarray | None = None,
) -> tuple[float, Gradients]:
    """Additive L2 penalty on the weight matrices and selected embedding rows.

    Biases are excluded. ``embedding_rows`` selects which embedding rows
    enter the sum (a training batch passes its touched rows, keeping the
    sparse update lazy); None means all rows.
    """
    if coefficient < 0:
        raise ValueError("l2 coefficient must be >= 0")
    if embedding_rows is None:
        rows = np.arange(params.num_entities, dtype=np.int64)
    else:
        rows = np.asarray(embedding_rows, dtype=np.int64)
    emb = params.entity_embeddings[rows]
    penalty = coefficient * (
        float(np.sum(params.hidden_weight**2))
        + float(np.sum(params.output_weight**2))
        + float(np.sum(emb**2))
    )
    grads = Gradients(
        hidden_weight=2.0 * coefficient * params.hidden_weight,
        hidden_bias=np.zeros_like(params.hidden_bias),
        output_weight=2.0 * coefficient * params.output_weight,
        output_bias=np.zeros_like(params.output_bias),
        embedding_rows=rows,
        embedding_grads=2.0 * coefficient * emb,
    )
    return penalty, grads


def save_checkpoint(path: str | os.PathLike, params: ModelParams, vocab_hash: str) -> None:
    """Write a self-describing binary checkpoint.

    Layout: magic, u64 header length, JSON header (dims, vocabulary hash,
    tensor shapes), then the raw little-endian float64 buffers in a fixed
    order. The format is byte-deterministic, so identical params produce
    identical files, and tensors round-trip bit-exactly.
    """
    tensors = {name: np.ascontiguousarray(getattr(params, name), dtype="<f8") for name in _TENSOR_ORDER}
    header = {
        "format": 1,
        "num_entities": params.num_entities,
        "num_relations": params.num_relations,
        "embedding_dim": params.embedding_dim,
        "hidden_dim": params.hidden_dim,
        "vocab_hash": vocab_hash,
        "tensors": {name: list(t.shape) for name, t in tensors.items()},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_CHECKPOINT_MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for name in _TENSOR_ORDER:
            f.write(tensors[name].tobytes())


def load_checkpoint(path: str | os.PathLike) -> tuple[ModelParams, str]:
    """Read a checkpoint written by save_checkpoint."""
    with open(path, "rb") as f:
        magic = f.read(len(_CHECKPOINT_MAGIC))
        if magic != _CHECKPOINT_MAGIC:
            raise ValueError(f"not a model checkpoint: {path}")
        (header_len,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(header_len).decode("utf-8"))
        arrays = {}
        for name in _TENSOR_ORDER:
            shape = tuple(header["tensors"][name])
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(count * 8)
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    params = ModelParams(**arrays)
    return params, header["vocab_hash"]
