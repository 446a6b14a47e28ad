"""Knowledge-graph triple ingestion, indexing, and multi-label targets.

File format: one triple per line, three tab-separated fields in the order
subject, relation, object (the usual layout of train.txt / valid.txt /
test.txt in the public benchmark distributions). The vocabulary is built
from the training split only; how out-of-vocabulary labels in valid/test
are handled is controlled by an explicit policy.
"""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np

from .errors import ParseError, VocabularyError

log = logging.getLogger(__name__)

RawTriple = tuple[str, str, str]
Triple = tuple[int, int, int]

SPLIT_FILES = {"train": "train.txt", "valid": "valid.txt", "test": "test.txt"}

OOV_SKIP = "skip"
OOV_ERROR = "error"


@dataclass
class Vocabulary:
    """Dense bidirectional label <-> index maps for entities and relations.

    Attributes:
        entity_to_id: entity label -> index in [0, num_entities).
        relation_to_id: relation label -> index in [0, num_relations).
        id_to_entity: inverse list, position = index.
        id_to_relation: inverse list, position = index.
    """

    entity_to_id: dict[str, int]
    relation_to_id: dict[str, int]
    id_to_entity: list[str]
    id_to_relation: list[str]

    @property
    def num_entities(self) -> int:
        return len(self.id_to_entity)

    @property
    def num_relations(self) -> int:
        return len(self.id_to_relation)

    def content_hash(self) -> str:
        """SHA-256 over both label lists; identifies the index assignment."""
        h = hashlib.sha256()
        for label in self.id_to_entity:
            h.update(label.encode("utf-8"))
            h.update(b"\x00")
        h.update(b"\x01")
        for label in self.id_to_relation:
            h.update(label.encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()


@dataclass
class DatasetSplits:
    """Indexed train/valid/test triples plus the vocabulary they index into.

    ``skipped_valid`` / ``skipped_test`` count triples dropped by the skip
    OOV policy; evaluation charges them as misses.
    """

    train: list[Triple]
    valid: list[Triple]
    test: list[Triple]
    vocab: Vocabulary
    skipped_valid: int = 0
    skipped_test: int = 0
    name: str = ""


@dataclass
class PairLabelIndex:
    """Distinct (subject, object) pairs with their sets of training relations.

    Stored in CSR-like form: labels of pair ``i`` are
    ``label_values[label_offsets[i]:label_offsets[i + 1]]``. Pairs appear in
    first-appearance order of the training split; every label set is
    non-empty and duplicate triples contribute once.
    """

    pairs: np.ndarray  # (P, 2) int64, columns subject / object
    label_offsets: np.ndarray  # (P + 1,) int64
    label_values: np.ndarray  # (L,) int64 relation indices
    num_relations: int

    def __len__(self) -> int:
        return len(self.pairs)

    def labels(self, i: int) -> np.ndarray:
        return self.label_values[self.label_offsets[i] : self.label_offsets[i + 1]]

    def label_sets(self) -> list[set[int]]:
        return [set(self.labels(i).tolist()) for i in range(len(self))]

    def label_counts(self) -> np.ndarray:
        """Number of relations per pair."""
        return np.diff(self.label_offsets)

    def to_triples(self) -> set[Triple]:
        """Expand back to the deduplicated triple set."""
        out: set[Triple] = set()
        for i in range(len(self)):
            s, o = self.pairs[i]
            for p in self.labels(i):
                out.add((int(s), int(p), int(o)))
        return out


def parse_triples(source: Iterable[str] | IO[str], source_name: str = "") -> list[RawTriple]:
    """Parse a line-oriented stream of tab-separated triples.

    Blank lines are skipped. Raises ParseError (with the 1-based line
    number) on a wrong field count or an empty field.
    """
    triples: list[RawTriple] = []
    for lineno, line in enumerate(source, start=1):
        line = line.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(
                f"expected 3 tab-separated fields, got {len(parts)}", lineno, source_name
            )
        s, r, o = (p.strip() for p in parts)
        if not s or not r or not o:
            raise ParseError("empty field in triple", lineno, source_name)
        triples.append((s, r, o))
    return triples


def parse_triples_file(path: str | os.PathLike) -> list[RawTriple]:
    with open(path, "r", encoding="utf-8") as f:
        return parse_triples(f, source_name=str(path))


def build_vocabulary(train: list[RawTriple]) -> Vocabulary:
    """Assign dense indices to entity and relation labels of the train split.

    Indices follow first appearance order (subjects and objects interleaved
    in file order), so two builds from the same input are identical.
    """
    if not train:
        raise ValueError("cannot build a vocabulary from an empty train split")
    entity_to_id: dict[str, int] = {}
    relation_to_id: dict[str, int] = {}
    for s, r, o in train:
        if s not in entity_to_id:
            entity_to_id[s] = len(entity_to_id)
        if r not in relation_to_id:
            relation_to_id[r] = len(relation_to_id)
        if o not in entity_to_id:
            entity_to_id[o] = len(entity_to_id)
    return Vocabulary(
        entity_to_id=entity_to_id,
        relation_to_id=relation_to_id,
        id_to_entity=list(entity_to_id),
        id_to_relation=list(relation_to_id),
    )


def index_triples(
    raw: list[RawTriple],
    vocab: Vocabulary,
    oov_policy: str = OOV_SKIP,
    split_name: str = "",
) -> tuple[list[Triple], int]:
    """Map string triples to index triples.

    Under the ``skip`` policy, triples with any label absent from the
    vocabulary are dropped and counted; under ``error`` the first unknown
    label raises VocabularyError naming it.
    """
    if oov_policy not in (OOV_SKIP, OOV_ERROR):
        raise ValueError(f"unknown OOV policy: {oov_policy!r}")
    ent = vocab.entity_to_id
    rel = vocab.relation_to_id
    out: list[Triple] = []
    skipped = 0
    for s, r, o in raw:
        si = ent.get(s)
        pi = rel.get(r)
        oi = ent.get(o)
        if si is None or pi is None or oi is None:
            if oov_policy == OOV_ERROR:
                if si is None:
                    raise VocabularyError(s, "entity", split_name)
                if pi is None:
                    raise VocabularyError(r, "relation", split_name)
                raise VocabularyError(o, "entity", split_name)
            skipped += 1
            continue
        out.append((si, pi, oi))
    if skipped:
        log.warning(
            "skipped %d out-of-vocabulary triple(s) in split '%s'", skipped, split_name or "?"
        )
    return out, skipped


def build_pair_labels(train: list[Triple], num_relations: int) -> PairLabelIndex:
    """Group the train split into (subject, object) pairs with relation sets.

    One entry per distinct pair, in first-appearance order; duplicate
    triples contribute once.
    """
    pair_to_slot: dict[tuple[int, int], int] = {}
    slot_labels: list[set[int]] = []
    pairs: list[tuple[int, int]] = []
    for s, p, o in train:
        key = (s, o)
        slot = pair_to_slot.get(key)
        if slot is None:
            pair_to_slot[key] = len(pairs)
            pairs.append(key)
            slot_labels.append({p})
        else:
            slot_labels[slot].add(p)
    offsets = np.zeros(len(pairs) + 1, dtype=np.int64)
    values: list[int] = []
    for i, labels in enumerate(slot_labels):
        values.extend(sorted(labels))
        offsets[i + 1] = len(values)
    return PairLabelIndex(
        pairs=np.asarray(pairs, dtype=np.int64).reshape(len(pairs), 2),
        label_offsets=offsets,
        label_values=np.asarray(values, dtype=np.int64),
        num_relations=num_relations,
    )


def count_multilabel_pairs(index: PairLabelIndex) -> int:
    """Number of pairs linked by two or more distinct relations."""
    return int(np.count_nonzero(index.label_counts() >= 2))


def load_dataset(
    dataset_dir: str | os.PathLike,
    oov_policy: str = OOV_SKIP,
    name: str = "",
) -> DatasetSplits:
    """Read train/valid/test files from a directory and index them.

    The vocabulary comes from train only; valid/test triples with unknown
    labels follow ``oov_policy``.
    """
    paths = {split: os.path.join(dataset_dir, fname) for split, fname in SPLIT_FILES.items()}
    for split, path in paths.items():
        if not os.path.isfile(path):
            raise FileNotFoundError(f"missing {split} file: {path}")
    raw_train = parse_triples_file(paths["train"])
    raw_valid = parse_triples_file(paths["valid"])
    raw_test = parse_triples_file(paths["test"])
    vocab = build_vocabulary(raw_train)
    train, _ = index_triples(raw_train, vocab, OOV_ERROR, "train")
    valid, skipped_valid = index_triples(raw_valid, vocab, oov_policy, "valid")
    test, skipped_test = index_triples(raw_test, vocab, oov_policy, "test")
    return DatasetSplits(
        train=train,
        valid=valid,
        test=test,
        vocab=vocab,
        skipped_valid=skipped_valid,
        skipped_test=skipped_test,
        name=name or os.path.basename(os.path.normpath(dataset_dir)),
    )


def write_vocabulary(vocab: Vocabulary, out_dir: str | os.PathLike) -> None:
    """Serialize label lists, one per line; the line number is the index."""
    for fname, labels in (("entities.txt", vocab.id_to_entity), ("relations.txt", vocab.id_to_relation)):
        with open(os.path.join(out_dir, fname), "w", encoding="utf-8") as f:
            for label in labels:
                f.write(label + "\n")


def read_vocabulary(vocab_dir: str | os.PathLike) -> Vocabulary:
    """Load a vocabulary written by write_vocabulary."""

    def read_lines(fname: str) -> list[str]:
        path = os.path.join(vocab_dir, fname)
        with open(path, "r", encoding="utf-8") as f:
            return [line.rstrip("\n") for line in f]

    id_to_entity = read_lines("entities.txt")
    id_to_relation = read_lines("relations.txt")
    return Vocabulary(
        entity_to_id={e: i for i, e in enumerate(id_to_entity)},
        relation_to_id={r: i for i, r in enumerate(id_to_relation)},
        id_to_entity=id_to_entity,
        id_to_relation=id_to_relation,
    )
