import io

import numpy as np
import pytest

from relpred import (
    ParseError,
    VocabularyError,
    build_pair_labels,
    build_vocabulary,
    count_multilabel_pairs,
    index_triples,
    load_dataset,
    parse_triples,
    read_vocabulary,
    write_vocabulary,
)

from conftest import TOY_TRAIN, require_dataset


class TestParseTriples:
    def test_single_line(self):
        assert parse_triples(io.StringIO("a\tr1\tb\n")) == [("a", "r1", "b")]

    def test_empty_stream(self):
        assert parse_triples(io.StringIO("")) == []

    def test_field_count_error_carries_line_number(self):
        with pytest.raises(ParseError) as err:
            parse_triples(io.StringIO("a\tr1\n"))
        assert err.value.line_number == 1

    def test_error_line_number_skips_blanks(self):
        stream = io.StringIO("a\tr\tb\n\n\nbad line\n")
        with pytest.raises(ParseError) as err:
            parse_triples(stream)
        assert err.value.line_number == 4

    def test_blank_lines_skipped(self):
        stream = io.StringIO("\na\tr\tb\n\nc\tr\td\n\n")
        assert parse_triples(stream) == [("a", "r", "b"), ("c", "r", "d")]

    def test_fields_are_trimmed(self):
        assert parse_triples(io.StringIO(" a \t r \t b \n")) == [("a", "r", "b")]

    def test_empty_field_rejected(self):
        with pytest.raises(ParseError):
            parse_triples(io.StringIO("a\t\tb\n"))

    def test_windows_line_endings(self):
        assert parse_triples(io.StringIO("a\tr\tb\r\n")) == [("a", "r", "b")]


class TestBuildVocabulary:
    def test_dedup(self):
        vocab = build_vocabulary([("a", "r", "b"), ("b", "r", "a")])
        assert vocab.num_entities == 2
        assert vocab.num_relations == 1

    def test_first_appearance_order(self):
        vocab = build_vocabulary([("x", "r2", "y"), ("a", "r1", "x")])
        assert vocab.id_to_entity == ["x", "y", "a"]
        assert vocab.id_to_relation == ["r2", "r1"]

    def test_maps_are_inverses(self):
        vocab = build_vocabulary(TOY_TRAIN)
        for label, idx in vocab.entity_to_id.items():
            assert vocab.id_to_entity[idx] == label
        for label, idx in vocab.relation_to_id.items():
            assert vocab.id_to_relation[idx] == label
        assert sorted(vocab.entity_to_id.values()) == list(range(vocab.num_entities))
        assert sorted(vocab.relation_to_id.values()) == list(range(vocab.num_relations))

    def test_empty_train_rejected(self):
        with pytest.raises(ValueError):
            build_vocabulary([])

    def test_deterministic(self):
        a = build_vocabulary(TOY_TRAIN)
        b = build_vocabulary(TOY_TRAIN)
        assert a.entity_to_id == b.entity_to_id
        assert a.relation_to_id == b.relation_to_id
        assert a.content_hash() == b.content_hash()

    def test_wn18rr_relation_count(self):
        path = require_dataset("WN18RR")
        splits = load_dataset(path)
        assert splits.vocab.num_relations == 11

    def test_fb15k237_relation_count(self):
        path = require_dataset("FB15K-237")
        splits = load_dataset(path)
        assert splits.vocab.num_relations == 237


class TestIndexTriples:
    def test_basic(self):
        raw = [("a", "r", "b")]
        vocab = build_vocabulary(raw)
        triples, skipped = index_triples(raw, vocab)
        assert triples == [(0, 0, 1)]
        assert skipped == 0

    def test_skip_policy_counts(self):
        vocab = build_vocabulary([("a", "r", "b")])
        triples, skipped = index_triples([("a", "r", "z")], vocab, "skip")
        assert triples == []
        assert skipped == 1

    def test_error_policy_names_label(self):
        vocab = build_vocabulary([("a", "r", "b")])
        with pytest.raises(VocabularyError) as err:
            index_triples([("a", "r", "z")], vocab, "error", "test")
        assert err.value.label == "z"
        assert err.value.split == "test"

    def test_unknown_relation_named(self):
        vocab = build_vocabulary([("a", "r", "b")])
        with pytest.raises(VocabularyError) as err:
            index_triples([("a", "q", "b")], vocab, "error")
        assert err.value.label == "q"
        assert err.value.kind == "relation"

    def test_unknown_policy_rejected(self):
        vocab = build_vocabulary([("a", "r", "b")])
        with pytest.raises(ValueError):
            index_triples([("a", "r", "b")], vocab, "bogus")

    def test_skip_never_errors_and_counts_add_up(self):
        rng = np.random.default_rng(0)
        vocab = build_vocabulary(TOY_TRAIN)
        known_e = vocab.id_to_entity
        known_r = vocab.id_to_relation
        for _ in range(50):
            raw = []
            for _ in range(rng.integers(0, 30)):
                s = rng.choice(known_e + ["zz1", "zz2"])
                r = rng.choice(known_r + ["qq"])
                o = rng.choice(known_e + ["zz3"])
                raw.append((str(s), str(r), str(o)))
            triples, skipped = index_triples(raw, vocab, "skip")
            assert skipped == len(raw) - len(triples)


class TestPairLabels:
    def test_multi_relation_pair(self):
        index = build_pair_labels([(0, 0, 1), (0, 1, 1)], num_relations=2)
        assert len(index) == 1
        assert index.label_sets() == [{0, 1}]

    def test_duplicates_contribute_once(self):
        index = build_pair_labels([(0, 0, 1), (0, 0, 1)], num_relations=1)
        assert len(index) == 1
        assert index.label_sets() == [{0}]

    def test_pair_order_is_first_appearance(self):
        triples = [(3, 0, 2), (1, 0, 2), (3, 1, 2)]
        index = build_pair_labels(triples, num_relations=2)
        assert index.pairs.tolist() == [[3, 2], [1, 2]]

    def test_label_sets_non_empty(self):
        index = build_pair_labels([(0, 0, 1), (2, 1, 3)], num_relations=2)
        assert (index.label_counts() >= 1).all()

    def test_round_trip_reconstructs_dedup_train(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(1, 60))
            triples = [
                (int(rng.integers(0, 6)), int(rng.integers(0, 4)), int(rng.integers(0, 6)))
                for _ in range(n)
            ]
            index = build_pair_labels(triples, num_relations=4)
            assert index.to_triples() == set(triples)

    def test_count_multilabel_pairs(self):
        multi = build_pair_labels([(0, 0, 1), (0, 1, 1)], num_relations=2)
        assert count_multilabel_pairs(multi) == 1
        single = build_pair_labels([(0, 0, 1), (2, 0, 3)], num_relations=1)
        assert count_multilabel_pairs(single) == 0

    def test_toy_train_has_one_multilabel_pair(self):
        vocab = build_vocabulary(TOY_TRAIN)
        train, _ = index_triples(TOY_TRAIN, vocab)
        index = build_pair_labels(train, vocab.num_relations)
        assert count_multilabel_pairs(index) == 1  # (a, c) holds r1 and r2

    def test_wn18_multilabel_pair_count(self):
        path = require_dataset("WN18")
        splits = load_dataset(path)
        index = build_pair_labels(splits.train, splits.vocab.num_relations)
        assert count_multilabel_pairs(index) == 277

    def test_fb15k_multilabel_pair_count(self):
        path = require_dataset("FB15K")
        splits = load_dataset(path)
        index = build_pair_labels(splits.train, splits.vocab.num_relations)
        assert count_multilabel_pairs(index) == 63856


class TestDatasetIO:
    def test_load_dataset(self, toy_dataset_dir):
        splits = load_dataset(toy_dataset_dir)
        assert splits.name == "toyds"
        assert len(splits.train) == len(TOY_TRAIN)
        assert splits.skipped_valid == 0
        assert splits.skipped_test == 0
        assert splits.vocab.num_entities == 8
        assert splits.vocab.num_relations == 3

    def test_load_dataset_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path)

    def test_vocabulary_round_trip(self, tmp_path, toy_vocab):
        write_vocabulary(toy_vocab, tmp_path)
        loaded = read_vocabulary(tmp_path)
        assert loaded.entity_to_id == toy_vocab.entity_to_id
        assert loaded.id_to_relation == toy_vocab.id_to_relation
        assert loaded.content_hash() == toy_vocab.content_hash()

    def test_oov_test_triples_are_counted(self, tmp_path):
        from conftest import write_dataset

        write_dataset(
            tmp_path / "ds",
            train=[("a", "r", "b")],
            valid=[("a", "r", "b")],
            test=[("a", "r", "b"), ("a", "r", "zz")],
        )
        splits = load_dataset(tmp_path / "ds")
        assert len(splits.test) == 1
        assert splits.skipped_test == 1
