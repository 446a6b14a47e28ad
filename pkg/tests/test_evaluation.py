import numpy as np
import pytest

from relpred import (
    DatasetSplits,
    MetricsReport,
    NumericError,
    build_vocabulary,
    evaluate,
    fit,
    hit_at,
    hits_at_n,
    index_triples,
    init_params,
    predict_scores,
    rank_relations,
    relation_ranks,
    urc_baseline,
    write_metrics,
)

from conftest import TOY_TEST, TOY_TRAIN, TOY_VALID
from oracles import pairwise_rank_order, pairwise_rank_order_batch
from test_training import make_splits, toy_hyper


class TestRankRelations:
    def test_basic_order(self):
        assert rank_relations(np.array([0.1, 0.9, 0.5])).tolist() == [1, 2, 0]

    def test_all_equal_scores_give_index_order(self):
        assert rank_relations(np.full(6, 0.25)).tolist() == [0, 1, 2, 3, 4, 5]

    def test_partial_ties(self):
        assert rank_relations(np.array([0.5, 0.9, 0.5, 0.9])).tolist() == [1, 3, 0, 2]

    def test_matches_pairwise_oracle_at_237(self):
        rng = np.random.default_rng(8)
        scores = rng.random(237)
        assert rank_relations(scores).tolist() == pairwise_rank_order(scores)

    def test_matches_pairwise_oracle_with_duplicates(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            n = int(rng.integers(1, 40))
            scores = rng.integers(0, 5, size=n) / 4.0  # heavy ties
            assert rank_relations(scores).tolist() == pairwise_rank_order(scores)

    def test_non_finite_rejected(self):
        with pytest.raises(NumericError):
            rank_relations(np.array([0.1, np.nan]))

    def test_requires_vector(self):
        with pytest.raises(ValueError):
            rank_relations(np.zeros((2, 2)))


class TestHitAt:
    def test_hit_when_ranked_first(self):
        assert hit_at(np.array([1, 2, 0]), 1, 1) == 1

    def test_miss_outside_top_n(self):
        assert hit_at(np.array([1, 2, 0]), 0, 2) == 0

    def test_full_coverage_always_hits(self):
        ranked = np.array([4, 2, 0, 3, 1])
        for p in range(5):
            assert hit_at(ranked, p, 5) == 1

    def test_rank_consistency(self):
        # a hit at N stays a hit for every larger cutoff
        rng = np.random.default_rng(3)
        for _ in range(30):
            ranked = rng.permutation(9)
            p = int(rng.integers(9))
            for n in range(1, 9):
                if hit_at(ranked, p, n):
                    assert all(hit_at(ranked, p, m) for m in range(n, 10))
                    break

    def test_invalid_n(self):
        with pytest.raises(ValueError):
            hit_at(np.array([0, 1]), 0, 3)
        with pytest.raises(ValueError):
            hit_at(np.array([0, 1]), 0, 0)


class TestHitsAtN:
    def test_converged_model_hits_everything(self, toy_splits):
        params, _ = fit(toy_splits, toy_hyper(epochs=200))
        for n in (1, 2, 3):
            assert hits_at_n(params, toy_splits.test, n) == 1.0

    def test_full_n_equals_one_without_skips(self, toy_splits):
        params = init_params(
            toy_splits.vocab.num_entities, toy_splits.vocab.num_relations, 4, 8, seed=0
        )
        assert hits_at_n(params, toy_splits.test, toy_splits.vocab.num_relations) == 1.0

    def test_matches_exhaustive_enumeration(self, toy_splits):
        params, _ = fit(toy_splits, toy_hyper(epochs=20))
        for n in (1, 2, 3):
            hits = 0
            for s, p, o in toy_splits.test:
                scores = predict_scores(params, s, o)
                order = pairwise_rank_order(scores)
                if order.index(p) < n:
                    hits += 1
            assert hits_at_n(params, toy_splits.test, n) == hits / len(toy_splits.test)

    def test_skipped_triples_count_as_misses(self, toy_splits):
        params, _ = fit(toy_splits, toy_hyper(epochs=200))
        full = hits_at_n(params, toy_splits.test, 1, oov_skipped=0)
        penalized = hits_at_n(params, toy_splits.test, 1, oov_skipped=len(toy_splits.test))
        assert full == 1.0
        assert penalized == 0.5

    def test_empty_test_rejected(self, toy_splits):
        params = init_params(8, 3, 2, 2, seed=0)
        with pytest.raises(ValueError):
            hits_at_n(params, [], 1)

    def test_relation_ranks_agree_with_rank_relations(self, toy_splits):
        params = init_params(
            toy_splits.vocab.num_entities, toy_splits.vocab.num_relations, 4, 8, seed=1
        )
        ranks = relation_ranks(params, toy_splits.test)
        for (s, p, o), rank in zip(toy_splits.test, ranks):
            order = rank_relations(predict_scores(params, s, o))
            assert order[rank] == p


class TestUrcBaseline:
    def test_analytic_values(self):
        analytic, _ = urc_baseline(11, 1, 100, seed=0)
        assert np.isclose(analytic, 1 / 11)
        analytic, _ = urc_baseline(237, 5, 100, seed=0)
        assert np.isclose(analytic, 5 / 237)

    def test_full_coverage(self):
        analytic, empirical = urc_baseline(3, 3, 500, seed=1)
        assert analytic == 1.0
        assert empirical == 1.0

    def test_empirical_converges_at_ten_thousand(self):
        for num_relations in (11, 237):
            for n in (1, 3, 5):
                analytic, empirical = urc_baseline(num_relations, n, 10_000, seed=123)
                assert abs(empirical - analytic) < 0.01, (num_relations, n)

    def test_deterministic_for_seed(self):
        a = urc_baseline(11, 3, 1000, seed=7)
        b = urc_baseline(11, 3, 1000, seed=7)
        assert a == b

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            urc_baseline(5, 6, 10, seed=0)
        with pytest.raises(ValueError):
            urc_baseline(5, 1, 0, seed=0)


class TestEvaluate:
    def test_monotone_hits(self, toy_splits):
        params = init_params(
            toy_splits.vocab.num_entities, toy_splits.vocab.num_relations, 4, 8, seed=2
        )
        report = evaluate(params, toy_splits, "test")
        assert report.hits[1] <= report.hits[3] <= report.hits[5] <= report.hits[10]

    def test_saturated_levels_report_one_with_note(self, toy_splits):
        # only 3 relations, so hits@5 and hits@10 saturate
        params = init_params(8, 3, 4, 8, seed=2)
        report = evaluate(params, toy_splits, "test")
        assert report.hits[5] == 1.0
        assert report.hits[10] == 1.0
        assert any("saturated" in note for note in report.notes)

    def test_untrained_model_near_chance(self):
        # random scores against independent random relations: hits@1 ~ 1/|R|
        rng = np.random.default_rng(0)
        num_entities, num_relations = 40, 11
        train = [(0, 0, 1)]
        test = [
            (int(rng.integers(num_entities)), int(rng.integers(num_relations)), int(rng.integers(num_entities)))
            for _ in range(3000)
        ]
        raw = [("e0", "r0", "e1")] + [
            (f"e{i}", f"r{p}", f"e{j}")
            for i in range(num_entities)
            for p in range(num_relations)
            for j in (0,)
        ]
        vocab = build_vocabulary(raw)
        params = init_params(vocab.num_entities, vocab.num_relations, 8, 16, seed=5)
        splits = DatasetSplits(train, [], test, vocab, 0, 0, "synthetic")
        report = evaluate(params, splits, "test")
        assert abs(report.hits[1] - 1 / num_relations) < 0.05

    def test_skips_enter_denominator(self, toy_splits):
        params, _ = fit(toy_splits, toy_hyper(epochs=200))
        toy_splits.skipped_test = len(toy_splits.test)
        report = evaluate(params, toy_splits, "test")
        assert report.hits[1] == 0.5
        assert report.num_test_triples == 2 * len(toy_splits.test)
        assert report.skipped_oov == len(toy_splits.test)

    def test_empty_split_rejected(self, toy_splits):
        params = init_params(8, 3, 2, 2, seed=0)
        toy_splits.valid = []
        with pytest.raises(ValueError):
            evaluate(params, toy_splits, "valid")

    def test_unknown_split_rejected(self, toy_splits):
        params = init_params(8, 3, 2, 2, seed=0)
        with pytest.raises(ValueError):
            evaluate(params, toy_splits, "train")


class TestMetricsReport:
    def make_report(self, runtime=12.5):
        return MetricsReport(
            dataset="toy",
            split="test",
            hits={1: 0.5, 3: 0.75, 5: 1.0, 10: 1.0},
            num_test_triples=4,
            skipped_oov=0,
            train_runtime_seconds=runtime,
            seed=3,
            hyperparams={"embedding_dim": 4},
        )

    def test_flat_dict_excludes_runtime_by_default(self):
        flat = self.make_report().to_flat_dict()
        assert "train_runtime_seconds" not in flat
        assert flat["hits_at_1"] == 0.5
        assert flat["embedding_dim"] == 4

    def test_flat_dict_can_include_runtime(self):
        flat = self.make_report().to_flat_dict(include_runtime=True)
        assert flat["train_runtime_seconds"] == 12.5

    def test_written_file_is_runtime_free_and_stable(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        write_metrics(a, self.make_report(runtime=1.0))
        write_metrics(b, self.make_report(runtime=999.0))
        assert a.read_bytes() == b.read_bytes()
        assert b"runtime" not in a.read_bytes()


class TestSortOracleEquivalence:
    def test_randomized_up_to_300(self):
        rng = np.random.default_rng(17)
        for size in (1, 2, 3, 11, 37, 150, 300):
            scores = rng.random((40, size))
            if size > 2:  # inject ties
                scores[:, 2] = scores[:, 0]
            expected = pairwise_rank_order_batch(scores)
            for row, exp in zip(scores, expected):
                assert rank_relations(row).tolist() == exp.tolist()
