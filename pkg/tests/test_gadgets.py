"""Gaussian gap gadgets: detection, fitting, scoring and constraint mining."""

import math

import numpy as np
import pytest

from tkbc.gadgets import (GadgetIndex, Gadgets, PairParams, RecurrenceParams,
                          closest_recurrence_gap, detect_recurrent_relations,
                          fit_pair_statistics, gaussian_density,
                          mine_ordering_constraints, score_pair,
                          score_recurrence, score_timeplex)
from tkbc.kb import Fact, TemporalKB, TimeInterval, Vocabulary
from tkbc.scoring import ModelParams, score_tx_interval


def make_kb(train, n_entities=8, n_relations=3, n_instants=50):
    entities = [f"e{i}" for i in range(n_entities)]
    relations = [f"r{i}" for i in range(n_relations)]
    vocab = Vocabulary(entities, relations, n_relations, "year", 0, n_instants - 1)
    facts = [Fact(s, r, o, TimeInterval(b, e)) for s, r, o, b, e in train]
    return TemporalKB(vocab, {"train": facts, "valid": [], "test": []}, "year")


class TestGaussianDensity:
    def test_peak_value(self):
        assert gaussian_density(0.0, 0.0, 1.0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-4)
        assert gaussian_density(0.0, 0.0, 1.0) == pytest.approx(0.3989, abs=1e-4)

    def test_one_sigma_out(self):
        assert gaussian_density(1.0, 0.0, 1.0) == pytest.approx(0.2420, abs=1e-4)

    def test_symmetry(self):
        for a in (0.5, 1.7, 3.0):
            assert gaussian_density(2 + a, 2, 0.7) == pytest.approx(gaussian_density(2 - a, 2, 0.7))

    def test_sigma_must_be_positive(self):
        with pytest.raises(ValueError):
            gaussian_density(0.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            gaussian_density(0.0, 0.0, -1.0)


class TestRecurrenceDetection:
    def test_two_distinct_begins_recur(self):
        kb = make_kb([(0, 0, 1, 1, 1), (0, 0, 1, 5, 5)])
        assert detect_recurrent_relations(kb, k_rec=1) == {0}

    def test_threshold_applies(self):
        kb = make_kb([(0, 0, 1, 1, 1), (0, 0, 1, 5, 5)])
        assert detect_recurrent_relations(kb, k_rec=2) == set()

    def test_duplicate_begin_not_distinct(self):
        kb = make_kb([(0, 0, 1, 1, 1), (0, 0, 1, 1, 3)])
        assert detect_recurrent_relations(kb, k_rec=1) == set()


class TestClosestGap:
    def test_min_over_occurrences(self):
        kb = make_kb([(0, 0, 1, 8, 8), (0, 0, 1, 12, 12), (0, 0, 1, 16, 16)],
                     n_instants=40)
        assert closest_recurrence_gap(kb, 0, 0, 1, 17) == 1

    def test_excludes_query_instant(self):
        kb = make_kb([(0, 0, 1, 9, 9)])
        assert closest_recurrence_gap(kb, 0, 0, 1, 9) is None

    def test_single_candidate(self):
        kb = make_kb([(0, 0, 1, 5, 5)])
        assert closest_recurrence_gap(kb, 0, 0, 1, 9) == 4


class TestRecurrenceScore:
    def fitted(self, kb, **overrides):
        rec = RecurrenceParams.fit(kb, k_rec=1)
        for name, value in overrides.items():
            getattr(rec, name)[:] = value
        return rec

    def test_unseen_triple_scores_zero(self):
        kb = make_kb([(0, 0, 1, 1, 1), (0, 0, 1, 5, 5)])
        rec = self.fitted(kb, b=-0.7, w=1.0)
        assert score_recurrence(kb, rec, 2, 0, 3, 10) == 0.0

    def test_non_recurrent_scores_bias(self):
        kb = make_kb([(0, 1, 1, 4, 4)])
        rec = self.fitted(kb, b=-0.7)
        assert score_recurrence(kb, rec, 0, 1, 1, 30) == pytest.approx(-0.7)

    def test_gaussian_peak(self):
        kb = make_kb([(0, 0, 1, 10, 10), (0, 0, 1, 14, 14)])
        rec = self.fitted(kb)
        rec.mu[0] = 4.0
        rec.sigma[0] = 1.0
        rec.w[0] = 1.0
        rec.b[0] = 0.0
        # query at 18: closest occurrence 14, gap 4 = mu, density peak
        assert score_recurrence(kb, rec, 0, 0, 1, 18) == pytest.approx(0.3989, abs=1e-4)

    def test_depends_only_on_interval_begin(self):
        kb = make_kb([(0, 0, 1, 10, 10), (0, 0, 1, 14, 14)])
        rec = self.fitted(kb, w=1.3, b=0.2)
        a = score_recurrence(kb, rec, 0, 0, 1, TimeInterval(18, 18))
        for end in (20, 30, 45):
            assert score_recurrence(kb, rec, 0, 0, 1, TimeInterval(18, end)) == a

    def test_fit_recovers_period(self):
        kb = make_kb([(0, 0, 1, 10, 10), (0, 0, 1, 14, 14), (0, 0, 1, 18, 18)])
        rec = RecurrenceParams.fit(kb)
        assert rec.recurrent[0]
        assert rec.mu[0] == pytest.approx(4.0)
        assert rec.sigma[0] == 1.0  # zero spread floors at one granularity unit


class TestPairStatistics:
    def test_planted_constant_gap(self):
        rows = []
        for e in range(10):
            t1 = 3 * e
            rows.append((e, 0, 20, t1, t1))
            rows.append((e, 1, 21, t1 + 30, t1 + 30))
        kb = make_kb(rows, n_entities=22, n_relations=2, n_instants=80)
        stats = fit_pair_statistics(kb)
        assert stats.sub_count[1, 0] == 10
        assert stats.sub_mean[1, 0] == pytest.approx(30.0)
        assert stats.sub_std[1, 0] == pytest.approx(0.0)
        assert stats.sub_mean[0, 1] == pytest.approx(-30.0)
        pair = PairParams.from_stats(stats)
        assert pair.sub_sigma[1, 0] == 1.0  # floored

    def test_never_cooccurring_pair_has_no_stats(self):
        kb = make_kb([(0, 0, 1, 1, 1), (2, 1, 3, 5, 5)], n_relations=2)
        stats = fit_pair_statistics(kb)
        assert stats.sub_count[0, 1] == 0
        assert not PairParams.from_stats(stats).sub_has[0, 1]

    def test_single_cooccurrence_sigma_floors(self):
        kb = make_kb([(0, 0, 1, 2, 2), (0, 1, 1, 9, 9)], n_relations=2)
        pair = PairParams.from_stats(fit_pair_statistics(kb))
        assert pair.sub_has[0, 1] and pair.sub_has[1, 0]
        assert pair.sub_sigma[0, 1] == 1.0
        assert pair.sub_mu[1, 0] == pytest.approx(7.0)

    def test_object_side_fitted_separately(self):
        rows = [(0, 0, 5, 10, 10), (1, 1, 5, 22, 22)]
        kb = make_kb(rows, n_relations=2)
        stats = fit_pair_statistics(kb)
        assert stats.obj_count[1, 0] == 1
        assert stats.obj_mean[1, 0] == pytest.approx(12.0)
        assert stats.sub_count[1, 0] == 0


class TestPairScore:
    def make_pair(self, kb, **tables):
        pair = PairParams.from_stats(fit_pair_statistics(kb))
        for name, (index, value) in tables.items():
            getattr(pair, name)[index] = value
        return pair

    def test_cold_entity_scores_zero(self):
        kb = make_kb([(0, 0, 1, 1, 1)])
        pair = self.make_pair(kb)
        assert score_pair(kb, pair, 5, 1, 6, 10) == 0.0

    def test_single_neighbor_softmax_weight_one(self):
        kb = make_kb([(0, 1, 2, 7, 7)], n_relations=3)
        pair = self.make_pair(kb)
        pair.sub_mu[0, 1] = 2.0
        pair.sub_sigma[0, 1] = 1.5
        pair.sub_b[0, 1] = 0.25
        pair.sub_has[0, 1] = True
        got = score_pair(kb, pair, 0, 0, 9, 10)
        expected = gaussian_density(3.0, 2.0, 1.5) + 0.25
        assert got == pytest.approx(expected)

    def test_two_neighbors_softmax_by_hand(self):
        # neighbors under relations 1 and 2; weights 0 and ln(3) -> 0.25 / 0.75
        kb = make_kb([(0, 1, 2, 4, 4), (0, 2, 3, 8, 8)], n_relations=4)
        pair = self.make_pair(kb)
        pair.sub_w[0, 1] = 0.0
        pair.sub_w[0, 2] = math.log(3.0)
        pair.sub_b[0, 1] = 1.0
        pair.sub_b[0, 2] = 2.0
        pair.sub_has[0, 1] = False
        pair.sub_has[0, 2] = False
        got = score_pair(kb, pair, 0, 0, 9, 10)
        assert got == pytest.approx(0.25 * 1.0 + 0.75 * 2.0)

    def test_same_relation_neighbors_excluded(self):
        kb = make_kb([(0, 0, 2, 4, 4), (0, 1, 3, 8, 8)], n_relations=2)
        pair = self.make_pair(kb)
        pair.sub_b[0, 1] = 5.0
        pair.sub_has[0, 1] = False
        # the relation-0 neighbor is skipped; only the r1 neighbor contributes
        assert score_pair(kb, pair, 0, 0, 9, 10) == pytest.approx(5.0)

    def test_softmax_weights_sum_to_one(self):
        rng = np.random.default_rng(0)
        rows = [(0, r, 2 + r, int(rng.integers(0, 40)), 0) for r in range(1, 6)]
        rows = [(s, r, o, b, b) for s, r, o, b, _ in rows]
        kb = make_kb(rows, n_entities=12, n_relations=6)
        pair = self.make_pair(kb)
        pair.sub_w[0] = rng.normal(size=6)
        pair.sub_b[0] = rng.normal(size=6)
        # with densities suppressed, the score is a convex combination of biases
        pair.sub_has[:] = False
        got = score_pair(kb, pair, 0, 0, 11, 10)
        assert got <= pair.sub_b[0, 1:6].max() + 1e-9
        assert got >= pair.sub_b[0, 1:6].min() - 1e-9


class TestGadgetIndexAgreement:
    def test_batched_matches_scalar(self):
        rng = np.random.default_rng(4)
        rows = []
        for e in range(12):
            for _ in range(int(rng.integers(1, 5))):
                rows.append((e, int(rng.integers(0, 4)), int(rng.integers(0, 12)),
                             int(rng.integers(0, 50)), 0))
        rows = [(s, r, o, b, b) for s, r, o, b, _ in rows]
        kb = make_kb(rows, n_entities=12, n_relations=4)
        gadgets = Gadgets.fit(kb, kappa=1.0, lam=1.0)
        pair, rec = gadgets.pair, gadgets.rec
        pair.sub_w[:] = rng.normal(size=pair.sub_w.shape)
        pair.sub_b[:] = rng.normal(size=pair.sub_b.shape)
        pair.obj_w[:] = rng.normal(size=pair.obj_w.shape)
        pair.obj_b[:] = rng.normal(size=pair.obj_b.shape)
        index = GadgetIndex(kb)
        r, t = 1, 17
        cands = np.arange(12, dtype=np.int64)
        obj_scores = index.pair_object_scores(pair, r, t, cands)
        sub_scores = index.pair_subject_scores(pair, r, t, cands)
        for e in range(12):
            full = score_pair(kb, pair, e, r, e, t)
            assert full == pytest.approx(float(sub_scores[e] + obj_scores[e]), rel=1e-9)

    def test_recurrence_over_candidates_matches_scalar(self):
        kb = make_kb([(0, 0, 1, 5, 5), (0, 0, 1, 9, 9), (0, 0, 2, 7, 7)])
        rec = RecurrenceParams.fit(kb)
        rec.w[:] = 1.0
        rec.b[:] = 0.3
        index = GadgetIndex(kb)
        got = index.recurrence_object_scores(rec, 0, 0, 10, kb.vocabulary.n_entities)
        for e in range(kb.vocabulary.n_entities):
            assert got[e] == pytest.approx(score_recurrence(kb, rec, 0, 0, e, 10))

    def test_time_sweep_matches_scalar(self):
        kb = make_kb([(0, 0, 1, 5, 5), (0, 1, 2, 9, 9), (3, 2, 1, 20, 20)],
                     n_relations=3)
        gadgets = Gadgets.fit(kb, kappa=1.0, lam=1.0)
        index = GadgetIndex(kb)
        t_ids = np.arange(0, 30, dtype=np.int64)
        pair_sweep = index.pair_scores_over_times(gadgets.pair, 0, 0, 1, t_ids)
        rec_sweep = index.recurrence_scores_over_times(gadgets.rec, 0, 0, 1, t_ids)
        for i, t in enumerate(t_ids):
            assert pair_sweep[i] == pytest.approx(
                score_pair(kb, gadgets.pair, 0, 0, 1, int(t)), rel=1e-9)
            assert rec_sweep[i] == pytest.approx(
                score_recurrence(kb, gadgets.rec, 0, 0, 1, int(t)), rel=1e-9)


class TestCombinedScore:
    def build(self):
        kb = make_kb([(0, 0, 1, 5, 5), (0, 1, 1, 9, 9), (0, 1, 1, 13, 13)],
                     n_relations=2, n_instants=30)
        rng = np.random.default_rng(1)
        model = ModelParams.init_random(8, 2, 30, 4, rng, std=0.4,
                                        alpha=1.0, beta=1.0, gamma=1.0)
        gadgets = Gadgets.fit(kb, kappa=3.0, lam=5.0)
        gadgets.pair.sub_b[:] = 0.1
        gadgets.pair.obj_b[:] = -0.2
        gadgets.rec.w[:] = 0.8
        gadgets.rec.b[:] = 0.05
        return kb, model, gadgets

    def test_zero_mixing_weights_reduce_to_base(self):
        kb, model, gadgets = self.build()
        iv = TimeInterval(9, 11)
        assert score_timeplex(kb, model, gadgets, 0, 1, 1, iv, 0.0, 0.0) == \
            pytest.approx(score_tx_interval(model, 0, 1, 1, iv))

    def test_componentwise_sum(self):
        kb, model, gadgets = self.build()
        iv = TimeInterval(9, 11)
        got = score_timeplex(kb, model, gadgets, 0, 1, 1, iv, 3.0, 5.0)
        expected = (score_tx_interval(model, 0, 1, 1, iv)
                    + 3.0 * score_pair(kb, gadgets.pair, 0, 1, 1, 9)
                    + 5.0 * score_recurrence(kb, gadgets.rec, 0, 1, 1, 9))
        assert got == pytest.approx(expected, rel=1e-9)

    def test_cold_start_equals_base(self):
        kb, model, gadgets = self.build()
        iv = TimeInterval(4, 4)
        got = score_timeplex(kb, model, gadgets, 5, 1, 6, iv, 3.0, 5.0)
        assert got == pytest.approx(score_tx_interval(model, 5, 1, 6, iv))


class TestConstraintMining:
    def ordered_kb(self, n_entities=150, flip_every=None, gap=20):
        rows = []
        for e in range(n_entities):
            t1 = 2 + (e % 17)
            t2 = t1 + gap
            if flip_every and e % flip_every == 0:
                t1, t2 = t2, t1
            rows.append((e, 0, n_entities, t1, t1))
            rows.append((e, 1, n_entities + 1, t2, t2))
        return make_kb(rows, n_entities=n_entities + 2, n_relations=2, n_instants=45)

    def test_planted_ordering_recovered(self):
        kb = self.ordered_kb()
        got = mine_ordering_constraints(kb, confidence=0.99, min_support=100)
        assert [(c.earlier, c.later) for c in got] == [(0, 1)]
        assert got[0].support == 150
        assert got[0].confidence == 1.0

    def test_98_percent_ordering_rejected_at_99(self):
        kb = self.ordered_kb(flip_every=50)  # 3 of 150 inverted -> 98%
        got = mine_ordering_constraints(kb, confidence=0.99, min_support=100)
        assert got == []

    def test_support_gate(self):
        kb = self.ordered_kb(n_entities=99)
        assert mine_ordering_constraints(kb, confidence=0.99, min_support=100) == []
        assert len(mine_ordering_constraints(kb, confidence=0.99, min_support=99)) == 1

    def test_antisymmetric_above_half(self):
        rng = np.random.default_rng(5)
        rows = []
        for e in range(120):
            t1, t2 = sorted(rng.integers(0, 40, size=2))
            if rng.random() < 0.5:
                t1, t2 = t2, t1
            rows.append((e, 0, 120, int(t1), int(t1)))
            rows.append((e, 1, 121, int(t2), int(t2)))
        kb = make_kb(rows, n_entities=122, n_relations=2, n_instants=45)
        got = mine_ordering_constraints(kb, confidence=0.51, min_support=10)
        pairs = {(c.earlier, c.later) for c in got}
        assert not ({(0, 1), (1, 0)} <= pairs)
