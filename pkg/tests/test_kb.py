"""Dataset parsing, interval algebra and fold handling."""

import numpy as np
import pytest

from tkbc.kb import (DatasetConfig, DatasetParseError, Fact, KbError,
                     NEG_UNBOUNDED, POS_UNBOUNDED, TimeInterval, TimeRangeError,
                     add_inverse_facts, enumerate_instant_facts, interval_hull,
                     interval_intersection, interval_union_volume,
                     interval_volume, parse_dataset, sample_instant,
                     write_dataset)


def write_lines(path, name, lines):
    (path / name).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def make_dataset(tmp_path, train, valid=(), test=(), **cfg):
    write_lines(tmp_path, "train.txt", train)
    write_lines(tmp_path, "valid.txt", valid)
    write_lines(tmp_path, "test.txt", test)
    return DatasetConfig(path=tmp_path, **cfg)


class TestParsing:
    def test_basic_year_interval(self, tmp_path):
        kb = parse_dataset(make_dataset(tmp_path, ["A\tr\tB\t1992\t2003"]))
        fact = kb.train[0]
        vocab = kb.vocabulary
        assert vocab.entity_names[fact.subject] == "A"
        assert vocab.entity_names[fact.object] == "B"
        assert vocab.instant_to_label(fact.interval.begin) == 1992
        assert vocab.instant_to_label(fact.interval.end) == 2003
        assert kb.n_instants == 2003 - 1992 + 1

    def test_missing_end_is_unbounded(self, tmp_path):
        kb = parse_dataset(make_dataset(tmp_path, ["A\tr\tB\t1995\t-",
                                                   "A\tr\tC\t1990\t1999"]))
        assert kb.train[0].interval.end == POS_UNBOUNDED
        assert kb.train[0].interval.begin == kb.vocabulary.label_to_instant(1995)

    def test_missing_begin_is_unbounded(self, tmp_path):
        kb = parse_dataset(make_dataset(tmp_path, ["A\tr\tB\t-\t1995",
                                                   "A\tr\tC\t1990\t1999"]))
        assert kb.train[0].interval.begin == NEG_UNBOUNDED

    def test_wrong_column_count_names_line(self, tmp_path):
        cfg = make_dataset(tmp_path, ["A\tr\tB\t1992\t2003", "A\tr\tB\t1992"])
        with pytest.raises(DatasetParseError, match=r"train\.txt:2"):
            parse_dataset(cfg)

    def test_year_out_of_range(self, tmp_path):
        cfg = make_dataset(tmp_path, ["A\tr\tB\t123456\t123457"])
        with pytest.raises(TimeRangeError):
            parse_dataset(cfg)

    def test_begin_after_end_rejected(self, tmp_path):
        cfg = make_dataset(tmp_path, ["A\tr\tB\t2003\t1992"])
        with pytest.raises(DatasetParseError, match="begin"):
            parse_dataset(cfg)

    def test_day_granularity(self, tmp_path):
        cfg = make_dataset(tmp_path, ["A\tr\tB\t2014-01-01\t2014-01-05"],
                           granularity="day")
        kb = parse_dataset(cfg)
        assert kb.train[0].interval.volume() == 5

    def test_instant_column_sets_begin_equal_end(self, tmp_path):
        cfg = make_dataset(tmp_path, ["A\tr\tB\t2014-01-03", "A\tr\tC\t2014-01-07"],
                           granularity="day",
                           columns=("subject", "relation", "object", "time"))
        kb = parse_dataset(cfg)
        assert all(f.interval.begin == f.interval.end for f in kb.train)

    def test_vocabulary_covers_all_folds(self, tmp_path):
        cfg = make_dataset(tmp_path, ["A\tr\tB\t1990\t1991"],
                           valid=["C\tr\tA\t1992\t1993"],
                           test=["D\tq\tC\t1994\t1995"])
        kb = parse_dataset(cfg)
        assert kb.vocabulary.n_entities == 4
        assert kb.vocabulary.n_relations == 2
        assert kb.n_instants == 6

    def test_round_trip_preserves_fact_multisets(self, tmp_path):
        cfg = make_dataset(
            tmp_path,
            ["A\tr\tB\t1992\t2003", "B\tq\tC\t1990\t-", "A\tq\tC\t-\t1999",
             "A\tr\tB\t1992\t2003"],
            valid=["C\tr\tA\t1995\t1995"],
            test=["B\tr\tA\t1991\t1992"])
        kb = parse_dataset(cfg)
        out = tmp_path / "rt"
        write_dataset(kb, out)
        kb2 = parse_dataset(DatasetConfig(path=out))
        for fold in ("train", "valid", "test"):
            def key(k, f):
                v = k.vocabulary
                return (v.entity_names[f.subject], v.relation_names[f.relation],
                        v.entity_names[f.object], f.interval.begin, f.interval.end)
            assert sorted(key(kb, f) for f in kb.folds[fold]) == \
                sorted(key(kb2, f) for f in kb2.folds[fold])


class TestInverseFacts:
    def test_doubles_facts_and_relations(self, tmp_path):
        kb = parse_dataset(make_dataset(tmp_path, ["A\tr\tB\t1990\t1991"]))
        aug = add_inverse_facts(kb)
        assert len(aug.train) == 2 * len(kb.train)
        assert aug.vocabulary.n_relations == 2 * kb.vocabulary.n_relations
        inv = aug.train[-1]
        orig = kb.train[0]
        assert (inv.subject, inv.object) == (orig.object, orig.subject)
        assert inv.interval == orig.interval

    def test_yago_shaped_relation_count(self, tmp_path):
        lines = [f"E{i}\trel{i}\tF{i}\t1990\t1991" for i in range(10)]
        kb = add_inverse_facts(parse_dataset(make_dataset(tmp_path, lines)))
        assert kb.vocabulary.n_relations == 20

    def test_involution(self, tmp_path):
        lines = [f"A\tr{i}\tB\t1990\t1991" for i in range(3)]
        kb = add_inverse_facts(parse_dataset(make_dataset(tmp_path, lines)))
        vocab = kb.vocabulary
        for rid in range(vocab.n_relations):
            assert vocab.inverse_relation(vocab.inverse_relation(rid)) == rid

    def test_double_augmentation_rejected(self, tmp_path):
        kb = add_inverse_facts(parse_dataset(make_dataset(tmp_path, ["A\tr\tB\t1990\t1991"])))
        with pytest.raises(KbError):
            add_inverse_facts(kb)


class TestIntervalAlgebra:
    def test_volume_examples(self):
        assert interval_volume(TimeInterval(2000, 2003)) == 4
        assert interval_volume(TimeInterval(5, 5)) == 1
        assert interval_volume(TimeInterval(1, 40)) == 40

    def test_volume_requires_bounded(self):
        with pytest.raises(KbError):
            interval_volume(TimeInterval(3, POS_UNBOUNDED))

    def test_hull(self):
        assert interval_hull(TimeInterval(1, 2), TimeInterval(30, 40)) == TimeInterval(1, 40)

    def test_intersection(self):
        inter = interval_intersection(TimeInterval(10, 20), TimeInterval(15, 25))
        assert inter == TimeInterval(15, 20)
        # oracle: count the shared integers directly
        assert inter.volume() == len([t for t in range(15, 26) if 10 <= t <= 20])
        assert interval_intersection(TimeInterval(1, 2), TimeInterval(3, 4)) is None

    def test_union_volume(self):
        assert interval_union_volume(TimeInterval(10, 20), TimeInterval(15, 25)) == 16
        assert interval_union_volume(TimeInterval(1, 2), TimeInterval(30, 40)) == 13

    def test_hull_dominates_union_dominates_intersection(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            a = sorted(rng.integers(0, 60, size=2))
            b = sorted(rng.integers(0, 60, size=2))
            t1, t2 = TimeInterval(*map(int, a)), TimeInterval(*map(int, b))
            inter = interval_intersection(t1, t2)
            vol_inter = inter.volume() if inter else 0
            assert interval_hull(t1, t2).volume() >= interval_union_volume(t1, t2) >= vol_inter


class TestEnumerationAndSampling:
    def test_enumerate_simple(self):
        fact = Fact(0, 0, 1, TimeInterval(3, 5))
        rows = enumerate_instant_facts(fact, 10)
        assert [t for *_, t in rows] == [3, 4, 5]

    def test_enumerate_clips_unbounded(self):
        fact = Fact(0, 0, 1, TimeInterval(7, POS_UNBOUNDED))
        rows = enumerate_instant_facts(fact, 10)
        assert [t for *_, t in rows] == [7, 8, 9]

    def test_enumerate_degenerate(self):
        assert len(enumerate_instant_facts(Fact(0, 0, 1, TimeInterval(7, 7)), 10)) == 1

    def test_enumerate_length_matches_clipped_volume(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            lo = int(rng.integers(-5, 12))
            hi = lo + int(rng.integers(0, 15))
            fact = Fact(0, 0, 1, TimeInterval(lo, hi))
            clipped = fact.interval.clip(0, 9)
            expected = clipped.volume() if clipped else 0
            assert len(enumerate_instant_facts(fact, 10)) == expected

    def test_sample_singleton(self):
        rng = np.random.default_rng(0)
        fact = Fact(0, 0, 1, TimeInterval(7, 7))
        assert all(sample_instant(fact, 10, rng) == 7 for _ in range(20))

    def test_sample_uniform_law(self):
        rng = np.random.default_rng(0)
        fact = Fact(0, 0, 1, TimeInterval(0, 9))
        draws = np.array([sample_instant(fact, 10, rng) for _ in range(100_000)])
        freqs = np.bincount(draws, minlength=10) / draws.size
        assert np.all(np.abs(freqs - 0.1) < 0.01)

    def test_sample_clips_unbounded(self):
        rng = np.random.default_rng(1)
        fact = Fact(0, 0, 1, TimeInterval(6, POS_UNBOUNDED))
        draws = {sample_instant(fact, 10, rng) for _ in range(200)}
        assert draws == {6, 7, 8, 9}

    def test_sample_empty_clip_errors(self):
        rng = np.random.default_rng(1)
        with pytest.raises(KbError):
            sample_instant(Fact(0, 0, 1, TimeInterval(50, 60)), 10, rng)
