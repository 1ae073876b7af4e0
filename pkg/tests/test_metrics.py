from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gestpipe.metrics import (
    EvalPair,
    bleu4,
    evaluate_corpus,
    rouge_l,
    rouge_l_best,
    tokenize,
)

from oracles import bleu4_oracle, rouge_l_oracle

VOCAB = ["the", "cat", "dog", "sat", "ran", "on", "mat", "a", "big", "red"]


def random_sentence(rng: random.Random, min_len=1, max_len=18) -> list[str]:
    return [rng.choice(VOCAB) for _ in range(rng.randint(min_len, max_len))]


class TestTokenize:
    def test_punctuation_split_and_lowercase(self):
        assert tokenize("The cat, sat!") == ["the", "cat", ",", "sat", "!"]

    def test_trailing_whitespace_invariance(self):
        assert tokenize("the cat  ") == tokenize("the cat")


class TestBleu4:
    def test_identity_exact_one(self):
        tokens = "the cat sat on the mat".split()
        assert bleu4(tokens, [tokens]) == 1.0

    def test_zero_unigram_overlap(self):
        assert bleu4("a b c d".split(), ["x y z w".split()]) == 0.0

    def test_empty_candidate(self):
        assert bleu4([], ["the cat".split()]) == 0.0

    def test_cat_sat_fixture(self):
        candidate = "the cat sat on the mat".split()
        reference = "the cat is on the mat".split()
        # p1=5/6, p2=3/5, p3=1/4, p4=(0+1)/(3+1); bp=1 -> (1/32)^(1/4)
        expected = 0.4204482076268573
        value = bleu4(candidate, [reference])
        assert value == pytest.approx(expected, abs=1e-4)
        assert value == pytest.approx(bleu4_oracle(candidate, [reference]), abs=1e-4)

    def test_multi_reference_clipping(self):
        candidate = "the the the".split()
        single = bleu4(candidate, ["the cat".split()])
        double = bleu4(candidate, ["the cat".split(), "the the dog".split()])
        assert double > single  # second reference allows a higher clip count

    def test_closest_reference_length_tie_prefers_shorter(self):
        candidate = "a b c".split()
        short_ref = "a b".split()
        long_ref = "a b c d".split()
        # tie in |r - m|: brevity penalty uses the shorter (r=2 -> bp=1)
        with_both = bleu4(candidate, [short_ref, long_ref])
        with_long = bleu4(candidate, [long_ref])
        assert with_both > with_long

    def test_oracle_agreement_randomized(self):
        rng = random.Random(13)
        for _ in range(60):
            candidate = random_sentence(rng)
            references = [random_sentence(rng) for _ in range(rng.randint(1, 3))]
            assert bleu4(candidate, references) == pytest.approx(
                bleu4_oracle(candidate, references), abs=1e-4
            )

    @settings(max_examples=80, deadline=None)
    @given(
        st.lists(st.sampled_from(VOCAB), min_size=0, max_size=15),
        st.lists(st.lists(st.sampled_from(VOCAB), min_size=1, max_size=15), min_size=1, max_size=3),
    )
    def test_bounded(self, candidate, references):
        assert 0.0 <= bleu4(candidate, references) <= 1.0


class TestRougeL:
    def test_identity(self):
        tokens = "the cat sat".split()
        assert rouge_l(tokens, tokens) == (1.0, 1.0, 1.0)

    def test_disjoint(self):
        assert rouge_l("a b".split(), "x y".split()) == (0.0, 0.0, 0.0)

    def test_manual_lcs_fixture(self):
        p, r, f1 = rouge_l("the cat sat".split(), "the cat ran".split())
        assert (p, r, f1) == pytest.approx((2 / 3, 2 / 3, 2 / 3))

    def test_empty_inputs(self):
        assert rouge_l([], "a".split()) == (0.0, 0.0, 0.0)
        assert rouge_l("a".split(), []) == (0.0, 0.0, 0.0)

    def test_f1_is_one_iff_identical(self):
        rng = random.Random(17)
        for _ in range(60):
            a = random_sentence(rng)
            b = random_sentence(rng)
            f1 = rouge_l(a, b)[2]
            if a == b:
                assert f1 == 1.0
            else:
                assert f1 < 1.0

    def test_multi_reference_max_f1(self):
        candidate = "the cat sat".split()
        refs = ["dog ran".split(), "the cat sat".split()]
        assert rouge_l_best(candidate, refs) == (1.0, 1.0, 1.0)

    def test_oracle_agreement_randomized(self):
        rng = random.Random(19)
        for _ in range(60):
            a, b = random_sentence(rng), random_sentence(rng)
            assert rouge_l(a, b) == pytest.approx(rouge_l_oracle(a, b), abs=1e-6)


class TestEvaluateCorpus:
    def test_single_pair_report(self):
        pair = EvalPair("the cat sat", ("the cat sat",), "vid1")
        report = evaluate_corpus([pair])
        assert len(report.rows) == 1
        row = report.rows[0]
        assert row.bleu4 == 1.0 and row.rouge_f1 == 1.0
        assert report.overall.bleu4 == 1.0

    def test_mean_arithmetic(self):
        pairs = [
            EvalPair("a b", ("a b",), "v1"),  # f1 = 1.0
            EvalPair("a b c d", ("x y z w",), "v2"),  # f1 = 0.0
        ]
        report = evaluate_corpus(pairs)
        assert report.overall.rouge_f1 == pytest.approx(0.5)

    def test_empty_corpus(self):
        report = evaluate_corpus([])
        assert report.rows == [] and report.overall is None
        assert "no pairs" in report.to_text()
        assert report.to_tsv().startswith("video_id\t")

    def test_grouping(self):
        pairs = [
            EvalPair("a b", ("a b",), "v1"),
            EvalPair("c d", ("c d",), "v2"),
            EvalPair("e f", ("x y",), "v3"),
        ]
        report = evaluate_corpus(pairs, {"v1": "ds1", "v2": "ds2", "v3": "ds2"})
        assert set(report.group_means) == {"ds1", "ds2"}
        assert report.group_means["ds2"].count == 2

    def test_rows_sorted_deterministically(self):
        pairs = [EvalPair("a", ("a",), vid) for vid in ("z", "a", "m")]
        report = evaluate_corpus(pairs)
        assert [r.video_id for r in report.rows] == ["a", "m", "z"]

    def test_references_required(self):
        with pytest.raises(ValueError, match="no references"):
            EvalPair("text", (), "v1")

    def test_tsv_shape(self):
        report = evaluate_corpus([EvalPair("a b", ("a b",), "v1")])
        lines = report.to_tsv().strip().splitlines()
        assert lines[0].split("\t") == ["video_id", "group", "bleu4", "rouge_p", "rouge_r", "rouge_f1"]
        assert len(lines) == 2
