import math

import numpy as np
import pytest

from legalner.corpus import EntitySpan, TagSet, bio_to_spans, spans_to_bio, tokenize
from legalner.corpus import LabeledSentence
from legalner.errors import ShapeError
from legalner.evaluation import (
    ClassMetrics,
    classification_report,
    format_report,
    match_spans,
    token_accuracy,
)


def span(label, start, end):
    return EntitySpan(label, start, end)


class TestMatchSpans:
    def test_exact_match_is_tp(self):
        counts = match_spans([span("COURT", 1, 5)], [span("COURT", 1, 5)])
        assert counts == {"COURT": (1, 0, 0)}

    def test_boundary_error_counts_both_ways(self):
        counts = match_spans([span("COURT", 1, 5)], [span("COURT", 1, 4)])
        assert counts == {"COURT": (0, 1, 1)}

    def test_label_confusion(self):
        counts = match_spans(
            [span("DATE", 0, 1), span("COURT", 2, 4)],
            [span("DATE", 0, 1), span("JUDGE", 2, 4)],
        )
        assert counts["DATE"] == (1, 0, 0)
        assert counts["COURT"] == (0, 0, 1)
        assert counts["JUDGE"] == (0, 1, 0)

    def test_relaxed_overlap_credits_match(self):
        gold = [span("COURT", 1, 5)]
        assert match_spans(gold, [span("COURT", 2, 4)],
                           relaxed=True) == {"COURT": (1, 0, 0)}
        assert match_spans(gold, [span("COURT", 5, 6)],
                           relaxed=True) == {"COURT": (0, 1, 1)}

    def test_relaxed_gold_matched_at_most_once(self):
        gold = [span("DATE", 0, 4)]
        counts = match_spans(gold, [span("DATE", 0, 2), span("DATE", 2, 4)],
                             relaxed=True)
        assert counts == {"DATE": (1, 1, 0)}


class TestClassificationReport:
    def test_hand_derived_two_class_example(self):
        # Class A: tp=1 fp=1 fn=0 -> P=0.5, R=1, F1=2/3
        # Class B: tp=1 fp=0 fn=1 -> P=1, R=0.5, F1=2/3
        # micro: tp=2 fp=1 fn=1 -> P=R=F1=2/3; macro=2/3;
        # weighted (supports 1 and 2): 2/3.
        ts = TagSet(("A", "B"))
        pairs = [
            ([span("A", 0, 1)], [span("A", 0, 1), span("A", 2, 3)]),
            ([span("B", 0, 1), span("B", 2, 3)], [span("B", 0, 1)]),
        ]
        report = classification_report(pairs, ts)
        a, b = report.per_class
        assert (a.tp, a.fp, a.fn) == (1, 1, 0)
        assert a.precision == 0.5 and a.recall == 1.0
        assert a.f1 == pytest.approx(2 / 3)
        assert (b.tp, b.fp, b.fn) == (1, 0, 1)
        assert b.f1 == pytest.approx(2 / 3)
        assert report.micro_precision == pytest.approx(2 / 3)
        assert report.micro_recall == pytest.approx(2 / 3)
        assert report.micro_f1 == pytest.approx(2 / 3)
        assert report.macro_f1 == pytest.approx(2 / 3)
        assert report.weighted_f1 == pytest.approx(2 / 3)
        assert a.support == 1 and b.support == 2

    def test_perfect_predictions(self):
        ts = TagSet(("A",))
        pairs = [([span("A", 0, 2)], [span("A", 0, 2)])]
        report = classification_report(pairs, ts)
        assert report.micro_f1 == report.macro_f1 == report.weighted_f1 == 1.0
        assert report.per_class[0].precision == 1.0

    def test_empty_predictions_are_all_zero_never_nan(self):
        ts = TagSet(("A", "B"))
        pairs = [([span("A", 0, 1)], []), ([span("B", 1, 2)], [])]
        report = classification_report(pairs, ts)
        for m in report.per_class:
            assert m.precision == 0.0 and m.recall == 0.0 and m.f1 == 0.0
            assert not math.isnan(m.f1)
        assert report.micro_f1 == 0.0
        assert report.weighted_f1 == 0.0

    def test_all_14_classes_always_reported(self):
        report = classification_report([], TagSet.default())
        assert [m.label for m in report.per_class] == list(
            TagSet.default().classes)

    def test_unknown_class_rejected(self):
        ts = TagSet(("A",))
        with pytest.raises(ValueError, match="ZZZ"):
            classification_report([([], [span("ZZZ", 0, 1)])], ts)

    def test_permutation_invariance(self):
        ts = TagSet(("A", "B"))
        rng = np.random.default_rng(0)
        pairs = []
        for _ in range(12):
            gold = [span(("A", "B")[int(rng.integers(2))], 0, 1)]
            pred = [span(("A", "B")[int(rng.integers(2))], 0, 1)]
            pairs.append((gold, pred))
        r1 = classification_report(pairs, ts)
        r2 = classification_report(pairs[::-1], ts)
        assert r1 == r2

    def test_support_equals_gold_span_count(self):
        ts = TagSet(("A", "B"))
        pairs = [
            ([span("A", 0, 1), span("A", 2, 3)], []),
            ([span("B", 0, 2)], [span("A", 0, 1)]),
        ]
        report = classification_report(pairs, ts)
        by_label = {m.label: m for m in report.per_class}
        assert by_label["A"].support == 2
        assert by_label["B"].support == 1

    def test_bio_round_trip_prediction_scores_one(self):
        ts = TagSet.default()
        tokens = tuple(tokenize("the Supreme Court of India sat on 4 May 1990"))
        s = LabeledSentence(tokens, (span("COURT", 1, 5), span("DATE", 7, 10)))
        recovered = bio_to_spans(spans_to_bio(s, ts), ts)
        report = classification_report([(list(s.spans), recovered)], ts)
        assert report.micro_f1 == 1.0


class TestTokenAccuracy:
    def test_identical(self):
        assert token_accuracy([[1, 2, 3]], [[1, 2, 3]]) == 1.0

    def test_partial(self):
        gold = [[1, 1, 1, 0, 0, 0, 0, 0, 0, 0]]
        pred = [[0] * 10]
        assert token_accuracy(gold, pred) == pytest.approx(0.7)

    def test_empty_dataset_is_undefined(self):
        with pytest.raises(ValueError):
            token_accuracy([], [])

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            token_accuracy([[1, 2]], [[1]])

    def test_pools_over_sentences(self):
        assert token_accuracy([[1], [0, 0, 0]], [[1], [0, 1, 1]]) == 0.5


class TestFormatting:
    def test_text_table_contains_all_numbers(self):
        ts = TagSet(("A",))
        report = classification_report(
            [([span("A", 0, 1)], [span("A", 0, 1)])], ts)
        text = format_report(report)
        assert "A" in text and "1.0000" in text
        assert "Micro F1" in text and "Weighted F1" in text and "Macro Avg" in text

    def test_class_metrics_zero_convention(self):
        m = ClassMetrics.from_counts("X", 0, 0, 0)
        assert m.precision == m.recall == m.f1 == 0.0
        assert m.support == 0
