"""
Tests for span overlap, label metrics and the metrics report.
"""
import json
import random

import pytest

from core.corpus import DatasetSplit, IntentSpanTriplet, MultiIntentExample
from core.errors import EvaluationError, TaxonomyMismatchError
from core.evaluator import (
    DEFAULT_THRESHOLDS,
    MetricsReport,
    accuracy,
    evaluate,
    macro_f1,
    render_report,
    score_predictions,
    span_overlap,
    threshold_key,
)
from core.taxonomy import Taxonomy

TAXONOMY = Taxonomy("abcd", {"A": ["a1", "a2"], "B": ["b1", "b2"]})


def _triplet(start, end, fine, primary=False):
    return IntentSpanTriplet(start, end, TAXONOMY.coarse_of(fine), fine, primary)


def _example(index, first, second):
    """Four tokens: slot 1 covers tokens 0-1 and slot 2 covers tokens 2-3."""
    return MultiIntentExample(
        id=f"ex-{index}",
        tokens=("w0", "w1", "w2", "w3"),
        triplets=(_triplet(0, 1, first, True), _triplet(2, 3, second)),
    )


@pytest.fixture
def golds():
    return [
        _example(0, "a1", "b1"),
        _example(1, "a2", "b2"),
        _example(2, "b1", "a1"),
        _example(3, "b2", "a2"),
    ]


def _oracle_macro_f1(preds, golds, space):
    scores = []
    for label in space:
        tp = sum(p == label and g == label for p, g in zip(preds, golds))
        fp = sum(p == label and g != label for p, g in zip(preds, golds))
        fn = sum(p != label and g == label for p, g in zip(preds, golds))
        scores.append(2 * tp / (2 * tp + fp + fn) if tp else 0.0)
    return sum(scores) / len(scores)


@pytest.mark.unit
class TestSpanOverlap:
    """Jaccard overlap of inclusive spans."""

    def test_partial_overlap(self):
        assert span_overlap((2, 5), (3, 6)) == pytest.approx(0.6)

    def test_symmetric(self):
        assert span_overlap((3, 6), (2, 5)) == span_overlap((2, 5), (3, 6))

    def test_identical_spans(self):
        assert span_overlap((4, 4), (4, 4)) == 1.0

    def test_disjoint_spans(self):
        assert span_overlap((0, 1), (2, 3)) == 0.0

    def test_accepts_triplets(self):
        assert span_overlap(_triplet(0, 1, "a1"), _triplet(1, 1, "a1")) == 0.5


@pytest.mark.unit
class TestLabelMetrics:
    """Accuracy and macro-F1."""

    def test_macro_f1_two_classes(self):
        assert macro_f1(["A", "B", "B", "B"], ["A", "A", "B", "B"], ["A", "B"]) == pytest.approx(0.73333333, abs=1e-6)

    def test_absent_labels_count_as_zero(self):
        assert macro_f1(["A", "A"], ["A", "A"], ["A", "B"]) == pytest.approx(0.5)

    def test_accuracy(self):
        assert accuracy(["A", "B", "B", "B"], ["A", "A", "B", "B"]) == 0.75

    def test_empty_lists(self):
        assert accuracy([], []) == 0.0
        assert macro_f1([], [], ["A"]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(EvaluationError):
            accuracy(["A"], [])

    def test_macro_f1_ignores_example_order(self):
        preds, golds = ["A", "B", "C", "A", "B"], ["A", "C", "C", "B", "B"]
        order = [3, 0, 4, 1, 2]
        shuffled = macro_f1([preds[i] for i in order], [golds[i] for i in order], "ABC")
        assert shuffled == pytest.approx(macro_f1(preds, golds, "ABC"))

    def test_random_instances_match_counting_oracle(self):
        rng = random.Random(0)
        for _ in range(100):
            space = [f"L{i}" for i in range(rng.randint(1, 5))]
            n = rng.randint(1, 10)
            golds = [rng.choice(space) for _ in range(n)]
            preds = [rng.choice(space) for _ in range(n)]
            assert macro_f1(preds, golds, space) == pytest.approx(_oracle_macro_f1(preds, golds, space), abs=1e-12)
            assert accuracy(preds, golds) == pytest.approx(sum(p == g for p, g in zip(preds, golds)) / n, abs=1e-12)


@pytest.mark.unit
class TestScorePredictions:
    """Slot-aligned scoring of decoded triplets."""

    def test_echoing_gold_scores_one_everywhere(self, golds):
        report = score_predictions(golds, [example.triplets for example in golds], TAXONOMY)
        for value in report.flatten().values():
            assert value == pytest.approx(1.0) or value == 4.0
        assert sorted(report.thresholded) == [threshold_key(t) for t in DEFAULT_THRESHOLDS]

    def test_primary_and_average_views(self, golds):
        predictions = [
            (_triplet(0, 1, "a1", True), _triplet(2, 3, "b1")),
            (_triplet(0, 1, "a2", True), _triplet(2, 3, "a1")),
            (_triplet(0, 1, "b1", True), _triplet(2, 3, "a1")),
            (_triplet(0, 1, "b2", True), _triplet(2, 3, "b1")),
        ]
        report = score_predictions(golds, predictions, TAXONOMY, thresholds=[])
        assert report.fine["primary"]["accuracy"] == 1.0
        assert report.fine["average"]["accuracy"] == pytest.approx((1.0 + 0.5) / 2)
        assert report.coarse["average"]["accuracy"] == pytest.approx((1.0 + 0.5) / 2)
        assert report.thresholded == {}

    def test_threshold_gates_on_span_and_label(self, golds):
        predictions = [example.triplets for example in golds]
        predictions[0] = (_triplet(0, 0, "a1", True), predictions[0][1])
        predictions[1] = (_triplet(0, 1, "b1", True), predictions[1][1])
        report = score_predictions(golds, predictions, TAXONOMY, thresholds=[0.5, 0.6])
        assert report.thresholded["0.50"]["fine"]["primary"] == 0.75
        assert report.thresholded["0.60"]["fine"]["primary"] == 0.5
        assert report.fine["primary"]["accuracy"] == 0.75

    def test_thresholded_accuracy_is_monotone(self, golds):
        rng = random.Random(3)
        labels = TAXONOMY.fine_labels
        predictions = []
        for _ in golds:
            first = _triplet(rng.randint(0, 1), 1, rng.choice(labels), True)
            second = _triplet(2, rng.randint(2, 3), rng.choice(labels))
            predictions.append((first, second))
        thresholds = [0.0, 0.25, 0.5, 0.75, 1.0]
        report = score_predictions(golds, predictions, TAXONOMY, thresholds)
        for granularity in ("coarse", "fine"):
            for view in ("primary", "average"):
                series = [report.thresholded[threshold_key(t)][granularity][view] for t in thresholds]
                assert series == sorted(series, reverse=True)
                assert series[0] == pytest.approx(getattr(report, granularity)[view]["accuracy"])

    def test_primary_confusion(self, golds):
        predictions = [example.triplets for example in golds]
        predictions[0] = (_triplet(0, 1, "a2", True), predictions[0][1])
        report = score_predictions(golds, predictions, TAXONOMY, thresholds=[])
        assert report.confusion["fine"]["a1"] == {"a2": 1}
        assert report.confusion["fine"]["a2"] == {"a2": 1}
        assert report.confusion["coarse"] == {"A": {"A": 2}, "B": {"B": 2}}

    def test_intent_count_mismatch(self, golds):
        with pytest.raises(EvaluationError, match="intent counts differ"):
            score_predictions(golds, [example.triplets[:1] for example in golds], TAXONOMY)

    def test_threshold_out_of_range(self, golds):
        with pytest.raises(EvaluationError, match="threshold"):
            score_predictions(golds, [example.triplets for example in golds], TAXONOMY, thresholds=[1.5])


    def test_colliding_threshold_keys(self, golds):
        with pytest.raises(EvaluationError, match="both report as 0.50"):
            score_predictions(golds, [example.triplets for example in golds], TAXONOMY, thresholds=[0.501, 0.504])

    def test_repeated_threshold_is_reported_once(self, golds):
        report = score_predictions(golds, [example.triplets for example in golds], TAXONOMY, thresholds=[0.5, 0.5])
        assert list(report.thresholded) == ["0.50"]

    def test_per_slot_scores_for_three_intents(self):
        taxonomy = Taxonomy("abc", {"A": ["a1", "a2"], "B": ["b1", "b2"], "C": ["c1", "c2"]})

        def row(index, fines):
            triplets = tuple(
                IntentSpanTriplet(2 * k, 2 * k + 1, taxonomy.coarse_of(fine), fine, k == 0) for k, fine in enumerate(fines)
            )
            return MultiIntentExample(id=f"ex-{index}", tokens=tuple(f"w{i}" for i in range(6)), triplets=triplets)

        golds = [row(0, ["a1", "b1", "c1"]), row(1, ["b2", "c2", "a2"])]
        predictions = [row(0, ["a1", "b2", "a1"]).triplets, row(1, ["b2", "c2", "b1"]).triplets]
        report = score_predictions(golds, predictions, taxonomy, thresholds=[])
        assert [slot["accuracy"] for slot in report.per_slot["fine"]] == [1.0, 0.5, 0.0]
        assert [slot["accuracy"] for slot in report.per_slot["coarse"]] == [1.0, 1.0, 0.0]
        assert report.per_slot["fine"][0]["macro_f1"] == pytest.approx(2 / 6)
        assert report.fine["average"]["accuracy"] == pytest.approx(0.5)
        assert report.coarse["average"]["accuracy"] == pytest.approx(2 / 3)
        assert report.fine["average"]["macro_f1"] == pytest.approx(
            sum(slot["macro_f1"] for slot in report.per_slot["fine"]) / 3
        )
        flat = report.flatten()
        assert flat["per_slot.fine.2.accuracy"] == 0.5
        assert flat["per_slot.coarse.3.accuracy"] == 0.0


@pytest.mark.unit
class TestMetricsReport:
    """Report serialization."""

    def test_schema_and_flatten(self, golds):
        report = score_predictions(golds, [example.triplets for example in golds], TAXONOMY, thresholds=[0.5])
        data = report.to_dict()
        assert set(data) == {"n_examples", "coarse", "fine", "thresholded", "confusion", "per_slot"}
        assert len(data["per_slot"]["fine"]) == 2
        assert set(data["coarse"]) == {"primary", "average"}
        assert set(data["coarse"]["primary"]) == {"accuracy", "macro_f1"}
        assert set(data["thresholded"]["0.50"]) == {"coarse", "fine"}
        flat = report.flatten()
        assert flat["thresholded.0.50.fine.average"] == 1.0
        assert flat["coarse.primary.macro_f1"] == 1.0

    def test_written_json_reloads(self, golds, tmp_path):
        report = score_predictions(golds, [example.triplets for example in golds], TAXONOMY)
        path = tmp_path / "metrics.json"
        render_report(report, path)
        reloaded = MetricsReport.from_dict(json.loads(path.read_text(encoding="utf-8")))
        assert reloaded == report


@pytest.mark.unit
class TestEvaluate:
    """evaluate() with a model."""

    def test_report_on_toy_dev(self, tiny_model, toy_splits):
        report = evaluate(tiny_model, toy_splits["dev"], thresholds=[0.5, 0.9])
        assert report.n_examples == len(toy_splits["dev"])
        assert sorted(report.thresholded) == ["0.50", "0.90"]
        for value in report.flatten().values():
            assert value >= 0.0

    def test_unknown_label_in_split(self, tiny_model):
        example = MultiIntentExample(
            id="x",
            tokens=("a", "b"),
            triplets=(IntentSpanTriplet(0, 0, "Z", "zzz", True), IntentSpanTriplet(1, 1, "Z", "yyy")),
        )
        with pytest.raises(TaxonomyMismatchError, match="does not fit"):
            evaluate(tiny_model, DatasetSplit("test", [example]))

    def test_other_taxonomy(self, tiny_model, toy_splits):
        with pytest.raises(TaxonomyMismatchError, match="hash mismatch"):
            evaluate(tiny_model, toy_splits["dev"], taxonomy=TAXONOMY)

    def test_slot_count_mismatch(self, tiny_model, single_splits):
        with pytest.raises(EvaluationError, match="2 slots"):
            evaluate(tiny_model, single_splits["test"])
