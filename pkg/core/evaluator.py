"""
Scoring of predicted intent triplets against gold examples.

Slot k of a prediction is always compared with slot k of the gold example.
The ``primary`` view looks at slot 1 only; the ``average`` view is the
unweighted mean of the per-slot scores. Thresholded accuracy counts a slot as
correct when its label matches and its span overlaps the gold span by at least
the threshold (Jaccard over token positions).
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from sklearn.metrics import accuracy_score, confusion_matrix, f1_score

from core.corpus import DatasetSplit, IntentSpanTriplet, MultiIntentExample, validate_split
from core.errors import EvaluationError, ExampleValidationError, TaxonomyMismatchError, UnknownLabelError
from core.logger import run_logger
from core.model import IntentModel
from core.taxonomy import Taxonomy
from utils.helpers import FileHelper

PathLike = Union[str, Path]
Span = Tuple[int, int]

DEFAULT_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9)
GRANULARITIES = ("coarse", "fine")
VIEWS = ("primary", "average")
# never equal to a real label; marks a label hit whose span misses the threshold
SPAN_MISS = "\x00span-miss"


def _as_span(span: Union[Span, IntentSpanTriplet]) -> Span:
    if isinstance(span, IntentSpanTriplet):
        return span.start, span.end
    return span


def span_overlap(pred: Union[Span, IntentSpanTriplet], gold: Union[Span, IntentSpanTriplet]) -> float:
    (p_start, p_end), (g_start, g_end) = _as_span(pred), _as_span(gold)
    intersection = max(0, min(p_end, g_end) - max(p_start, g_start) + 1)
    union = (p_end - p_start + 1) + (g_end - g_start + 1) - intersection
    return intersection / union


def macro_f1(preds: Sequence[str], golds: Sequence[str], label_space: Sequence[str]) -> float:
    """Unweighted per-label F1 mean over the whole label space (0 for absent labels)."""
    if len(preds) != len(golds):
        raise EvaluationError(f"length mismatch: {len(preds)} predictions, {len(golds)} golds")
    if not golds:
        return 0.0
    return float(f1_score(list(golds), list(preds), labels=list(label_space), average="macro", zero_division=0))


def accuracy(preds: Sequence[str], golds: Sequence[str]) -> float:
    if len(preds) != len(golds):
        raise EvaluationError(f"length mismatch: {len(preds)} predictions, {len(golds)} golds")
    if not golds:
        return 0.0
    return float(accuracy_score(list(golds), list(preds)))


def threshold_key(threshold: float) -> str:
    return f"{threshold:.2f}"


def threshold_keys(thresholds: Sequence[float]) -> Dict[str, float]:
    """Key each distinct threshold; two thresholds sharing a key are an error."""
    keys: Dict[str, float] = {}
    for threshold in sorted(set(thresholds)):
        if not 0.0 <= threshold <= 1.0:
            raise EvaluationError(f"threshold must be in [0, 1], got {threshold}")
        key = threshold_key(threshold)
        if key in keys:
            raise EvaluationError(f"thresholds {keys[key]} and {threshold} both report as {key}")
        keys[key] = threshold
    return keys


@dataclass
class MetricsReport:
    n_examples: int
    coarse: Dict[str, Dict[str, float]]
    fine: Dict[str, Dict[str, float]]
    thresholded: Dict[str, Dict[str, Dict[str, float]]] = field(default_factory=dict)
    confusion: Dict[str, Dict[str, Dict[str, int]]] = field(default_factory=dict)
    # granularity -> one {"accuracy", "macro_f1"} entry per slot, slot 1 first
    per_slot: Dict[str, List[Dict[str, float]]] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "n_examples": self.n_examples,
            "coarse": self.coarse,
            "fine": self.fine,
            "thresholded": self.thresholded,
            "confusion": self.confusion,
            "per_slot": self.per_slot,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "MetricsReport":
        return cls(
            n_examples=int(data["n_examples"]),
            coarse=dict(data["coarse"]),
            fine=dict(data["fine"]),
            thresholded=dict(data.get("thresholded", {})),
            confusion=dict(data.get("confusion", {})),
            per_slot={granularity: list(slots) for granularity, slots in data.get("per_slot", {}).items()},
        )

    def flatten(self) -> Dict[str, float]:
        """Dotted keys for every scalar metric, e.g. ``thresholded.0.50.fine.average``."""
        flat: Dict[str, float] = {"n_examples": float(self.n_examples)}
        for granularity in GRANULARITIES:
            for view, metrics in getattr(self, granularity).items():
                for metric, value in metrics.items():
                    flat[f"{granularity}.{view}.{metric}"] = value
        for key, by_granularity in self.thresholded.items():
            for granularity, views in by_granularity.items():
                for view, value in views.items():
                    flat[f"thresholded.{key}.{granularity}.{view}"] = value
        for granularity, slots in self.per_slot.items():
            for slot, metrics in enumerate(slots, start=1):
                for metric, value in metrics.items():
                    flat[f"per_slot.{granularity}.{slot}.{metric}"] = value
        return flat


def _labels(triplets_per_example: Sequence[Sequence[IntentSpanTriplet]], slot: int, granularity: str) -> List[str]:
    return [getattr(triplets[slot], granularity) for triplets in triplets_per_example]


def _confusion(golds: List[str], preds: List[str], space: Sequence[str]) -> Dict[str, Dict[str, int]]:
    if not golds:
        return {}
    matrix = confusion_matrix(golds, preds, labels=list(space))
    return {
        gold: {pred: int(matrix[i, j]) for j, pred in enumerate(space) if matrix[i, j]}
        for i, gold in enumerate(space)
        if matrix[i].sum()
    }


def score_predictions(
    golds: Sequence[MultiIntentExample],
    predictions: Sequence[Sequence[IntentSpanTriplet]],
    taxonomy: Taxonomy,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> MetricsReport:
    if len(golds) != len(predictions):
        raise EvaluationError(f"{len(predictions)} predictions for {len(golds)} examples")
    n_slots = {len(example.triplets) for example in golds} | {len(p) for p in predictions}
    if len(n_slots) > 1:
        raise EvaluationError(f"gold and predicted intent counts differ: {sorted(n_slots)}")
    keyed_thresholds = threshold_keys(thresholds)
    n = n_slots.pop() if n_slots else 1
    gold_triplets = [example.triplets for example in golds]
    spaces: Dict[str, Sequence[str]] = {"coarse": taxonomy.coarse_labels, "fine": taxonomy.fine_labels}

    def views(metric: Callable[[int], float]) -> Dict[str, float]:
        scores = [metric(k) for k in range(n)]
        return {"primary": scores[0], "average": sum(scores) / n}

    report = {}
    per_slot = {}
    for granularity in GRANULARITIES:
        space = spaces[granularity]
        slots = []
        for k in range(n):
            preds, gold_labels = _labels(predictions, k, granularity), _labels(gold_triplets, k, granularity)
            slots.append({"accuracy": accuracy(preds, gold_labels), "macro_f1": macro_f1(preds, gold_labels, space)})
        per_slot[granularity] = slots
        report[granularity] = {
            "primary": dict(slots[0]),
            "average": {metric: sum(slot[metric] for slot in slots) / n for metric in ("accuracy", "macro_f1")},
        }

    def gated(k: int, granularity: str, threshold: float) -> List[str]:
        return [
            getattr(pred[k], granularity) if span_overlap(pred[k], gold[k]) >= threshold else SPAN_MISS
            for pred, gold in zip(predictions, gold_triplets)
        ]

    thresholded = {}
    for key, threshold in keyed_thresholds.items():
        thresholded[key] = {
            granularity: views(
                lambda k: accuracy(gated(k, granularity, threshold), _labels(gold_triplets, k, granularity))
            )
            for granularity in GRANULARITIES
        }

    confusion = {
        granularity: _confusion(
            _labels(gold_triplets, 0, granularity), _labels(predictions, 0, granularity), spaces[granularity]
        )
        for granularity in GRANULARITIES
    }
    return MetricsReport(
        n_examples=len(golds),
        coarse=report["coarse"],
        fine=report["fine"],
        thresholded=thresholded,
        confusion=confusion,
        per_slot=per_slot,
    )


def predict_split(model: IntentModel, split: DatasetSplit, batch_size: int = 32) -> List[List[IntentSpanTriplet]]:
    return model.predict([example.tokens for example in split.examples], batch_size)


def evaluate(
    model: IntentModel,
    split: DatasetSplit,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    batch_size: int = 32,
    taxonomy: Optional[Taxonomy] = None,
) -> MetricsReport:
    """Predict with ``model`` and score against ``split``.

    ``taxonomy``, when given, must be the one the model was trained with.
    """
    if taxonomy is not None and taxonomy.digest() != model.taxonomy.digest():
        raise TaxonomyMismatchError(
            f"taxonomy hash mismatch: checkpoint {model.taxonomy.digest()}, given {taxonomy.digest()}"
        )
    try:
        validate_split(split, model.taxonomy)
    except (UnknownLabelError, ExampleValidationError) as e:
        raise TaxonomyMismatchError(f"split {split.name!r} does not fit the checkpoint taxonomy: {e}") from e
    counts = {len(example.triplets) for example in split.examples}
    if counts - {model.n_slots}:
        raise EvaluationError(
            f"split {split.name!r} has intent counts {sorted(counts)} but the model has {model.n_slots} slots"
        )
    run_logger.step(f"Evaluating {len(split)} examples")
    predictions = predict_split(model, split, batch_size)
    report = score_predictions(split.examples, predictions, model.taxonomy, thresholds)
    run_logger.metrics(report.flatten())
    return report


def render_report(report: MetricsReport, path: PathLike):
    FileHelper.write_json(path, report.to_dict(), sort_keys=True)
    run_logger.artifact_written("metrics report", path)
