"""Region-awareness evaluation: classification, confusion, disparity.

Each record's image is shown to a vision-chat endpoint with a region
question; the raw reply is stored verbatim and parsed into a sub-region /
invalid / refusal outcome.  Gateway failures become per-record evaluation
errors that are logged and excluded from matrices, never silently dropped.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import ImageRecord, QuartileAssignment
from .gateway import GatewayError, ModelGateway
from .geo import (
    GeoLabel,
    Geoscheme,
    OutcomeKind,
    ParsedOutcome,
    RegionResponseParser,
    UnknownCountryError,
    load_geoscheme,
)

DEFAULT_REGION_PROMPT = (
    "Which United Nations geoscheme sub-region does this image most likely depict? "
    "Answer with the sub-region name only."
)

INVALID_LABEL = "Invalid"
RESPONSIBLE_AI_LABEL = "ResponsibleAI"
SPECIAL_LABELS = (INVALID_LABEL, RESPONSIBLE_AI_LABEL)


class AwarenessError(Exception):
    pass


class EmptyMatrixError(AwarenessError):
    pass


class UnmatchedRecordError(AwarenessError, LookupError):
    pass


@dataclass
class ClassificationResult:
    """One record's region classification; ``error`` is set (and ``outcome``
    unset) when the gateway failed for this record."""

    record_id: str
    true_subregion: str
    raw_response: str | None
    outcome: ParsedOutcome | None
    error: str | None = None


def classify_region(record: ImageRecord, gateway: ModelGateway,
                    parser: RegionResponseParser, *,
                    prompt: str = DEFAULT_REGION_PROMPT,
                    profile: str = "hosted",
                    image_root: str | Path | None = None) -> ClassificationResult:
    """Classify one image's sub-region through the gateway."""
    image_path = Path(record.image_path)
    if image_root is not None and not image_path.is_absolute():
        image_path = Path(image_root) / image_path
    try:
        image = image_path.read_bytes()
        raw = gateway.chat_vision(image, prompt, profile=profile)
    except (GatewayError, OSError) as exc:
        return ClassificationResult(
            record_id=record.id,
            true_subregion=record.subregion,
            raw_response=None,
            outcome=None,
            error=f"{type(exc).__name__}: {exc}",
        )
    return ClassificationResult(
        record_id=record.id,
        true_subregion=record.subregion,
        raw_response=raw,
        outcome=parser.parse(raw),
    )


@dataclass
class ConfusionMatrix:
    """Counts of true sub-region rows against predicted columns.

    Columns are the sub-regions plus the two special outcomes, so every
    evaluated record lands in exactly one cell and row sums equal the number
    of evaluated records per true sub-region.
    """

    true_labels: tuple[str, ...]
    pred_labels: tuple[str, ...]
    counts: np.ndarray

    def row_index(self, label: str) -> int:
        return self.true_labels.index(label)

    def col_index(self, label: str) -> int:
        return self.pred_labels.index(label)

    def cell(self, true_label: str, pred_label: str) -> int:
        return int(self.counts[self.row_index(true_label), self.col_index(pred_label)])

    def total(self) -> int:
        return int(self.counts.sum())

    def add(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.true_labels != other.true_labels or self.pred_labels != other.pred_labels:
            raise ValueError("matrices have different label sets")
        return ConfusionMatrix(self.true_labels, self.pred_labels, self.counts + other.counts)

    def to_dict(self) -> dict:
        return {
            "true_labels": list(self.true_labels),
            "pred_labels": list(self.pred_labels),
            "counts": self.counts.tolist(),
        }


def _predicted_label(outcome: ParsedOutcome) -> str:
    if outcome.kind is OutcomeKind.SUBREGION:
        return outcome.subregion  # type: ignore[return-value]
    if outcome.kind is OutcomeKind.RESPONSIBLE_AI:
        return RESPONSIBLE_AI_LABEL
    return INVALID_LABEL


def build_confusion(results: Iterable[ClassificationResult],
                    geoscheme: Geoscheme | None = None) -> ConfusionMatrix:
    """Aggregate evaluated results into a confusion matrix.

    Errored results carry no outcome and are skipped; callers log them from
    the result list itself.
    """
    scheme = geoscheme if geoscheme is not None else load_geoscheme()
    true_labels = tuple(scheme.subregions)
    pred_labels = true_labels + SPECIAL_LABELS
    counts = np.zeros((len(true_labels), len(pred_labels)), dtype=np.int64)
    row_of = {label: i for i, label in enumerate(true_labels)}
    col_of = {label: i for i, label in enumerate(pred_labels)}
    for result in results:
        if result.error is not None or result.outcome is None:
            continue
        counts[row_of[result.true_subregion], col_of[_predicted_label(result.outcome)]] += 1
    return ConfusionMatrix(true_labels, pred_labels, counts)


def accuracy(matrix: ConfusionMatrix) -> float:
    """Diagonal mass over all evaluated records; special columns count as
    incorrect."""
    total = matrix.total()
    if total == 0:
        raise EmptyMatrixError("confusion matrix has no evaluated records")
    n = len(matrix.true_labels)
    correct = int(np.trace(matrix.counts[:, :n]))
    return correct / total


@dataclass(frozen=True)
class DisparityCell:
    correct: int
    total: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.total


def income_disparity(results: Sequence[ClassificationResult],
                     assignments: Sequence[QuartileAssignment]) -> dict[str, dict[int, DisparityCell]]:
    """Accuracy per (broad region, income quartile).

    Every evaluated result must have a quartile assignment; cells with no
    records are absent rather than zero.
    """
    by_record: dict[str, QuartileAssignment] = {a.record_id: a for a in assignments}
    table: dict[str, dict[int, list[int]]] = {}
    for result in results:
        if result.error is not None or result.outcome is None:
            continue
        try:
            assignment = by_record[result.record_id]
        except KeyError:
            raise UnmatchedRecordError(
                f"result {result.record_id!r} has no quartile assignment") from None
        cell = table.setdefault(assignment.broad_region, {}).setdefault(assignment.quartile, [0, 0])
        correct = (result.outcome.kind is OutcomeKind.SUBREGION
                   and result.outcome.subregion == result.true_subregion)
        cell[0] += int(correct)
        cell[1] += 1
    return {
        region: {quartile: DisparityCell(correct=c, total=t)
                 for quartile, (c, t) in sorted(cells.items())}
        for region, cells in sorted(table.items())
    }


# -- human label scoring ---------------------------------------------------

@dataclass(frozen=True)
class HumanLabelSet:
    """One annotator's 1..5 labels for one record."""

    record_id: str
    labels: tuple[GeoLabel, ...]
    annotator_id: str = ""

    def __post_init__(self) -> None:
        if not 1 <= len(self.labels) <= 5:
            raise ValueError("a label set holds between 1 and 5 labels")


def _canonical_guess(label: GeoLabel, scheme: Geoscheme) -> str:
    if label.level == "country":
        try:
            return scheme.canonical_country(label.value)
        except UnknownCountryError:
            # A guess outside the gazetteer can never match a truth country;
            # keep it as-is so it scores as incorrect instead of crashing.
            return label.value.strip()
    if label.level == "subregion":
        if label.value not in scheme.subregions:
            raise ValueError(f"unknown subregion label {label.value!r}")
        return label.value
    if label.value not in scheme.broad_regions:
        raise ValueError(f"unknown continent label {label.value!r}")
    return label.value


def score_human_labels(label_sets: Sequence[HumanLabelSet],
                       truth: Sequence[ImageRecord] | Mapping[str, ImageRecord],
                       geoscheme: Geoscheme | None = None) -> dict[str, float]:
    """Score label sets at country/subregion/continent levels plus the
    any-level (union) and all-level (intersection) accuracies."""
    scheme = geoscheme if geoscheme is not None else load_geoscheme()
    if isinstance(truth, Mapping):
        truth_by_id = dict(truth)
    else:
        truth_by_id = {record.id: record for record in truth}
    if not label_sets:
        raise EmptyMatrixError("no label sets to score")
    hits = {"country": 0, "subregion": 0, "continent": 0, "union": 0, "intersection": 0}
    for label_set in label_sets:
        record = truth_by_id.get(label_set.record_id)
        if record is None:
            raise UnmatchedRecordError(f"label set for unknown record {label_set.record_id!r}")
        true_country = scheme.canonical_country(record.country) if record.country else None
        true_subregion = record.subregion
        true_continent = scheme.broad_region_of(record.subregion)
        matched = {"country": False, "subregion": False, "continent": False}
        for label in label_set.labels:
            guess = _canonical_guess(label, scheme)
            if label.level == "country" and true_country is not None and guess == true_country:
                matched["country"] = True
            elif label.level == "subregion" and guess == true_subregion:
                matched["subregion"] = True
            elif label.level == "continent" and guess == true_continent:
                matched["continent"] = True
        for level in ("country", "subregion", "continent"):
            hits[level] += int(matched[level])
        hits["union"] += int(any(matched.values()))
        hits["intersection"] += int(all(matched.values()))
    n = len(label_sets)
    return {key: value / n for key, value in hits.items()}


def load_human_labels(path: str | Path, geoscheme: Geoscheme | None = None) -> list[HumanLabelSet]:
    """Read (record_id, annotator_id, level, value) JSONL rows into label sets."""
    import json

    rows: dict[tuple[str, str], list[GeoLabel]] = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            data = json.loads(line)
            key = (data["record_id"], data.get("annotator_id", ""))
            rows.setdefault(key, []).append(GeoLabel(level=data["level"], value=data["value"]))
    return [
        HumanLabelSet(record_id=record_id, labels=tuple(labels), annotator_id=annotator_id)
        for (record_id, annotator_id), labels in rows.items()
    ]


def result_to_row(result: ClassificationResult) -> dict:
    row: dict = {
        "record_id": result.record_id,
        "true_subregion": result.true_subregion,
        "raw_response": result.raw_response,
    }
    if result.outcome is not None:
        outcome: dict = {"kind": result.outcome.kind.value}
        if result.outcome.subregion is not None:
            outcome["subregion"] = result.outcome.subregion
        row["outcome"] = outcome
    else:
        row["outcome"] = None
    if result.error is not None:
        row["error"] = result.error
    return row
