"""Cross-culture image adaptation: detect, select, ground, inpaint, score.

Salient source-culture objects are located with grounded boxes, the union of
their rectangles becomes the edit mask, and the masked region is repainted
toward the target culture.  Editing succeeds when similarity to the source
culture strictly drops while similarity to the target culture strictly rises.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .artifacts import ArtifactScoreTable, DetectionReport, detect_objects
from .corpus import ImageRecord
from .gateway import BoundingBox, GatewayError, ModelGateway, encode_png

CLIP_WEIGHT = 2.5
INPAINT_PROMPT_TEMPLATE = "a {phrase} in {country}"
CAPTION_TEMPLATE = "{country}"
# Mean absolute pixel difference allowed outside the mask, on a 0..1 scale.
LOCALITY_TOLERANCE = 2.0 / 255.0

STAGES = ("detect", "select", "ground", "mask", "inpaint", "score")


class AdaptError(Exception):
    pass


class NoCandidatesError(AdaptError):
    pass


class NoBoxesError(AdaptError):
    pass


class GroundingEmptyError(AdaptError):
    pass


class NonFiniteScoreError(AdaptError, ValueError):
    pass


class AdaptationStageError(AdaptError):
    """Wraps a failure with the pipeline stage it happened in."""

    def __init__(self, stage: str, cause: Exception) -> None:
        super().__init__(f"stage {stage!r}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class AdaptationRequest:
    record: ImageRecord
    target_country: str
    k: int = 1

    def __post_init__(self) -> None:
        if not self.target_country or not self.target_country.strip():
            raise ValueError("target country must be non-empty")
        if self.record.country == self.target_country:
            raise ValueError("source and target countries must differ")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class AdaptationResult:
    record_id: str
    source_country: str
    target_country: str
    phrases: list[str]
    boxes: list[BoundingBox]
    edited_image: bytes
    score_source_before: float  # S(original, source country)
    score_target_before: float  # S(original, target country)
    score_source_after: float   # S(edited, source country)
    score_target_after: float   # S(edited, target country)
    delta_source: float
    delta_target: float
    success: bool
    outside_mask_mad: float
    locality_ok: bool
    artifact_paths: dict[str, str] = field(default_factory=dict)


def select_edit_phrases(report: DetectionReport, country: str,
                        table: ArtifactScoreTable, k: int) -> list[str]:
    """Top-k object phrases ranked by the country's salience scores.

    Scored phrases come first (descending score, then lexicographic);
    unscored phrases follow lexicographically.  Duplicates collapse.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    seen: set[str] = set()
    candidates: list[str] = []
    for entry in report.all_objects():
        phrase = " ".join(entry.name.lower().split())
        if phrase and phrase not in seen:
            seen.add(phrase)
            candidates.append(phrase)
    if not candidates:
        raise NoCandidatesError(f"report {report.record_id!r} lists no objects")

    def sort_key(phrase: str):
        score = table.scores.get((country, phrase))
        if score is None:
            return (1, 0.0, phrase)
        return (0, -score, phrase)

    return sorted(candidates, key=sort_key)[:k]


def build_masks(image: bytes | Image.Image, boxes: Sequence[BoundingBox]) -> np.ndarray:
    """Union of rectangle masks as a boolean (height, width) array.

    Boxes must lie within the image bounds; fractional coordinates are
    rasterised outward so every touched pixel is covered.
    """
    if not boxes:
        raise NoBoxesError("no boxes to build a mask from")
    pil = Image.open(io.BytesIO(image)) if isinstance(image, bytes) else image
    width, height = pil.size
    mask = np.zeros((height, width), dtype=bool)
    for box in boxes:
        box.validate_within(width, height)
        x0, y0 = math.floor(box.x0), math.floor(box.y0)
        x1, y1 = math.ceil(box.x1), math.ceil(box.y1)
        mask[y0:y1, x0:x1] = True
    return mask


def mask_to_png(mask: np.ndarray) -> bytes:
    """Encode a boolean mask as an 8-bit PNG (255 inside, 0 outside)."""
    return encode_png(Image.fromarray(mask.astype(np.uint8) * 255, mode="L"))


def clipscore(image: bytes, country: str, gateway: ModelGateway, *,
              caption_template: str = CAPTION_TEMPLATE, weight: float = CLIP_WEIGHT) -> float:
    """weight * max(0, cosine(image embedding, country caption embedding))."""
    image_vec = gateway.embed(image)
    text_vec = gateway.embed(caption_template.format(country=country))
    cosine = float(np.dot(image_vec, text_vec))
    return weight * max(0.0, cosine)


def evaluate_adaptation(score_source_before: float, score_target_before: float,
                        score_source_after: float, score_target_after: float
                        ) -> tuple[float, float, bool]:
    """Deltas of source/target similarity and the strict success predicate.

    Success needs the source-country score to strictly drop and the
    target-country score to strictly rise; zero deltas fail.
    """
    scores = (score_source_before, score_target_before,
              score_source_after, score_target_after)
    if not all(math.isfinite(s) for s in scores):
        raise NonFiniteScoreError(f"scores must be finite, got {scores}")
    delta_source = score_source_after - score_source_before
    delta_target = score_target_after - score_target_before
    return delta_source, delta_target, delta_source < 0.0 and delta_target > 0.0


def outside_mask_mad(original: bytes, edited: bytes, mask: np.ndarray) -> float:
    """Mean absolute difference outside the mask, on a 0..1 scale."""
    a = np.asarray(Image.open(io.BytesIO(original)).convert("RGB"), dtype=np.float64)
    b = np.asarray(Image.open(io.BytesIO(edited)).convert("RGB"), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    outside = ~mask
    if not outside.any():
        return 0.0
    return float(np.abs(a[outside] - b[outside]).mean() / 255.0)


def adapt(request: AdaptationRequest, gateway: ModelGateway,
          table: ArtifactScoreTable, *,
          image_root: str | Path | None = None,
          inpaint_prompt_template: str = INPAINT_PROMPT_TEMPLATE,
          caption_template: str = CAPTION_TEMPLATE,
          locality_tolerance: float = LOCALITY_TOLERANCE,
          per_phrase: bool = False,
          workdir: str | Path | None = None) -> AdaptationResult:
    """Run the full adaptation pipeline for one request.

    One joint inpainting pass edits all selected phrases; ``per_phrase=True``
    instead edits sequentially, one phrase at a time.  Stage failures raise
    AdaptationStageError tagged with the failing stage; grounding that finds
    nothing raises GroundingEmptyError.  Locality violations are reported on
    the result, not raised.
    """
    record = request.record
    source_path = Path(record.image_path)
    if image_root is not None and not source_path.is_absolute():
        source_path = Path(image_root) / source_path
    source = source_path.read_bytes()

    try:
        report = detect_objects(record, gateway, image_root=image_root)
    except Exception as exc:
        raise AdaptationStageError("detect", exc) from exc

    try:
        phrases = select_edit_phrases(report, record.country, table, request.k)
    except NoCandidatesError:
        raise
    except Exception as exc:
        raise AdaptationStageError("select", exc) from exc

    target = request.target_country
    if per_phrase:
        current = source
        all_boxes: list[BoundingBox] = []
        for phrase in phrases:
            boxes = _ground_stage(gateway, current, [phrase])
            if not boxes:
                continue
            all_boxes.extend(boxes)
            mask = _mask_stage(current, boxes)
            prompt = inpaint_prompt_template.format(phrase=phrase, country=target)
            current = _inpaint_stage(gateway, current, mask, prompt)
        if not all_boxes:
            raise GroundingEmptyError(f"no boxes found for any of {phrases}")
        edited = current
        union_mask = _mask_stage(source, all_boxes)
    else:
        all_boxes = _ground_stage(gateway, source, phrases)
        if not all_boxes:
            raise GroundingEmptyError(f"no boxes found for any of {phrases}")
        union_mask = _mask_stage(source, all_boxes)
        prompt = ", ".join(
            inpaint_prompt_template.format(phrase=phrase, country=target)
            for phrase in phrases)
        edited = _inpaint_stage(gateway, source, union_mask, prompt)

    try:
        score_source_before = clipscore(source, record.country, gateway,
                                        caption_template=caption_template)
        score_target_before = clipscore(source, target, gateway,
                                        caption_template=caption_template)
        score_source_after = clipscore(edited, record.country, gateway,
                                       caption_template=caption_template)
        score_target_after = clipscore(edited, target, gateway,
                                       caption_template=caption_template)
    except GatewayError as exc:
        raise AdaptationStageError("score", exc) from exc
    delta_source, delta_target, success = evaluate_adaptation(
        score_source_before, score_target_before, score_source_after, score_target_after)

    mad = outside_mask_mad(source, edited, union_mask)
    result = AdaptationResult(
        record_id=record.id,
        source_country=record.country,
        target_country=target,
        phrases=phrases,
        boxes=all_boxes,
        edited_image=edited,
        score_source_before=score_source_before,
        score_target_before=score_target_before,
        score_source_after=score_source_after,
        score_target_after=score_target_after,
        delta_source=delta_source,
        delta_target=delta_target,
        success=success,
        outside_mask_mad=mad,
        locality_ok=mad <= locality_tolerance,
    )
    if workdir is not None:
        result.artifact_paths = _persist_artifacts(
            Path(workdir), record.id, report, all_boxes, union_mask, edited)
    return result


def _ground_stage(gateway: ModelGateway, image: bytes, phrases: list[str]) -> list[BoundingBox]:
    try:
        return gateway.ground(image, phrases)
    except GatewayError as exc:
        raise AdaptationStageError("ground", exc) from exc


def _mask_stage(image: bytes, boxes: Sequence[BoundingBox]) -> np.ndarray:
    try:
        return build_masks(image, boxes)
    except NoBoxesError:
        raise
    except Exception as exc:
        raise AdaptationStageError("mask", exc) from exc


def _inpaint_stage(gateway: ModelGateway, image: bytes, mask: np.ndarray, prompt: str) -> bytes:
    try:
        return gateway.inpaint(image, mask_to_png(mask), prompt)
    except GatewayError as exc:
        raise AdaptationStageError("inpaint", exc) from exc


def _persist_artifacts(workdir: Path, record_id: str, report: DetectionReport,
                       boxes: Sequence[BoundingBox], mask: np.ndarray,
                       edited: bytes) -> dict[str, str]:
    from .artifacts import report_to_dict

    workdir.mkdir(parents=True, exist_ok=True)
    paths = {}
    report_path = workdir / f"{record_id}_report.json"
    report_path.write_text(json.dumps(report_to_dict(report), indent=2, sort_keys=True),
                           encoding="utf-8")
    paths["report"] = str(report_path)
    boxes_path = workdir / f"{record_id}_boxes.json"
    boxes_path.write_text(json.dumps([box_to_dict(b) for b in boxes], indent=2),
                          encoding="utf-8")
    paths["boxes"] = str(boxes_path)
    mask_path = workdir / f"{record_id}_mask.png"
    mask_path.write_bytes(mask_to_png(mask))
    paths["mask"] = str(mask_path)
    edited_path = workdir / f"{record_id}_edited.png"
    edited_path.write_bytes(edited)
    paths["edited"] = str(edited_path)
    return paths


def box_to_dict(box: BoundingBox) -> dict:
    return {
        "x0": box.x0, "y0": box.y0, "x1": box.x1, "y1": box.y1,
        "phrase": box.phrase, "confidence": box.confidence,
    }


def result_to_row(result: AdaptationResult) -> dict:
    return {
        "record_id": result.record_id,
        "source_country": result.source_country,
        "target_country": result.target_country,
        "phrases": result.phrases,
        "boxes": [box_to_dict(b) for b in result.boxes],
        "score_source_before": result.score_source_before,
        "score_target_before": result.score_target_before,
        "score_source_after": result.score_source_after,
        "score_target_after": result.score_target_after,
        "delta_source": result.delta_source,
        "delta_target": result.delta_target,
        "success": result.success,
        "outside_mask_mad": result.outside_mask_mad,
        "locality_ok": result.locality_ok,
        "artifact_paths": result.artifact_paths,
    }
