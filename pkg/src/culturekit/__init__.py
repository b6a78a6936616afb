"""Toolkit for auditing and adapting the cultural content of image corpora.

The package splits into a geographic reference layer (`geo`), corpus and
manifest handling (`corpus`), a record/replay gateway for every model call
(`gateway`), region-awareness scoring (`awareness`), artifact extraction and
salience (`artifacts`), color/people associations (`associations`), image
adaptation (`adapt`), and deterministic exports/plots (`reporting`).  The
``culturekit`` console script wires these into end-to-end runs.
"""

from __future__ import annotations

from .adapt import AdaptationRequest, AdaptationResult, adapt, clipscore, evaluate_adaptation
from .artifacts import (
    ArtifactScoreTable,
    DetectionReport,
    ObjectEntry,
    detect_objects,
    normalize_artifacts,
    salience_outliers,
    summarize_objects,
    tfidf_scores,
)
from .associations import aggregate_color_deltas, bucket_people, color_deltas, mean_rgb
from .awareness import ClassificationResult, build_confusion, classify_region, income_disparity, score_human_labels
from .corpus import GenerationJob, ImageRecord, assign_income_quartiles, ingest_manifest, plan_generation
from .gateway import Cassette, GatewayConfig, ModelGateway, load_gateway_config
from .geo import Geoscheme, load_geoscheme, parse_region_response

__version__ = "0.1.0"

__all__ = [
    "AdaptationRequest",
    "AdaptationResult",
    "ArtifactScoreTable",
    "Cassette",
    "ClassificationResult",
    "DetectionReport",
    "GatewayConfig",
    "GenerationJob",
    "Geoscheme",
    "ImageRecord",
    "ModelGateway",
    "ObjectEntry",
    "__version__",
    "adapt",
    "aggregate_color_deltas",
    "assign_income_quartiles",
    "bucket_people",
    "build_confusion",
    "classify_region",
    "clipscore",
    "color_deltas",
    "detect_objects",
    "evaluate_adaptation",
    "income_disparity",
    "ingest_manifest",
    "load_gateway_config",
    "load_geoscheme",
    "mean_rgb",
    "normalize_artifacts",
    "parse_region_response",
    "plan_generation",
    "salience_outliers",
    "score_human_labels",
    "summarize_objects",
    "tfidf_scores",
]
