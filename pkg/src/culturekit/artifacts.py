"""Implicit cultural-artifact extraction and salience scoring.

Object inventories come back from vision-chat endpoints as JSON; payloads
get a bounded repair pass (code fences, trailing commas, single-quote keys)
and strict schema validation — anything deeper is quarantined with its raw
text preserved.  Validated inventories are summarized into artifact phrases,
normalized (with or without adjectives), and scored with a tf-idf variant
whose band of mean +/- one standard deviation marks salient outliers.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import ImageRecord
from .gateway import ModelGateway

MORE_THAN_TEN = "more than 10"
MAX_COLORS = 3

NUMBER_WORDS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
}

DETECTION_PROMPT_TEMPLATE = (
    "List every item you can see in this image, foreground and background, as JSON "
    "with two fields: 'relevant_objects' for objects that belong to the image "
    "category '{concept}' and 'other_objects' for everything else you detect. "
    "Each object entry needs 'name', 'colors' (up to three), 'count', and a short "
    "'description' (architectural style for buildings, clothing and headgear for "
    "people, dish and cuisine for food). Use exact counts for fewer than 10 items, "
    "otherwise say 'more than 10'."
)

SUMMARY_PROMPT_TEMPLATE = (
    "You are given an object inventory for the country {country} and the category "
    "{concept}. Condense it into a single comma-separated list of items with their "
    "colors, formatted like [red apple, blue car, green tree]. Reply with the "
    "bracketed list only. Inventory: {inventory}"
)


class ArtifactError(Exception):
    pass


class SchemaInvalidError(ArtifactError):
    """Detection payload failed repair + validation; raw text preserved."""

    def __init__(self, message: str, raw: str = "") -> None:
        super().__init__(message)
        self.raw = raw


class EmptySummaryError(ArtifactError):
    pass


class EmptyCorpusError(ArtifactError):
    pass


@dataclass(frozen=True)
class ObjectEntry:
    name: str
    colors: tuple[str, ...] = ()
    count: int | str = 1
    description: str = ""

    def __post_init__(self) -> None:
        if not self.name or not self.name.strip():
            raise ValueError("object name must be non-empty")
        if len(self.colors) > MAX_COLORS:
            raise ValueError(f"at most {MAX_COLORS} colors allowed")
        if isinstance(self.count, int):
            if not 1 <= self.count <= 9:
                raise ValueError("integer counts must be exact values 1..9")
        elif self.count != MORE_THAN_TEN:
            raise ValueError(f"string count must be {MORE_THAN_TEN!r}")


@dataclass
class DetectionReport:
    record_id: str
    country: str
    concept: str
    relevant_objects: list[ObjectEntry] = field(default_factory=list)
    other_objects: list[ObjectEntry] = field(default_factory=list)

    def all_objects(self) -> list[ObjectEntry]:
        return [*self.relevant_objects, *self.other_objects]


# -- payload repair and validation --------------------------------------

_FENCE_RE = re.compile(r"```(?:json)?\s*\n?(.*?)\n?\s*```", re.DOTALL)
_TRAILING_COMMA_RE = re.compile(r",\s*([}\]])")


def repair_json_text(text: str) -> str:
    """Bounded cleanup of near-JSON text: fences, trailing commas, and (when
    the payload has no double quotes at all) single-quote delimiters."""
    candidate = text.strip()
    match = _FENCE_RE.search(candidate)
    if match:
        candidate = match.group(1).strip()
    candidate = _TRAILING_COMMA_RE.sub(r"\1", candidate)
    if "'" in candidate and '"' not in candidate:
        candidate = candidate.replace("'", '"')
    return candidate


def _coerce_count(value: object) -> int | str:
    if isinstance(value, bool):
        raise ValueError(f"count {value!r} is not a number")
    if isinstance(value, int):
        number = value
    elif isinstance(value, float) and value.is_integer():
        number = int(value)
    elif isinstance(value, str):
        token = " ".join(value.strip().lower().split())
        if token in ("more than 10", "more than ten"):
            return MORE_THAN_TEN
        if token.isdigit():
            number = int(token)
        elif token in NUMBER_WORDS:
            number = NUMBER_WORDS[token]
        else:
            raise ValueError(f"count {value!r} is not a recognised number")
    else:
        raise ValueError(f"count {value!r} is not a recognised number")
    if number < 1:
        raise ValueError(f"count must be positive, got {number}")
    return number if number <= 9 else MORE_THAN_TEN


def _entry_from_payload(raw: object) -> ObjectEntry:
    if not isinstance(raw, Mapping):
        raise ValueError(f"object entry must be a mapping, got {type(raw).__name__}")
    name = raw.get("name")
    if not isinstance(name, str) or not name.strip():
        raise ValueError("object entry needs a non-empty 'name'")
    colors_raw = raw.get("colors", [])
    if isinstance(colors_raw, str):
        colors_raw = [colors_raw]
    if not isinstance(colors_raw, Sequence):
        raise ValueError("'colors' must be a list")
    colors = tuple(str(c).strip() for c in colors_raw if str(c).strip())[:MAX_COLORS]
    count = _coerce_count(raw.get("count", 1))
    description = raw.get("description", "")
    if not isinstance(description, str):
        description = str(description)
    return ObjectEntry(name=name.strip(), colors=colors, count=count, description=description)


def parse_detection_payload(text: str, record: ImageRecord) -> DetectionReport:
    """Parse + validate a detection payload; SchemaInvalidError carries the raw text."""
    try:
        payload = json.loads(repair_json_text(text))
    except json.JSONDecodeError as exc:
        raise SchemaInvalidError(f"payload is not JSON after repair: {exc}", raw=text) from None
    if not isinstance(payload, Mapping):
        raise SchemaInvalidError("payload is not a JSON object", raw=text)
    for key in ("relevant_objects", "other_objects"):
        if key not in payload:
            raise SchemaInvalidError(f"payload lacks required field {key!r}", raw=text)
        if not isinstance(payload[key], Sequence) or isinstance(payload[key], (str, bytes)):
            raise SchemaInvalidError(f"field {key!r} must be a list", raw=text)
    try:
        relevant = [_entry_from_payload(raw) for raw in payload["relevant_objects"]]
        other = [_entry_from_payload(raw) for raw in payload["other_objects"]]
    except ValueError as exc:
        raise SchemaInvalidError(str(exc), raw=text) from None
    return DetectionReport(
        record_id=record.id,
        country=record.country,
        concept=record.concept,
        relevant_objects=relevant,
        other_objects=other,
    )


def detect_objects(record: ImageRecord, gateway: ModelGateway, *,
                   image_root: str | Path | None = None,
                   prompt_template: str = DETECTION_PROMPT_TEMPLATE,
                   profile: str = "hosted") -> DetectionReport:
    """Run structured object detection for one record through the gateway."""
    image_path = Path(record.image_path)
    if image_root is not None and not image_path.is_absolute():
        image_path = Path(image_root) / image_path
    image = image_path.read_bytes()
    prompt = prompt_template.format(concept=record.concept)
    text = gateway.chat_vision(image, prompt, profile=profile)
    return parse_detection_payload(text, record)


# -- serialization helpers (reports travel between pipeline stages) ------

def report_to_dict(report: DetectionReport) -> dict:
    def entry_dict(entry: ObjectEntry) -> dict:
        return {
            "name": entry.name,
            "colors": list(entry.colors),
            "count": entry.count,
            "description": entry.description,
        }

    return {
        "record_id": report.record_id,
        "country": report.country,
        "concept": report.concept,
        "relevant_objects": [entry_dict(e) for e in report.relevant_objects],
        "other_objects": [entry_dict(e) for e in report.other_objects],
    }


def report_from_dict(data: Mapping) -> DetectionReport:
    def entry(raw: Mapping) -> ObjectEntry:
        return ObjectEntry(
            name=raw["name"],
            colors=tuple(raw.get("colors", ())),
            count=raw.get("count", 1),
            description=raw.get("description", ""),
        )

    return DetectionReport(
        record_id=data["record_id"],
        country=data["country"],
        concept=data["concept"],
        relevant_objects=[entry(e) for e in data["relevant_objects"]],
        other_objects=[entry(e) for e in data["other_objects"]],
    )


# -- summarization --------------------------------------------------------

_BRACKETED_RE = re.compile(r"\[(.*)\]", re.DOTALL)


def parse_summary_text(text: str) -> list[str]:
    """Split a summarizer reply into artifact phrases; empty => error."""
    body = text.strip()
    match = _BRACKETED_RE.search(body)
    if match:
        body = match.group(1)
    phrases = [phrase.strip() for phrase in body.split(",")]
    phrases = [p for p in phrases if p]
    if not phrases:
        raise EmptySummaryError("summary contains no phrases")
    return phrases


def summarize_objects(report: DetectionReport, gateway: ModelGateway, *,
                      prompt_template: str = SUMMARY_PROMPT_TEMPLATE,
                      profile: str = "hosted") -> list[str]:
    """Summarize an inventory into comma-separated artifact phrases.

    The inventory is embedded in the prompt as canonical JSON so repeated
    calls fingerprint identically.
    """
    inventory = json.dumps(report_to_dict(report), sort_keys=True, ensure_ascii=False)
    prompt = prompt_template.format(country=report.country, concept=report.concept,
                                    inventory=inventory)
    text = gateway.chat_vision(None, prompt, profile=profile)
    return parse_summary_text(text)


# -- normalization ---------------------------------------------------------

MODES = ("adj", "no_adj")


@dataclass(frozen=True)
class ArtifactToken:
    surface: str
    mode: str

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.surface:
            raise ValueError("token surface must be non-empty")


def load_adjective_lexicon(path: str | Path | None = None) -> frozenset[str]:
    if path is None:
        path = Path(str(resources.files("culturekit").joinpath("data", "adjective_lexicon.txt")))
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line.lower())
    return frozenset(words)


def _normalize_phrase(phrase: str) -> str:
    return " ".join(phrase.lower().split())


def normalize_artifacts(phrases: Iterable[str], mode: str,
                        lexicon: frozenset[str] | None = None) -> list[ArtifactToken]:
    """Normalize phrases into artifact tokens (multiset semantics).

    "adj" keeps the full lowercased phrase; "no_adj" additionally strips
    lexicon words (colors, numerals, quantity terms), falling back to the
    full phrase when stripping would erase it.  Both modes are idempotent.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode == "no_adj" and lexicon is None:
        lexicon = load_adjective_lexicon()
    tokens = []
    for phrase in phrases:
        surface = _normalize_phrase(phrase)
        if not surface:
            continue
        if mode == "no_adj":
            kept = [w for w in surface.split() if w not in lexicon]
            surface = " ".join(kept) if kept else surface
        tokens.append(ArtifactToken(surface=surface, mode=mode))
    return tokens


# -- tf-idf salience --------------------------------------------------------

@dataclass
class ArtifactScoreTable:
    """Per-(country, artifact) salience scores plus distribution stats."""

    mode: str
    scores: dict[tuple[str, str], float]
    tf: dict[tuple[str, str], float]
    df: dict[str, float]
    mean: float
    std: float
    outliers: set[tuple[str, str]]
    tf_mode: str = "ratio"
    df_mode: str = "countries"
    rescale: float = 1.0
    band_sigma: float = 1.0

    @property
    def band(self) -> tuple[float, float]:
        half_width = self.band_sigma * self.std
        return (self.mean - half_width, self.mean + half_width)


def _as_counter(tokens: Mapping[str, int] | Iterable) -> Counter:
    if isinstance(tokens, Mapping):
        counter = Counter({str(k): int(v) for k, v in tokens.items() if int(v) > 0})
    else:
        counter = Counter()
        for token in tokens:
            surface = token.surface if isinstance(token, ArtifactToken) else str(token)
            counter[surface] += 1
    return counter


def tfidf_scores(corpus: Mapping[str, Mapping[str, int] | Iterable], *,
                 mode: str = "adj", tf_mode: str = "ratio",
                 df_mode: str = "countries", rescale: float | None = None,
                 band_sigma: float = 1.0) -> ArtifactScoreTable:
    """Score artifact salience per country.

    tf is the within-country frequency ratio (or the raw count when
    tf_mode="count"); df counts the countries containing the artifact (or
    total occurrences when df_mode="occurrences"); each score is
    tf * (1/df) * rescale with rescale defaulting to the number of
    countries.  Outliers sit strictly outside mean +/- band_sigma population
    standard deviations of all scores.
    """
    if tf_mode not in ("ratio", "count"):
        raise ValueError(f"tf_mode must be 'ratio' or 'count', got {tf_mode!r}")
    if df_mode not in ("countries", "occurrences"):
        raise ValueError(f"df_mode must be 'countries' or 'occurrences', got {df_mode!r}")
    if band_sigma <= 0:
        raise ValueError(f"band_sigma must be positive, got {band_sigma}")
    counters = {country: _as_counter(tokens) for country, tokens in corpus.items()}
    counters = {country: counter for country, counter in counters.items() if counter}
    if not counters:
        raise EmptyCorpusError("no country has any artifact tokens")
    n_countries = len(counters)
    scale = float(rescale) if rescale is not None else float(n_countries)

    df: dict[str, float] = {}
    for counter in counters.values():
        for artifact, count in counter.items():
            if df_mode == "countries":
                df[artifact] = df.get(artifact, 0.0) + 1.0
            else:
                df[artifact] = df.get(artifact, 0.0) + float(count)

    scores: dict[tuple[str, str], float] = {}
    tf_table: dict[tuple[str, str], float] = {}
    for country, counter in counters.items():
        total = sum(counter.values())
        for artifact, count in counter.items():
            tf = count / total if tf_mode == "ratio" else float(count)
            tf_table[(country, artifact)] = tf
            scores[(country, artifact)] = tf * (1.0 / df[artifact]) * scale

    values = np.array(list(scores.values()), dtype=float)
    mean = float(values.mean())
    std = float(values.std())
    threshold = band_sigma * std
    outliers = {key for key, score in scores.items() if abs(score - mean) > threshold}
    return ArtifactScoreTable(
        mode=mode, scores=scores, tf=tf_table, df=df,
        mean=mean, std=std, outliers=outliers,
        tf_mode=tf_mode, df_mode=df_mode, rescale=scale, band_sigma=band_sigma,
    )


def salience_outliers(table: ArtifactScoreTable) -> dict[str, list[tuple[str, float]]]:
    """Outlier artifacts grouped per country, highest score first."""
    grouped: dict[str, list[tuple[str, float]]] = {}
    for (country, artifact) in table.outliers:
        grouped.setdefault(country, []).append((artifact, table.scores[(country, artifact)]))
    for country in grouped:
        grouped[country].sort(key=lambda pair: (-pair[1], pair[0]))
    return grouped


def score_rows(table: ArtifactScoreTable) -> list[dict]:
    """Flat export rows: one per (country, artifact), deterministic order."""
    rows = []
    for (country, artifact) in sorted(table.scores):
        rows.append({
            "country": country,
            "artifact": artifact,
            "mode": table.mode,
            "tf": table.tf[(country, artifact)],
            "df": table.df[artifact],
            "score": table.scores[(country, artifact)],
            "outlier": (country, artifact) in table.outliers,
        })
    return rows


def score_summary(table: ArtifactScoreTable) -> dict:
    return {
        "mode": table.mode,
        "pairs": len(table.scores),
        "mean": table.mean,
        "std": table.std,
        "band_low": table.band[0],
        "band_high": table.band[1],
        "band_sigma": table.band_sigma,
        "outlier_count": len(table.outliers),
        "tf_mode": table.tf_mode,
        "df_mode": table.df_mode,
        "rescale": table.rescale,
    }


def table_from_rows(rows: Iterable[Mapping], mode: str | None = None) -> ArtifactScoreTable:
    """Rebuild a score table from exported rows (mean/std recomputed)."""
    scores: dict[tuple[str, str], float] = {}
    tf: dict[tuple[str, str], float] = {}
    df: dict[str, float] = {}
    outliers: set[tuple[str, str]] = set()
    table_mode = mode
    for row in rows:
        key = (row["country"], row["artifact"])
        scores[key] = float(row["score"])
        tf[key] = float(row.get("tf", 0.0))
        df[row["artifact"]] = float(row.get("df", 1.0))
        if row.get("outlier"):
            outliers.add(key)
        if table_mode is None:
            table_mode = row.get("mode")
    if not scores:
        raise EmptyCorpusError("no score rows")
    values = np.array(list(scores.values()), dtype=float)
    return ArtifactScoreTable(
        mode=table_mode or "adj", scores=scores, tf=tf, df=df,
        mean=float(values.mean()), std=float(values.std()), outliers=outliers,
    )
