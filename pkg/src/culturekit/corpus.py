"""Image-corpus records: manifests, generation planning, income quartiles."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geo import GeoError, Geoscheme, UnknownCountryError, load_geoscheme

SOURCES = ("dalle_street", "dollar_street", "marvl")
STYLES = ("vivid", "natural")

GENERATION_PROMPT_TEMPLATE = "A typical scene of {concept} in {country}, culturally accurate and detailed."


class CorpusError(Exception):
    pass


class EmptyFieldError(CorpusError, ValueError):
    pass


class ManifestError(CorpusError):
    """Raised for malformed manifest rows; message carries line numbers."""


class MissingIncomeError(CorpusError, ValueError):
    pass


@dataclass
class ImageRecord:
    """One image with its provenance labels.

    ``style`` is present exactly for generated (dalle_street) records and
    ``income_monthly`` only for dollar_street records.  MaRVL records may
    carry an empty country; everything else requires one.
    """

    id: str
    source: str
    image_path: str
    country: str
    subregion: str
    concept: str
    style: str | None = None
    income_monthly: float | None = None


def validate_record(record: ImageRecord, geoscheme: Geoscheme) -> None:
    """Raise ManifestError/UnknownCountryError when ``record`` breaks an invariant."""
    if record.source not in SOURCES:
        raise ManifestError(f"record {record.id!r}: unknown source {record.source!r}")
    for field in ("id", "image_path"):
        if not getattr(record, field):
            raise ManifestError(f"record {record.id!r}: empty {field}")
    if record.source == "marvl":
        if not record.subregion:
            raise ManifestError(f"record {record.id!r}: marvl records need a subregion")
        geoscheme.broad_region_of(record.subregion)  # must be canonical
        if record.country:
            if geoscheme.subregion_of(record.country) != record.subregion:
                raise ManifestError(
                    f"record {record.id!r}: subregion {record.subregion!r} does not "
                    f"match country {record.country!r}")
    else:
        if not record.country:
            raise ManifestError(f"record {record.id!r}: empty country")
        if not record.concept:
            raise ManifestError(f"record {record.id!r}: empty concept")
        expected = geoscheme.subregion_of(record.country)
        if record.subregion != expected:
            raise ManifestError(
                f"record {record.id!r}: subregion {record.subregion!r} != {expected!r} "
                f"for country {record.country!r}")
    if record.source == "dalle_street":
        if record.style not in STYLES:
            raise ManifestError(f"record {record.id!r}: dalle_street needs style in {STYLES}")
    elif record.style is not None:
        raise ManifestError(f"record {record.id!r}: style only allowed for dalle_street")
    if record.income_monthly is not None:
        if record.source != "dollar_street":
            raise ManifestError(f"record {record.id!r}: income only allowed for dollar_street")
        if not record.income_monthly > 0:
            raise ManifestError(f"record {record.id!r}: income must be positive")


def _record_from_row(row: Mapping, source: str | None, geoscheme: Geoscheme) -> ImageRecord:
    known = {f.name for f in fields(ImageRecord)}
    unknown = set(row) - known
    if unknown:
        raise ManifestError(f"unknown manifest fields {sorted(unknown)}")
    data = dict(row)
    row_source = data.get("source") or source
    if row_source is None:
        raise ManifestError("row has no source and none was given")
    if source is not None and data.get("source") not in (None, source):
        raise ManifestError(f"row source {data['source']!r} conflicts with expected {source!r}")
    data["source"] = row_source
    country = data.get("country", "") or ""
    if country:
        try:
            data["country"] = geoscheme.canonical_country(country)
        except UnknownCountryError:
            raise
    else:
        data["country"] = ""
    if not data.get("subregion"):
        if not data["country"]:
            raise ManifestError("row has neither subregion nor country")
        data["subregion"] = geoscheme.subregion_of(data["country"])
    data.setdefault("concept", "")
    income = data.get("income_monthly")
    if income is not None:
        data["income_monthly"] = float(income)
    record = ImageRecord(**data)
    validate_record(record, geoscheme)
    return record


def ingest_manifest(path: str | Path, source: str | None = None,
                    geoscheme: Geoscheme | None = None) -> list[ImageRecord]:
    """Read a JSONL manifest, validating every row.

    All offending rows are collected; the raised error reports each line
    number.  ``source``, when given, is enforced (and filled in) per row.
    """
    scheme = geoscheme if geoscheme is not None else load_geoscheme()
    records: list[ImageRecord] = []
    problems: list[tuple[int, Exception]] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                if not isinstance(row, dict):
                    raise ManifestError("row is not a JSON object")
                record = _record_from_row(row, source, scheme)
                if record.id in seen_ids:
                    raise ManifestError(f"duplicate record id {record.id!r}")
                seen_ids.add(record.id)
                records.append(record)
            except (json.JSONDecodeError, CorpusError, GeoError) as exc:
                problems.append((lineno, exc))
    if len(problems) == 1:
        lineno, exc = problems[0]
        if isinstance(exc, json.JSONDecodeError):
            raise ManifestError(f"line {lineno}: {exc}")
        raise type(exc)(f"line {lineno}: {exc}")
    if problems:
        summary = "; ".join(f"line {lineno}: {exc}" for lineno, exc in problems)
        raise ManifestError(f"{len(problems)} invalid manifest row(s): {summary}")
    return records


def record_to_row(record: ImageRecord) -> dict:
    row = {
        "id": record.id,
        "source": record.source,
        "image_path": record.image_path,
        "country": record.country,
        "subregion": record.subregion,
        "concept": record.concept,
    }
    if record.style is not None:
        row["style"] = record.style
    if record.income_monthly is not None:
        row["income_monthly"] = record.income_monthly
    return row


def write_manifest(records: Iterable[ImageRecord], path: str | Path) -> None:
    """Serialize records as JSONL; a later ingest reproduces them exactly."""
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record_to_row(record), ensure_ascii=False) + "\n")


def relabel_marvl(rows: Iterable[Mapping], geoscheme: Geoscheme | None = None) -> list[ImageRecord]:
    """Turn raw MaRVL rows (with a ``language`` code) into labelled records."""
    scheme = geoscheme if geoscheme is not None else load_geoscheme()
    records = []
    for row in rows:
        language = row.get("language", "")
        subregion = scheme.region_for_language(language)
        country = row.get("country", "") or ""
        if country:
            country = scheme.canonical_country(country)
        record = ImageRecord(
            id=row["id"],
            source="marvl",
            image_path=row["image_path"],
            country=country,
            subregion=subregion,
            concept=row.get("concept", ""),
        )
        validate_record(record, scheme)
        records.append(record)
    return records


@dataclass(frozen=True)
class GenerationJob:
    country: str
    concept: str
    style: str
    sample_index: int
    prompt: str


def render_generation_prompt(concept: str, country: str) -> str:
    """Fill the fixed scene-prompt template; empty fields are rejected."""
    if not concept or not concept.strip():
        raise EmptyFieldError("concept must be non-empty")
    if not country or not country.strip():
        raise EmptyFieldError("country must be non-empty")
    return GENERATION_PROMPT_TEMPLATE.format(concept=concept, country=country)


def plan_generation(countries: Sequence[str], concepts: Sequence[str],
                    samples_per_pair: int, styles: Sequence[str] = STYLES) -> list[GenerationJob]:
    """Deterministic job plan ordered by (country, concept, style, index)."""
    if samples_per_pair < 1:
        raise ValueError("samples_per_pair must be >= 1")
    for style in styles:
        if style not in STYLES:
            raise ValueError(f"unknown style {style!r}")
    jobs = []
    for country in countries:
        for concept in concepts:
            prompt = render_generation_prompt(concept, country)
            for style in styles:
                for index in range(1, samples_per_pair + 1):
                    jobs.append(GenerationJob(country, concept, style, index, prompt))
    return jobs


def load_concepts(path: str | Path | None = None) -> tuple[str, ...]:
    """The shipped concept list (also the Dollar Street include-list)."""
    if path is None:
        path = Path(str(resources.files("culturekit").joinpath("data", "concepts.txt")))
    concepts = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            concepts.append(line)
    return tuple(concepts)


@dataclass(frozen=True)
class QuartileAssignment:
    record_id: str
    broad_region: str
    quartile: int  # 1..4


def assign_income_quartiles(records: Sequence[ImageRecord],
                            geoscheme: Geoscheme | None = None) -> list[QuartileAssignment]:
    """Quartile per record from 25/50/75th income percentiles within each
    broad region; ties land in the lowest applicable quartile."""
    scheme = geoscheme if geoscheme is not None else load_geoscheme()
    groups: dict[str, list[ImageRecord]] = {}
    for record in records:
        if record.income_monthly is None:
            raise MissingIncomeError(f"record {record.id!r} has no income_monthly")
        broad = scheme.broad_region_of(record.subregion)
        groups.setdefault(broad, []).append(record)
    assignments = []
    for broad, members in groups.items():
        incomes = np.array([m.income_monthly for m in members], dtype=float)
        thresholds = np.percentile(incomes, [25.0, 50.0, 75.0])
        for member in members:
            # strictly-above count => ties fall to the lower quartile
            quartile = 1 + int(sum(member.income_monthly > t for t in thresholds))
            assignments.append(QuartileAssignment(member.id, broad, quartile))
    return assignments
