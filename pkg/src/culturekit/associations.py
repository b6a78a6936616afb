"""Color and people-count associations over an image corpus.

Color statistics work on per-image mean RGB vectors: the global mean is the
unweighted mean over image means, per-country deltas are country mean minus
global mean, and per-channel outliers sit strictly outside one standard
deviation around the mean delta (the same banding rule the salience scores
use).  People counts from detection reports collapse into three buckets.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .artifacts import MORE_THAN_TEN, DetectionReport
from .corpus import ImageRecord


class AssociationError(Exception):
    pass


class DecodeError(AssociationError, ValueError):
    pass


class EmptyManifestError(AssociationError):
    pass


@dataclass(frozen=True)
class RgbVector:
    r: float
    g: float
    b: float

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.g, self.b], dtype=float)

    @classmethod
    def from_array(cls, values: np.ndarray) -> "RgbVector":
        return cls(float(values[0]), float(values[1]), float(values[2]))


def mean_rgb(image: bytes | str | Path | Image.Image) -> RgbVector:
    """Per-channel mean over all pixels of one image (0..255 scale)."""
    try:
        if isinstance(image, Image.Image):
            pil = image
        elif isinstance(image, bytes):
            pil = Image.open(io.BytesIO(image))
            pil.load()
        else:
            pil = Image.open(image)
            pil.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"cannot decode image: {exc}") from None
    pixels = np.asarray(pil.convert("RGB"), dtype=np.float64)
    means = pixels.reshape(-1, 3).mean(axis=0)
    return RgbVector.from_array(means)


@dataclass(frozen=True)
class ColorDeltaRow:
    country: str
    image_count: int
    mean: RgbVector
    delta: RgbVector
    outlier_r: bool
    outlier_g: bool
    outlier_b: bool


@dataclass
class ColorDeltaTable:
    rows: list[ColorDeltaRow]
    global_mean: RgbVector
    delta_mean: RgbVector
    delta_std: RgbVector
    total_images: int


def aggregate_color_deltas(vectors_by_country: Mapping[str, Sequence[RgbVector]], *,
                           country_weighted: bool = False) -> ColorDeltaTable:
    """Country-vs-global color deltas from per-image mean vectors.

    The global mean weights every image equally; pass country_weighted=True
    to average country means instead.  Outlier flags mark per-channel deltas
    strictly outside one standard deviation around the mean delta.
    """
    by_country = {country: [v.as_array() for v in vectors]
                  for country, vectors in vectors_by_country.items() if vectors}
    if not by_country:
        raise EmptyManifestError("no images to analyse")
    all_means = [vector for vectors in by_country.values() for vector in vectors]
    country_means = {country: np.mean(vectors, axis=0)
                     for country, vectors in by_country.items()}
    if country_weighted:
        global_mean = np.mean(list(country_means.values()), axis=0)
    else:
        global_mean = np.mean(all_means, axis=0)

    deltas = {country: mean - global_mean for country, mean in country_means.items()}
    stacked = np.array(list(deltas.values()))
    delta_mean = stacked.mean(axis=0)
    delta_std = stacked.std(axis=0)

    rows = []
    for country in sorted(deltas):
        delta = deltas[country]
        flags = np.abs(delta - delta_mean) > delta_std
        rows.append(ColorDeltaRow(
            country=country,
            image_count=len(by_country[country]),
            mean=RgbVector.from_array(country_means[country]),
            delta=RgbVector.from_array(delta),
            outlier_r=bool(flags[0]),
            outlier_g=bool(flags[1]),
            outlier_b=bool(flags[2]),
        ))
    return ColorDeltaTable(
        rows=rows,
        global_mean=RgbVector.from_array(global_mean),
        delta_mean=RgbVector.from_array(delta_mean),
        delta_std=RgbVector.from_array(delta_std),
        total_images=len(all_means),
    )


def color_deltas(records: Sequence[ImageRecord], *,
                 image_root: str | Path | None = None,
                 country_weighted: bool = False) -> ColorDeltaTable:
    """Per-country mean-RGB deltas for a manifest; reads every image."""
    if not records:
        raise EmptyManifestError("no records to analyse")
    root = Path(image_root) if image_root is not None else None
    vectors: dict[str, list[RgbVector]] = {}
    for record in records:
        path = Path(record.image_path)
        if root is not None and not path.is_absolute():
            path = root / path
        vectors.setdefault(record.country, []).append(mean_rgb(path))
    return aggregate_color_deltas(vectors, country_weighted=country_weighted)


# -- people buckets ---------------------------------------------------------

class PeopleBucket(str, Enum):
    B1 = "1-4"
    B2 = "5-10"
    B3 = ">10"


_WORD_RE = re.compile(r"[a-z]+")


def load_person_synonyms(path: str | Path | None = None) -> frozenset[str]:
    if path is None:
        path = Path(str(resources.files("culturekit").joinpath("data", "person_synonyms.txt")))
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line.lower())
    return frozenset(words)


def bucket_people(report: DetectionReport,
                  synonyms: frozenset[str] | None = None) -> PeopleBucket | None:
    """Bucket the number of people in a report: 1-4, 5-10, or more than 10.

    An entry counts as people when any word of its name is a person synonym.
    Exact counts are summed; any "more than 10" person entry forces the top
    bucket.  Reports without person entries return None.
    """
    if synonyms is None:
        synonyms = load_person_synonyms()
    total = 0
    saw_person = False
    for entry in report.all_objects():
        words = _WORD_RE.findall(entry.name.lower())
        if not any(word in synonyms for word in words):
            continue
        saw_person = True
        if entry.count == MORE_THAN_TEN:
            return PeopleBucket.B3
        total += int(entry.count)
    if not saw_person:
        return None
    if total < 5:
        return PeopleBucket.B1
    if total <= 10:
        return PeopleBucket.B2
    return PeopleBucket.B3


def aggregate_buckets(reports: Iterable[DetectionReport],
                      synonyms: frozenset[str] | None = None) -> dict[str, dict[str, int]]:
    """Histogram of people buckets per country; person-free reports excluded."""
    if synonyms is None:
        synonyms = load_person_synonyms()
    table: dict[str, dict[str, int]] = {}
    for report in reports:
        bucket = bucket_people(report, synonyms)
        if bucket is None:
            continue
        histogram = table.setdefault(report.country,
                                     {b.value: 0 for b in PeopleBucket})
        histogram[bucket.value] += 1
    return {country: table[country] for country in sorted(table)}


def delta_rows(table: ColorDeltaTable) -> list[dict]:
    rows = []
    for row in table.rows:
        rows.append({
            "country": row.country,
            "image_count": row.image_count,
            "mean_r": row.mean.r, "mean_g": row.mean.g, "mean_b": row.mean.b,
            "delta_r": row.delta.r, "delta_g": row.delta.g, "delta_b": row.delta.b,
            "outlier_r": row.outlier_r, "outlier_g": row.outlier_g, "outlier_b": row.outlier_b,
        })
    return rows


def delta_summary(table: ColorDeltaTable) -> dict:
    return {
        "total_images": table.total_images,
        "countries": len(table.rows),
        "global_mean": [table.global_mean.r, table.global_mean.g, table.global_mean.b],
        "delta_mean": [table.delta_mean.r, table.delta_mean.g, table.delta_mean.b],
        "delta_std": [table.delta_std.r, table.delta_std.g, table.delta_std.b],
    }
