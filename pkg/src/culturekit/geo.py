"""Country/sub-region gazetteer and region-answer parsing.

The gazetteer ships as a versioned JSON data file mapping every corpus
country to one of 19 sub-regions and 5 broad regions.  A small set of
supplementary countries is recognised for lookups but is not part of the
canonical corpus country list.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable

LEVELS = ("country", "subregion", "continent")


class GeoError(Exception):
    """Base class for gazetteer lookup failures."""


class UnknownCountryError(GeoError, LookupError):
    pass


class UnknownSubregionError(GeoError, LookupError):
    pass


class UnknownLanguageError(GeoError, LookupError):
    pass


@dataclass(frozen=True)
class CountryEntry:
    name: str
    subregion: str
    broad_region: str
    aliases: tuple[str, ...] = ()
    supplementary: bool = False


@dataclass(frozen=True)
class GeoLabel:
    """A geographic guess or truth value at one level of the hierarchy."""

    level: str
    value: str

    def __post_init__(self) -> None:
        if self.level not in LEVELS:
            raise ValueError(f"unknown label level {self.level!r}")
        if not self.value or not self.value.strip():
            raise ValueError("label value must be non-empty")


class OutcomeKind(str, Enum):
    SUBREGION = "subregion"
    INVALID = "invalid"
    RESPONSIBLE_AI = "responsible_ai"


@dataclass(frozen=True)
class ParsedOutcome:
    """Total classification of a free-text region answer."""

    kind: OutcomeKind
    subregion: str | None = None

    def __post_init__(self) -> None:
        if self.kind is OutcomeKind.SUBREGION:
            if not self.subregion:
                raise ValueError("subregion outcome requires a subregion name")
        elif self.subregion is not None:
            raise ValueError(f"{self.kind.value} outcome must not carry a subregion")


def _norm_name(name: str) -> str:
    """Normalisation key for country-name lookup: NFKC, casefold, single spaces."""
    text = unicodedata.normalize("NFKC", name)
    text = text.replace("’", "'")
    return " ".join(text.casefold().split())


class Geoscheme:
    """In-memory gazetteer with alias-aware lookups."""

    def __init__(self, countries: Iterable[CountryEntry], subregions: dict[str, str],
                 languages: dict[str, str], version: str = "unversioned") -> None:
        self.version = version
        self._entries = list(countries)
        self._subregion_to_broad = dict(subregions)
        self._languages = dict(languages)
        self._by_key: dict[str, CountryEntry] = {}
        for entry in self._entries:
            for key in (entry.name, *entry.aliases):
                norm = _norm_name(key)
                other = self._by_key.get(norm)
                if other is not None and other.name != entry.name:
                    raise ValueError(f"name {key!r} maps to both {other.name} and {entry.name}")
                self._by_key[norm] = entry
        for entry in self._entries:
            if entry.subregion not in self._subregion_to_broad:
                raise ValueError(f"{entry.name}: unknown subregion {entry.subregion!r}")
            if self._subregion_to_broad[entry.subregion] != entry.broad_region:
                raise ValueError(f"{entry.name}: broad region disagrees with subregion table")

    # -- canonical sets ------------------------------------------------

    @property
    def countries(self) -> list[CountryEntry]:
        """Canonical corpus countries (supplementary entries excluded)."""
        return [e for e in self._entries if not e.supplementary]

    @property
    def country_names(self) -> list[str]:
        return [e.name for e in self.countries]

    @property
    def subregions(self) -> list[str]:
        return list(self._subregion_to_broad)

    @property
    def broad_regions(self) -> list[str]:
        seen: dict[str, None] = {}
        for broad in self._subregion_to_broad.values():
            seen.setdefault(broad)
        return list(seen)

    @property
    def language_codes(self) -> list[str]:
        return list(self._languages)

    # -- lookups -------------------------------------------------------

    def entry_for(self, country: str) -> CountryEntry:
        entry = self._by_key.get(_norm_name(country)) if country else None
        if entry is None:
            raise UnknownCountryError(f"unknown country {country!r}")
        return entry

    def canonical_country(self, country: str) -> str:
        return self.entry_for(country).name

    def subregion_of(self, country: str) -> str:
        return self.entry_for(country).subregion

    def broad_region_of(self, subregion: str) -> str:
        try:
            return self._subregion_to_broad[subregion]
        except KeyError:
            raise UnknownSubregionError(f"unknown subregion {subregion!r}") from None

    def broad_region_of_country(self, country: str) -> str:
        return self.entry_for(country).broad_region

    def region_for_language(self, code: str) -> str:
        try:
            return self._languages[code]
        except KeyError:
            raise UnknownLanguageError(f"unknown language code {code!r}") from None

    def is_country(self, name: str) -> bool:
        return _norm_name(name) in self._by_key if name else False


def _default_data_path(name: str) -> Path:
    return Path(str(resources.files("culturekit").joinpath("data", name)))


@lru_cache(maxsize=None)
def load_geoscheme(path: str | Path | None = None) -> Geoscheme:
    """Load the gazetteer from ``path`` or the packaged data file."""
    data_path = Path(path) if path is not None else _default_data_path("geoscheme.json")
    payload = json.loads(data_path.read_text(encoding="utf-8"))
    entries = [
        CountryEntry(
            name=row["name"],
            subregion=row["subregion"],
            broad_region=row["broad_region"],
            aliases=tuple(row.get("aliases", ())),
        )
        for row in payload["countries"]
    ]
    entries += [
        CountryEntry(
            name=row["name"],
            subregion=row["subregion"],
            broad_region=row["broad_region"],
            aliases=tuple(row.get("aliases", ())),
            supplementary=True,
        )
        for row in payload.get("supplementary_countries", ())
    ]
    return Geoscheme(
        entries,
        subregions=payload["subregions"],
        languages=payload.get("languages", {}),
        version=str(payload.get("version", "unversioned")),
    )


def marvl_region_for_language(code: str, geoscheme: Geoscheme | None = None) -> str:
    """Sub-region label for a MaRVL language code (id, sw, ta, tr, zh)."""
    scheme = geoscheme if geoscheme is not None else load_geoscheme()
    return scheme.region_for_language(code)


def load_refusal_patterns(path: str | Path | None = None) -> tuple[str, ...]:
    """Refusal substrings, one per line; blank lines and # comments skipped."""
    data_path = Path(path) if path is not None else _default_data_path("refusal_patterns.txt")
    patterns = []
    for line in data_path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            patterns.append(line)
    return tuple(patterns)


class RegionResponseParser:
    """Total parser from free-form model text to a :class:`ParsedOutcome`.

    A response naming exactly one canonical sub-region parses to that
    sub-region; longer names shadow shorter ones they contain, so a mention
    of "South-eastern Asia" never double-counts as "Eastern Asia".  A
    refusal-pattern hit on anything else yields RESPONSIBLE_AI; everything
    remaining (empty, gibberish, bare country names, conflicting mentions)
    is INVALID.
    """

    def __init__(self, geoscheme: Geoscheme | None = None,
                 refusal_patterns: Iterable[str] | None = None) -> None:
        scheme = geoscheme if geoscheme is not None else load_geoscheme()
        self._names = sorted(scheme.subregions, key=len, reverse=True)
        if refusal_patterns is None:
            refusal_patterns = load_refusal_patterns()
        self._patterns = tuple(p.casefold() for p in refusal_patterns)

    def parse(self, text: str) -> ParsedOutcome:
        if not text or not text.strip():
            return ParsedOutcome(OutcomeKind.INVALID)
        haystack = text.casefold()
        masked = haystack
        found: set[str] = set()
        for name in self._names:
            needle = name.casefold()
            start = masked.find(needle)
            if start == -1:
                continue
            found.add(name)
            while start != -1:
                masked = masked[:start] + "\0" * len(needle) + masked[start + len(needle):]
                start = masked.find(needle)
        if len(found) == 1:
            return ParsedOutcome(OutcomeKind.SUBREGION, found.pop())
        for pattern in self._patterns:
            if pattern in haystack:
                return ParsedOutcome(OutcomeKind.RESPONSIBLE_AI)
        return ParsedOutcome(OutcomeKind.INVALID)


@lru_cache(maxsize=1)
def _default_parser() -> RegionResponseParser:
    return RegionResponseParser()


def parse_region_response(text: str, parser: RegionResponseParser | None = None) -> ParsedOutcome:
    """Parse ``text`` with ``parser`` or a shared default-configured parser."""
    return (parser if parser is not None else _default_parser()).parse(text)
