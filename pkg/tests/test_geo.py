from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from culturekit.geo import (
    GeoLabel,
    OutcomeKind,
    ParsedOutcome,
    RegionResponseParser,
    UnknownCountryError,
    UnknownLanguageError,
    UnknownSubregionError,
    load_geoscheme,
    marvl_region_for_language,
    parse_region_response,
)

from conftest import DATA_DIR

BROAD_REGIONS = {"Africa", "Asia", "Americas", "Europe", "Oceania"}


def _load_parser_cases():
    cases = []
    with open(DATA_DIR / "parser_cases.jsonl", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                cases.append(json.loads(line))
    return cases


# -- gazetteer shape ------------------------------------------------------

def test_counts(scheme):
    assert len(scheme.countries) == 67
    assert len(scheme.subregions) == 19
    assert set(scheme.broad_regions) == BROAD_REGIONS


def test_every_country_round_trips(scheme):
    for entry in scheme.countries:
        assert scheme.canonical_country(entry.name) == entry.name
        assert scheme.subregion_of(entry.name) == entry.subregion
        assert scheme.broad_region_of(entry.subregion) == entry.broad_region
        assert scheme.broad_region_of_country(entry.name) == entry.broad_region


def test_every_subregion_has_a_country(scheme):
    populated = {entry.subregion for entry in scheme.countries}
    assert populated == set(scheme.subregions)


def test_specific_subregion_placements(scheme):
    assert scheme.subregion_of("Iran") == "Western Asia"
    assert scheme.subregion_of("Mexico") == "Northern America"
    assert scheme.subregion_of("Burundi") == "Middle Africa"
    assert scheme.subregion_of("Rwanda") == "Eastern Africa"


def test_western_asia_membership(scheme):
    for name in ("Iran", "Jordan", "Lebanon", "Palestine", "Turkey", "Oman"):
        assert scheme.subregion_of(name) == "Western Asia"


def test_oman_is_supplementary(scheme):
    assert scheme.is_country("Oman")
    assert "Oman" not in scheme.country_names
    assert scheme.entry_for("Oman").supplementary


def test_alias_lookup(scheme):
    assert scheme.canonical_country("Türkiye") == "Turkey"
    assert scheme.canonical_country("Ivory Coast") == "Cote d'Ivoire"
    assert scheme.canonical_country("USA") == "United States"
    assert scheme.canonical_country("Burma") == "Myanmar"
    assert scheme.canonical_country("Viet Nam") == "Vietnam"


def test_lookup_normalizes_case_space_and_apostrophes(scheme):
    assert scheme.canonical_country("  greece ") == "Greece"
    assert scheme.canonical_country("GREECE") == "Greece"
    # curly apostrophe as emitted by many tokenizers
    assert scheme.canonical_country("Côte d’Ivoire") == "Cote d'Ivoire"


def test_unknown_lookups_raise(scheme):
    with pytest.raises(UnknownCountryError):
        scheme.subregion_of("Atlantis")
    with pytest.raises(LookupError):  # UnknownCountryError is a LookupError
        scheme.canonical_country("")
    with pytest.raises(UnknownSubregionError):
        scheme.broad_region_of("Outer Space")
    with pytest.raises(UnknownLanguageError):
        scheme.region_for_language("xx")


def test_marvl_language_regions(scheme):
    expected = {
        "id": "South-eastern Asia",
        "sw": "Eastern Africa",
        "ta": "Southern Asia",
        "tr": "Western Asia",
        "zh": "Eastern Asia",
    }
    assert set(scheme.language_codes) == set(expected)
    for code, subregion in expected.items():
        assert marvl_region_for_language(code, scheme) == subregion


def test_load_geoscheme_is_cached():
    assert load_geoscheme() is load_geoscheme()


# -- label / outcome invariants -------------------------------------------

def test_geolabel_rejects_unknown_level():
    with pytest.raises(ValueError):
        GeoLabel("city", "Athens")
    with pytest.raises(ValueError):
        GeoLabel("country", "  ")


def test_parsed_outcome_consistency():
    with pytest.raises(ValueError):
        ParsedOutcome(OutcomeKind.SUBREGION)  # needs a subregion
    with pytest.raises(ValueError):
        ParsedOutcome(OutcomeKind.INVALID, subregion="Western Asia")


# -- response parsing -------------------------------------------------------

def test_parser_fixture_table(parser):
    cases = _load_parser_cases()
    assert len(cases) >= 50
    for case in cases:
        outcome = parser.parse(case["text"])
        assert outcome.kind.value == case["kind"], case["text"]
        assert outcome.subregion == case["subregion"], case["text"]


def test_parse_region_response_uses_default_parser():
    outcome = parse_region_response("Definitely Western Asia")
    assert outcome == ParsedOutcome(OutcomeKind.SUBREGION, "Western Asia")


def test_subregion_beats_refusal(parser):
    outcome = parser.parse("I'm sorry, but this is Western Asia.")
    assert outcome.kind is OutcomeKind.SUBREGION


def test_masking_prevents_double_count(parser):
    # "South-eastern Asia" contains "Eastern Asia"; one mention must not
    # read as two different sub-regions.
    outcome = parser.parse("South-eastern Asia")
    assert outcome == ParsedOutcome(OutcomeKind.SUBREGION, "South-eastern Asia")


@given(st.text(max_size=300))
def test_parser_is_total(text):
    outcome = parse_region_response(text)
    assert isinstance(outcome, ParsedOutcome)
    if outcome.kind is OutcomeKind.SUBREGION:
        assert outcome.subregion in load_geoscheme().subregions


@given(st.sampled_from(load_geoscheme().subregions))
def test_parser_accepts_every_bare_subregion(name):
    assert parse_region_response(name) == ParsedOutcome(OutcomeKind.SUBREGION, name)
