import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from culturekit.awareness import (
    DEFAULT_REGION_PROMPT,
    ClassificationResult,
    EmptyMatrixError,
    HumanLabelSet,
    UnmatchedRecordError,
    accuracy,
    build_confusion,
    classify_region,
    income_disparity,
    load_human_labels,
    result_to_row,
    score_human_labels,
)
from culturekit.corpus import ImageRecord, QuartileAssignment, ingest_manifest
from culturekit.gateway import Cassette, ModelGateway, SentinelTransport
from culturekit.geo import GeoLabel, OutcomeKind, ParsedOutcome


def _result(record_id, true_subregion, kind, subregion=None, error=None):
    outcome = None if error else ParsedOutcome(kind=kind, subregion=subregion)
    return ClassificationResult(record_id=record_id, true_subregion=true_subregion,
                                raw_response=None if error else "x",
                                outcome=outcome, error=error)


def _hit(record_id, subregion):
    return _result(record_id, subregion, OutcomeKind.SUBREGION, subregion)


def _miss(record_id, true_subregion, predicted):
    return _result(record_id, true_subregion, OutcomeKind.SUBREGION, predicted)


# -- end-to-end classification over the recorded fixture ---------------------

@pytest.fixture(scope="module")
def eval_results(data_dir, parser):
    records = ingest_manifest(data_dir / "manifest.jsonl")
    gateway = ModelGateway(mode="replay",
                           cassette=Cassette.load(data_dir / "cassette_eval.jsonl"),
                           transport=SentinelTransport())
    return [classify_region(record, gateway, parser, image_root=data_dir)
            for record in records]


def test_classify_region_replays_recorded_answers(eval_results):
    by_id = {result.record_id: result for result in eval_results}
    assert by_id["e1"].outcome.subregion == "Southern Europe"
    assert by_id["e2"].outcome.kind is OutcomeKind.RESPONSIBLE_AI
    assert by_id["e3"].outcome.subregion == "Eastern Asia"
    assert by_id["e4"].outcome.subregion == "Western Africa"
    assert all(result.error is None for result in eval_results)
    assert all(result.raw_response for result in eval_results)


def test_fixture_accuracy(eval_results):
    matrix = build_confusion(eval_results)
    assert matrix.total() == 4
    assert accuracy(matrix) == pytest.approx(3 / 4)
    assert matrix.cell("Western Asia", "ResponsibleAI") == 1
    assert matrix.cell("Southern Europe", "Southern Europe") == 1


def test_classify_region_captures_gateway_and_io_errors(data_dir, parser, tmp_path):
    gateway = ModelGateway(mode="replay", cassette=Cassette(tmp_path / "empty.jsonl"))
    record = ImageRecord(id="x", source="dollar_street", image_path="images/eval_greece.png",
                         country="Greece", subregion="Southern Europe", concept="home")
    result = classify_region(record, gateway, parser, image_root=data_dir)
    assert result.outcome is None
    assert "CassetteMissError" in result.error

    missing = ImageRecord(id="y", source="dollar_street", image_path="nope.png",
                          country="Greece", subregion="Southern Europe", concept="home")
    result = classify_region(missing, gateway, parser, image_root=data_dir)
    assert result.outcome is None and "nope.png" in result.error


def test_default_prompt_mentions_subregions():
    assert "sub-region" in DEFAULT_REGION_PROMPT


# -- confusion matrix ---------------------------------------------------------

def test_confusion_shape_and_placement(scheme):
    results = [
        _hit("1", "Southern Europe"),
        _miss("2", "Southern Europe", "Western Europe"),
        _result("3", "Western Asia", OutcomeKind.RESPONSIBLE_AI),
        _result("4", "Eastern Asia", OutcomeKind.INVALID),
        _result("5", "Eastern Asia", OutcomeKind.SUBREGION, "Eastern Asia",
                error="ProviderError: boom"),
    ]
    matrix = build_confusion(results, scheme)
    assert matrix.counts.shape == (19, 21)
    assert matrix.pred_labels[-2:] == ("Invalid", "ResponsibleAI")
    assert matrix.total() == 4
    assert matrix.cell("Southern Europe", "Southern Europe") == 1
    assert matrix.cell("Southern Europe", "Western Europe") == 1
    assert matrix.cell("Western Asia", "ResponsibleAI") == 1
    assert matrix.cell("Eastern Asia", "Invalid") == 1
    assert accuracy(matrix) == pytest.approx(1 / 4)


def test_confusion_row_sums_count_evaluated_records(scheme):
    results = [_hit("a", "Melanesia"), _miss("b", "Melanesia", "Caribbean"),
               _result("c", "Melanesia", OutcomeKind.INVALID)]
    matrix = build_confusion(results, scheme)
    row = matrix.counts[matrix.row_index("Melanesia")]
    assert int(row.sum()) == 3


def test_accuracy_requires_records(scheme):
    with pytest.raises(EmptyMatrixError):
        accuracy(build_confusion([], scheme))


def test_confusion_additivity(scheme):
    first = [_hit("1", "Caribbean"), _miss("2", "Caribbean", "Central America")]
    second = [_hit("3", "Caribbean"), _result("4", "Southern Asia", OutcomeKind.INVALID)]
    combined = build_confusion(first + second, scheme)
    summed = build_confusion(first, scheme).add(build_confusion(second, scheme))
    assert np.array_equal(combined.counts, summed.counts)


def test_add_rejects_mismatched_labels(scheme):
    matrix = build_confusion([_hit("1", "Caribbean")], scheme)
    other = build_confusion([_hit("1", "Caribbean")], scheme)
    shrunk = type(other)(other.true_labels[:-1] + ("Elsewhere",), other.pred_labels, other.counts)
    with pytest.raises(ValueError):
        matrix.add(shrunk)


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_accuracy_is_trace_over_total(scheme, data):
    subregions = list(scheme.subregions)
    n = data.draw(st.integers(min_value=1, max_value=40))
    results = []
    for i in range(n):
        true = data.draw(st.sampled_from(subregions))
        kind = data.draw(st.sampled_from(["hit", "miss", "invalid", "refusal"]))
        if kind == "hit":
            results.append(_hit(str(i), true))
        elif kind == "miss":
            predicted = data.draw(st.sampled_from(subregions))
            results.append(_miss(str(i), true, predicted))
        elif kind == "invalid":
            results.append(_result(str(i), true, OutcomeKind.INVALID))
        else:
            results.append(_result(str(i), true, OutcomeKind.RESPONSIBLE_AI))
    matrix = build_confusion(results, scheme)
    expected = sum(
        1 for r in results
        if r.outcome.kind is OutcomeKind.SUBREGION and r.outcome.subregion == r.true_subregion
    )
    assert matrix.total() == n
    assert accuracy(matrix) == expected / n
    diagonal = int(np.trace(matrix.counts[:, :len(matrix.true_labels)]))
    assert diagonal == expected


# -- income disparity ----------------------------------------------------------

def test_income_disparity_groups_by_region_and_quartile():
    results = [_hit("a", "Southern Europe"), _miss("b", "Southern Europe", "Western Europe"),
               _hit("c", "Eastern Asia")]
    assignments = [QuartileAssignment("a", "Europe", 1),
                   QuartileAssignment("b", "Europe", 1),
                   QuartileAssignment("c", "Asia", 4)]
    table = income_disparity(results, assignments)
    assert set(table) == {"Asia", "Europe"}
    europe = table["Europe"][1]
    assert (europe.correct, europe.total) == (1, 2)
    assert europe.accuracy == pytest.approx(0.5)
    assert table["Asia"][4].accuracy == 1.0


def test_income_disparity_skips_errored_and_requires_assignments():
    errored = _result("a", "Southern Europe", OutcomeKind.SUBREGION,
                      "Southern Europe", error="boom")
    assert income_disparity([errored], []) == {}
    with pytest.raises(UnmatchedRecordError):
        income_disparity([_hit("ghost", "Southern Europe")], [])


# -- human labels -----------------------------------------------------------------

def _truth():
    return [ImageRecord(id="r1", source="dollar_street", image_path="a.png",
                        country="Greece", subregion="Southern Europe", concept="home"),
            ImageRecord(id="r2", source="dollar_street", image_path="b.png",
                        country="China", subregion="Eastern Asia", concept="home")]


def test_score_human_labels_levels_and_bounds():
    label_sets = [
        HumanLabelSet("r1", (GeoLabel("country", "Greece"),
                             GeoLabel("subregion", "Southern Europe"),
                             GeoLabel("continent", "Europe"))),
        HumanLabelSet("r2", (GeoLabel("country", "Japan"),
                             GeoLabel("continent", "Asia"))),
    ]
    scores = score_human_labels(label_sets, _truth())
    assert scores["country"] == 0.5        # r2 guessed the wrong country
    assert scores["subregion"] == 0.5      # r2 never named one
    assert scores["continent"] == 1.0
    assert scores["union"] == 1.0
    assert scores["intersection"] == 0.5
    for level in ("country", "subregion", "continent"):
        assert scores["intersection"] <= scores[level] <= scores["union"]


def test_score_human_labels_canonicalizes_country_guesses():
    label_sets = [HumanLabelSet("r1", (GeoLabel("country", "  GREECE "),))]
    scores = score_human_labels(label_sets, _truth())
    assert scores["country"] == 1.0


def test_score_human_labels_tolerates_out_of_gazetteer_guess():
    label_sets = [HumanLabelSet("r1", (GeoLabel("country", "Atlantis"),))]
    scores = score_human_labels(label_sets, _truth())
    assert scores["country"] == 0.0


def test_score_human_labels_rejects_bad_labels_and_records():
    with pytest.raises(ValueError):
        score_human_labels(
            [HumanLabelSet("r1", (GeoLabel("subregion", "Southern French Riviera"),))],
            _truth())
    with pytest.raises(UnmatchedRecordError):
        score_human_labels([HumanLabelSet("ghost", (GeoLabel("continent", "Asia"),))],
                           _truth())
    with pytest.raises(EmptyMatrixError):
        score_human_labels([], _truth())


def test_label_set_size_limits():
    labels = tuple(GeoLabel("continent", "Asia") for _ in range(6))
    with pytest.raises(ValueError):
        HumanLabelSet("r1", labels)
    with pytest.raises(ValueError):
        HumanLabelSet("r1", ())


def test_load_human_labels_groups_by_annotator(tmp_path):
    path = tmp_path / "labels.jsonl"
    path.write_text(
        '{"record_id": "r1", "annotator_id": "a", "level": "country", "value": "Greece"}\n'
        '{"record_id": "r1", "annotator_id": "a", "level": "continent", "value": "Europe"}\n'
        '{"record_id": "r1", "annotator_id": "b", "level": "continent", "value": "Asia"}\n')
    label_sets = load_human_labels(path)
    assert {(s.record_id, s.annotator_id, len(s.labels)) for s in label_sets} == {
        ("r1", "a", 2), ("r1", "b", 1)}


# -- serialization -----------------------------------------------------------------

def test_result_to_row_shapes():
    row = result_to_row(_hit("a", "Southern Europe"))
    assert row["outcome"] == {"kind": "subregion", "subregion": "Southern Europe"}
    assert "error" not in row

    errored = _result("b", "Southern Europe", OutcomeKind.INVALID, error="boom")
    row = result_to_row(errored)
    assert row["outcome"] is None
    assert row["error"] == "boom"
