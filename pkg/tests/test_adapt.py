import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

import io

from culturekit.adapt import (
    AdaptationRequest,
    AdaptationStageError,
    GroundingEmptyError,
    NoBoxesError,
    NoCandidatesError,
    NonFiniteScoreError,
    adapt,
    build_masks,
    clipscore,
    evaluate_adaptation,
    mask_to_png,
    outside_mask_mad,
    result_to_row,
    select_edit_phrases,
)
from culturekit.artifacts import (
    DetectionReport,
    ObjectEntry,
    table_from_rows,
)
from culturekit.corpus import ImageRecord, ingest_manifest
from culturekit.gateway import (
    BoundingBox,
    CallableTransport,
    Cassette,
    ModelGateway,
    SentinelTransport,
    TransportResponse,
)

from conftest import make_png


def _table(scores):
    rows = [{"country": country, "artifact": artifact, "score": score}
            for (country, artifact), score in scores.items()]
    return table_from_rows(rows)


def _report(names, record_id="r1", country="Greece"):
    return DetectionReport(
        record_id=record_id, country=country, concept="home",
        relevant_objects=[ObjectEntry(name=name) for name in names])


# -- request validation ---------------------------------------------------------

def test_request_validation():
    record = ImageRecord(id="a", source="dalle_street", image_path="x.png",
                         country="Greece", subregion="Southern Europe",
                         concept="home", style="vivid")
    AdaptationRequest(record=record, target_country="China")
    with pytest.raises(ValueError):
        AdaptationRequest(record=record, target_country="  ")
    with pytest.raises(ValueError):
        AdaptationRequest(record=record, target_country="Greece")
    with pytest.raises(ValueError):
        AdaptationRequest(record=record, target_country="China", k=0)


# -- phrase selection -------------------------------------------------------------

def test_select_ranks_scored_phrases_first():
    table = _table({("Greece", "olive tree"): 2.0, ("Greece", "amphora"): 3.0})
    report = _report(["Person", "Olive   Tree", "amphora", "olive tree"])
    assert select_edit_phrases(report, "Greece", table, 3) == [
        "amphora", "olive tree", "person"]
    assert select_edit_phrases(report, "Greece", table, 1) == ["amphora"]


def test_select_breaks_ties_lexicographically():
    table = _table({("Greece", "rug"): 1.0, ("Greece", "pot"): 1.0})
    report = _report(["rug", "pot"])
    assert select_edit_phrases(report, "Greece", table, 2) == ["pot", "rug"]


def test_select_ignores_other_countries_scores():
    table = _table({("Iran", "rug"): 9.0})
    report = _report(["rug", "cup"])
    # neither phrase is scored for Greece: plain lexicographic order
    assert select_edit_phrases(report, "Greece", table, 2) == ["cup", "rug"]


def test_select_requires_candidates_and_positive_k():
    table = _table({("Greece", "x"): 1.0})
    with pytest.raises(NoCandidatesError):
        select_edit_phrases(_report([]), "Greece", table, 1)
    with pytest.raises(ValueError):
        select_edit_phrases(_report(["x"]), "Greece", table, 0)


# -- masks -------------------------------------------------------------------------

def _oracle_mask(width, height, boxes):
    mask = np.zeros((height, width), dtype=bool)
    for y in range(height):
        for x in range(width):
            for box in boxes:
                if (math.floor(box.x0) <= x < math.ceil(box.x1)
                        and math.floor(box.y0) <= y < math.ceil(box.y1)):
                    mask[y, x] = True
                    break
    return mask


def test_build_masks_unions_rectangles():
    image = make_png(16, 12)
    boxes = [BoundingBox(1, 1, 4, 4), BoundingBox(3, 2, 7.5, 6.25)]
    mask = build_masks(image, boxes)
    assert mask.shape == (12, 16)
    assert np.array_equal(mask, _oracle_mask(16, 12, boxes))
    # fractional edges rasterize outward
    assert mask[6, 7] and not mask[7, 7]


def test_build_masks_guards():
    image = make_png(8, 8)
    with pytest.raises(NoBoxesError):
        build_masks(image, [])
    with pytest.raises(ValueError):
        build_masks(image, [BoundingBox(0, 0, 9, 4)])


_box_strategy = st.builds(
    BoundingBox,
    st.floats(min_value=0, max_value=10, allow_nan=False),
    st.floats(min_value=0, max_value=10, allow_nan=False),
    st.floats(min_value=10.25, max_value=20, allow_nan=False),
    st.floats(min_value=10.25, max_value=20, allow_nan=False),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(_box_strategy, min_size=1, max_size=4))
def test_mask_area_matches_per_pixel_oracle(boxes):
    image = make_png(20, 20)
    mask = build_masks(image, boxes)
    oracle = _oracle_mask(20, 20, boxes)
    assert int(mask.sum()) == int(oracle.sum())
    assert np.array_equal(mask, oracle)


def test_mask_to_png_round_trip():
    mask = np.zeros((6, 5), dtype=bool)
    mask[2:4, 1:3] = True
    decoded = np.asarray(Image.open(io.BytesIO(mask_to_png(mask))))
    assert decoded.shape == (6, 5)
    assert set(np.unique(decoded)) == {0, 255}
    assert np.array_equal(decoded == 255, mask)


# -- scoring ------------------------------------------------------------------------

def _embed_gateway(tmp_path, vectors):
    def fn(request):
        if request.params["kind"] == "image":
            return TransportResponse(json={"vector": vectors["image"]})
        return TransportResponse(json={"vector": vectors[request.params["text"]]})

    return ModelGateway(mode="record", cassette=Cassette(tmp_path / "t.jsonl"),
                        transport=CallableTransport(fn))


def test_clipscore_scales_cosine(tmp_path):
    gateway = _embed_gateway(tmp_path, {"image": [1.0, 0.0],
                                        "Greece": [0.6, 0.8]})
    assert clipscore(make_png(), "Greece", gateway) == pytest.approx(2.5 * 0.6)


def test_clipscore_clamps_negative_cosine(tmp_path):
    gateway = _embed_gateway(tmp_path, {"image": [1.0, 0.0],
                                        "Greece": [-1.0, 0.0]})
    assert clipscore(make_png(), "Greece", gateway) == 0.0


@pytest.mark.parametrize("scores,expected", [
    ((20.0, 10.0, 11.52, 15.07), (-8.48, 5.07, True)),
    ((15.0, 9.0, 11.53, 9.11), (-3.47, 0.11, True)),
    ((18.0, 8.0, 11.87, 13.81), (-6.13, 5.81, True)),
    ((12.0, 9.0, 12.0, 9.0), (0.0, 0.0, False)),     # identity edit
    ((12.0, 9.0, 11.0, 9.0), (-1.0, 0.0, False)),    # target must strictly rise
    ((12.0, 9.0, 13.0, 10.0), (1.0, 1.0, False)),    # source must strictly drop
])
def test_evaluate_adaptation(scores, expected):
    delta_source, delta_target, success = evaluate_adaptation(*scores)
    assert delta_source == pytest.approx(expected[0], abs=1e-9)
    assert delta_target == pytest.approx(expected[1], abs=1e-9)
    assert success is expected[2]


def test_evaluate_adaptation_rejects_non_finite():
    with pytest.raises(NonFiniteScoreError):
        evaluate_adaptation(float("nan"), 1.0, 1.0, 1.0)
    with pytest.raises(NonFiniteScoreError):
        evaluate_adaptation(1.0, float("inf"), 1.0, 1.0)


# -- locality -------------------------------------------------------------------------

def _edit_region(image_bytes, box, color):
    image = Image.open(io.BytesIO(image_bytes)).convert("RGB")
    pixels = np.array(image)
    pixels[box[1]:box[3], box[0]:box[2]] = color
    out = io.BytesIO()
    Image.fromarray(pixels).save(out, format="PNG")
    return out.getvalue()


def test_outside_mask_mad_zero_for_in_mask_edits():
    source = make_png(16, 16, (50, 50, 50))
    edited = _edit_region(source, (2, 2, 6, 6), (200, 0, 0))
    mask = np.zeros((16, 16), dtype=bool)
    mask[2:6, 2:6] = True
    assert outside_mask_mad(source, edited, mask) == 0.0
    assert outside_mask_mad(source, source, mask) == 0.0


def test_outside_mask_mad_detects_leaks():
    source = make_png(16, 16, (50, 50, 50))
    edited = _edit_region(source, (0, 0, 16, 16), (60, 50, 50))  # +10 on red everywhere
    mask = np.zeros((16, 16), dtype=bool)
    mask[0:8, :] = True
    # outside the mask every pixel differs by 10 on one of three channels
    expected = (10 / 3) / 255.0
    assert outside_mask_mad(source, edited, mask) == pytest.approx(expected)
    # full mask leaves nothing to compare
    assert outside_mask_mad(source, edited, np.ones((16, 16), dtype=bool)) == 0.0


def test_outside_mask_mad_shape_mismatch():
    with pytest.raises(ValueError):
        outside_mask_mad(make_png(8, 8), make_png(9, 9), np.zeros((8, 8), dtype=bool))


# -- full pipeline on the recorded fixture ----------------------------------------------

@pytest.fixture(scope="module")
def adapt_fixture(data_dir):
    with open(data_dir / "scores_no_adj.jsonl", encoding="utf-8") as handle:
        table = table_from_rows(json.loads(line) for line in handle)
    record = ingest_manifest(data_dir / "manifest_adapt.jsonl")[0]
    return record, table


def _adapt_gateway(data_dir):
    return ModelGateway(mode="replay",
                        cassette=Cassette.load(data_dir / "cassette_adapt.jsonl"),
                        transport=SentinelTransport())


def test_adapt_replays_recorded_run(data_dir, adapt_fixture, tmp_path):
    record, table = adapt_fixture
    request = AdaptationRequest(record=record, target_country="China", k=1)
    result = adapt(request, _adapt_gateway(data_dir), table,
                   image_root=data_dir, workdir=tmp_path / "artifacts")
    assert result.phrases == ["olive tree"]
    assert len(result.boxes) == 1
    box = result.boxes[0]
    assert (box.x0, box.y0, box.x1, box.y1) == (10.0, 12.0, 40.0, 44.0)
    assert result.delta_source == pytest.approx(-1.5, abs=1e-9)
    assert result.delta_target == pytest.approx(1.5, abs=1e-9)
    assert result.success is True
    assert result.outside_mask_mad == 0.0
    assert result.locality_ok is True
    for kind in ("report", "boxes", "mask", "edited"):
        assert kind in result.artifact_paths
        assert (tmp_path / "artifacts").joinpath(
            result.artifact_paths[kind].rsplit("/", 1)[-1]).exists()

    row = result_to_row(result)
    assert row["boxes"][0]["phrase"] == "olive tree"
    assert row["success"] is True
    assert "edited_image" not in row


def test_adapt_per_phrase_route_matches_single_phrase(data_dir, adapt_fixture):
    record, table = adapt_fixture
    request = AdaptationRequest(record=record, target_country="China", k=1)
    result = adapt(request, _adapt_gateway(data_dir), table,
                   image_root=data_dir, per_phrase=True)
    assert result.phrases == ["olive tree"]
    assert result.success is True


def test_adapt_wraps_stage_failures(data_dir, adapt_fixture, tmp_path):
    record, table = adapt_fixture
    request = AdaptationRequest(record=record, target_country="China", k=1)
    gateway = ModelGateway(mode="replay", cassette=Cassette(tmp_path / "empty.jsonl"))
    with pytest.raises(AdaptationStageError) as excinfo:
        adapt(request, gateway, table, image_root=data_dir)
    assert excinfo.value.stage == "detect"


def test_adapt_raises_when_grounding_finds_nothing(adapt_fixture, data_dir, tmp_path):
    record, table = adapt_fixture
    payload = json.dumps({
        "relevant_objects": [{"name": "olive tree", "count": 1}],
        "other_objects": [],
    })

    def fn(request):
        if request.op == "chat_vision":
            return TransportResponse(json={"text": payload})
        if request.op == "ground":
            return TransportResponse(json={"boxes": []})
        raise AssertionError(f"unexpected op {request.op}")

    gateway = ModelGateway(mode="record", cassette=Cassette(tmp_path / "t.jsonl"),
                           transport=CallableTransport(fn))
    request = AdaptationRequest(record=record, target_country="China", k=1)
    with pytest.raises(GroundingEmptyError):
        adapt(request, gateway, table, image_root=data_dir)
