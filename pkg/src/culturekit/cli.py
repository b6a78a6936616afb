"""Command-line entry points.

Every command materialises one run directory under ``--out`` containing a
config snapshot, deterministic data files under ``data/``, plots under
``plots/``, and a ``run_summary.json`` with the processed/errored/quarantined
accounting.  Data files never embed wall-clock time or absolute paths, so a
replayed run is byte-reproducible; timing lives in the summary only.

Exit codes: 0 on success, 1 for configuration problems, 2 when the failure
rate exceeds ``--max-failure-rate``.
"""

from __future__ import annotations

import json
import logging
import secrets
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import click

from . import __version__
from .adapt import (
    AdaptationRequest,
    AdaptError,
    adapt as run_adapt,
)
from .adapt import result_to_row as adaptation_row
from .artifacts import (
    MODES,
    EmptyCorpusError,
    EmptySummaryError,
    SchemaInvalidError,
    detect_objects,
    normalize_artifacts,
    report_from_dict,
    report_to_dict,
    salience_outliers,
    score_rows,
    score_summary,
    summarize_objects,
    table_from_rows,
    tfidf_scores,
)
from .associations import (
    AssociationError,
    RgbVector,
    aggregate_buckets,
    aggregate_color_deltas,
    delta_rows,
    delta_summary,
    mean_rgb,
)
from .awareness import (
    accuracy,
    build_confusion,
    classify_region,
    income_disparity,
)
from .awareness import result_to_row as classification_row
from .corpus import (
    SOURCES,
    CorpusError,
    ImageRecord,
    assign_income_quartiles,
    ingest_manifest,
    load_concepts,
    plan_generation,
    write_manifest,
)
from .gateway import (
    Cassette,
    ConfigError,
    GatewayConfig,
    GatewayError,
    HttpTransport,
    ModelGateway,
    PolicyRejectedError,
    SentinelTransport,
    load_gateway_config,
)
from .geo import GeoError, OutcomeKind, RegionResponseParser, load_geoscheme
from . import reporting

logger = logging.getLogger(__name__)

SOURCE_CHOICES = SOURCES
PROFILE_CHOICES = ("hosted", "open")


# -- run bookkeeping -------------------------------------------------------

@dataclass
class RunState:
    command: str
    run_dir: Path
    mode: str
    max_failure_rate: float
    input_count: int = 0
    processed: int = 0
    errored: int = 0
    quarantined: int = 0
    started_at: str = ""
    _clock: float = field(default_factory=time.monotonic)
    network_calls: int | None = None

    def __post_init__(self) -> None:
        self.started_at = datetime.now(timezone.utc).isoformat()

    @property
    def data_dir(self) -> Path:
        return self.run_dir / "data"

    @property
    def plots_dir(self) -> Path:
        return self.run_dir / "plots"

    @property
    def failure_rate(self) -> float:
        if self.input_count == 0:
            return 0.0
        return (self.errored + self.quarantined) / self.input_count

    def finish(self) -> None:
        """Write the summary and enforce the failure-rate gate."""
        leftover = self.input_count - self.processed - self.errored - self.quarantined
        if leftover:  # accounting bug; make it loud instead of silent
            raise RuntimeError(f"{leftover} records unaccounted for in run summary")
        summary = {
            "command": self.command,
            "run_dir": self.run_dir.name,
            "mode": self.mode,
            "input": self.input_count,
            "processed": self.processed,
            "errored": self.errored,
            "quarantined": self.quarantined,
            "failure_rate": self.failure_rate,
            "max_failure_rate": self.max_failure_rate,
            "network_calls": self.network_calls,
            "started_at": self.started_at,
            "finished_at": datetime.now(timezone.utc).isoformat(),
            "duration_seconds": time.monotonic() - self._clock,
        }
        reporting.write_json(self.run_dir / "run_summary.json", summary)
        click.echo(
            f"{self.command}: {self.processed}/{self.input_count} processed, "
            f"{self.errored} errored, {self.quarantined} quarantined -> {self.run_dir}"
        )
        if self.failure_rate > self.max_failure_rate:
            click.echo(
                f"failure rate {self.failure_rate:.3f} exceeds limit {self.max_failure_rate:.3f}",
                err=True,
            )
            sys.exit(2)


def _make_run_dir(out: str, command: str, run_id: str | None) -> Path:
    name = run_id or f"{time.strftime('%Y%m%d-%H%M%S')}-{secrets.token_hex(4)}"
    run_dir = Path(out) / f"{command}-{name}"
    try:
        run_dir.mkdir(parents=True, exist_ok=False)
    except FileExistsError:
        raise click.ClickException(f"run directory {run_dir} already exists")
    (run_dir / "data").mkdir()
    (run_dir / "plots").mkdir()
    return run_dir


def _snapshot(run_dir: Path, command: str, params: dict, config: GatewayConfig) -> None:
    payload = {
        "command": command,
        "version": __version__,
        "params": {k: (str(v) if isinstance(v, Path) else v) for k, v in params.items()},
        "gateway": {op: asdict(config.endpoint(op))
                    for op in ("chat", "image_gen", "grounding", "inpaint", "embed")},
    }
    reporting.write_json(run_dir / "config.snapshot.json", payload)


def _load_config(config_path: str | None) -> GatewayConfig:
    if config_path is None:
        return GatewayConfig()
    try:
        return load_gateway_config(config_path)
    except (ConfigError, OSError) as exc:
        raise click.ClickException(f"bad gateway config: {exc}")


def _build_gateway(mode: str, cassette_path: str | None, config: GatewayConfig,
                   run_dir: Path, image_store: Path | None = None
                   ) -> tuple[ModelGateway, SentinelTransport | None]:
    """Replay runs answer purely from the cassette behind a transport that
    refuses all traffic; record runs append to the cassette over HTTP."""
    if mode == "replay":
        if cassette_path is None:
            raise click.ClickException("replay mode requires --cassette")
        try:
            cassette = Cassette.load(cassette_path)
        except (OSError, ValueError) as exc:
            raise click.ClickException(f"cannot load cassette: {exc}")
        sentinel = SentinelTransport()
        gateway = ModelGateway(config, mode="replay", cassette=cassette,
                               transport=sentinel, image_store=image_store)
        return gateway, sentinel
    cassette = Cassette(cassette_path or run_dir / "cassette.jsonl")
    gateway = ModelGateway(config, mode="record", cassette=cassette,
                           transport=HttpTransport(config), image_store=image_store)
    return gateway, None


def _ingest(manifest: str, source: str | None = None) -> list[ImageRecord]:
    try:
        return ingest_manifest(manifest, source=source)
    except (CorpusError, GeoError, OSError) as exc:
        raise click.ClickException(f"cannot read manifest: {exc}")


def _resolve_image_root(image_root: str | None, manifest: str) -> Path:
    if image_root is not None:
        return Path(image_root)
    return Path(manifest).resolve().parent


def _skip_row(record_id: str, stage: str, exc: Exception) -> dict:
    return {
        "record_id": record_id,
        "stage": stage,
        "error": type(exc).__name__,
        "detail": str(exc),
    }


# -- shared option bundles --------------------------------------------------

def _run_options(fn):
    for option in reversed([
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     default=None, help="Gateway endpoint YAML."),
        click.option("--mode", type=click.Choice(["replay", "record"]), default="replay",
                     show_default=True, help="Answer from the cassette, or call providers and record."),
        click.option("--cassette", "cassette_path", type=click.Path(dir_okay=False), default=None,
                     help="Cassette JSONL (required for replay)."),
        click.option("--out", type=click.Path(file_okay=False), default="runs",
                     show_default=True, help="Parent directory for run outputs."),
        click.option("--run-id", default=None,
                     help="Run directory suffix; defaults to a timestamped one."),
        click.option("--max-failure-rate", type=click.FloatRange(0.0, 1.0), default=0.0,
                     show_default=True, help="Tolerated (errored+quarantined)/input before exit 2."),
    ]):
        fn = option(fn)
    return fn


@click.group()
@click.version_option(version=__version__, prog_name="culturekit")
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool) -> None:
    """Audit and adapt the cultural content of image corpora."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


# -- generate ----------------------------------------------------------------

@main.command()
@_run_options
@click.option("--countries", multiple=True, help="Country names; defaults to all 67.")
@click.option("--concepts", multiple=True, help="Concepts; defaults to the shipped list.")
@click.option("--samples", type=click.IntRange(min=1), default=10, show_default=True,
              help="Images per (country, concept, style).")
@click.option("--styles", multiple=True, type=click.Choice(["vivid", "natural"]),
              help="Generation styles; defaults to both.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Base seed; job seeds are offsets from it.")
def generate(config_path, mode, cassette_path, out, run_id, max_failure_rate,
             countries, concepts, samples, styles, seed) -> None:
    """Generate a synthetic street-scene corpus and its manifest."""
    scheme = load_geoscheme()
    try:
        names = ([scheme.canonical_country(c) for c in countries]
                 if countries else scheme.country_names)
    except GeoError as exc:
        raise click.ClickException(str(exc))
    concept_list = list(concepts) if concepts else list(load_concepts())
    style_list = list(styles) if styles else ["vivid", "natural"]

    config = _load_config(config_path)
    run_dir = _make_run_dir(out, "generate", run_id)
    _snapshot(run_dir, "generate", {
        "countries": names, "concepts": concept_list, "samples": samples,
        "styles": style_list, "seed": seed, "mode": mode,
    }, config)
    state = RunState("generate", run_dir, mode, max_failure_rate)
    image_dir = state.data_dir / "images"
    gateway, sentinel = _build_gateway(mode, cassette_path, config, run_dir,
                                       image_store=image_dir)

    jobs = plan_generation(names, concept_list, samples, style_list)
    state.input_count = len(jobs)
    records: list[ImageRecord] = []
    skipped: list[dict] = []
    for index, job in enumerate(jobs):
        job_id = f"gen-{index:05d}"
        try:
            image = gateway.generate_image(job.prompt, job.style, seed=seed + index)
        except PolicyRejectedError as exc:
            state.errored += 1
            row = _skip_row(job_id, "generate", exc)
            row.update(country=job.country, concept=job.concept,
                       style=job.style, sample_index=job.sample_index)
            skipped.append(row)
            logger.warning("policy rejection for %s/%s: %s", job.country, job.concept, exc)
            continue
        except GatewayError as exc:
            state.errored += 1
            row = _skip_row(job_id, "generate", exc)
            row.update(country=job.country, concept=job.concept,
                       style=job.style, sample_index=job.sample_index)
            skipped.append(row)
            logger.warning("generation failed for %s/%s: %s", job.country, job.concept, exc)
            continue
        state.processed += 1
        records.append(ImageRecord(
            id=job_id,
            source="dalle_street",
            image_path=f"images/{image.path.name}" if image.path else "",
            country=job.country,
            subregion=scheme.subregion_of(job.country),
            concept=job.concept,
            style=job.style,
        ))

    write_manifest(records, state.data_dir / "manifest.jsonl")
    reporting.write_jsonl(state.data_dir / "skipped.jsonl", skipped)
    if sentinel is not None:
        state.network_calls = sentinel.calls
    state.finish()


# -- evaluate ----------------------------------------------------------------

@main.command()
@_run_options
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--source", type=click.Choice(SOURCE_CHOICES), default=None,
              help="Enforce (and fill in) the manifest source.")
@click.option("--image-root", type=click.Path(file_okay=False), default=None,
              help="Base for relative image paths; defaults to the manifest directory.")
@click.option("--profile", type=click.Choice(PROFILE_CHOICES), default="hosted",
              show_default=True, help="Decoding profile for the chat endpoint.")
def evaluate(config_path, mode, cassette_path, out, run_id, max_failure_rate,
             manifest, source, image_root, profile) -> None:
    """Classify each image's sub-region and score regional awareness."""
    records = _ingest(manifest, source)
    root = _resolve_image_root(image_root, manifest)
    scheme = load_geoscheme()
    parser = RegionResponseParser(scheme)

    config = _load_config(config_path)
    run_dir = _make_run_dir(out, "evaluate", run_id)
    _snapshot(run_dir, "evaluate", {
        "manifest": manifest, "source": source, "profile": profile, "mode": mode,
    }, config)
    state = RunState("evaluate", run_dir, mode, max_failure_rate)
    gateway, sentinel = _build_gateway(mode, cassette_path, config, run_dir)

    state.input_count = len(records)
    results = []
    skipped = []
    for record in records:
        result = classify_region(record, gateway, parser, profile=profile, image_root=root)
        results.append(result)
        if result.error is None:
            state.processed += 1
        else:
            state.errored += 1
            skipped.append({"record_id": record.id, "stage": "classify",
                            "error": "GatewayError", "detail": result.error})

    reporting.write_jsonl(state.data_dir / "results.jsonl",
                          (classification_row(r) for r in results))
    reporting.write_jsonl(state.data_dir / "skipped.jsonl", skipped)

    evaluated = [r for r in results if r.error is None]
    metrics: dict = {"records": state.input_count, "evaluated": len(evaluated)}
    if evaluated:
        matrix = build_confusion(evaluated, scheme)
        reporting.write_json(state.data_dir / "confusion.json", matrix.to_dict())
        metrics["accuracy"] = accuracy(matrix)
        for kind in OutcomeKind:
            metrics[f"outcome_{kind.value}"] = sum(
                1 for r in evaluated if r.outcome is not None and r.outcome.kind is kind)
        reporting.confusion_heatmap(matrix, state.plots_dir / "confusion.png")

    with_income = [r for r in records if r.income_monthly is not None]
    if with_income:
        assignments = assign_income_quartiles(with_income, scheme)
        by_id = {a.record_id: a for a in assignments}
        matched = [r for r in evaluated if r.record_id in by_id]
        table = income_disparity(matched, [by_id[r.record_id] for r in matched])
        rows = [
            {"broad_region": region, "quartile": quartile,
             "correct": cell.correct, "total": cell.total, "accuracy": cell.accuracy}
            for region in sorted(table)
            for quartile, cell in sorted(table[region].items())
        ]
        reporting.write_jsonl(state.data_dir / "income_disparity.jsonl", rows)
        if table:
            reporting.disparity_chart(table, state.plots_dir / "income_disparity.png")
    else:
        logger.info("no income data in manifest; skipping disparity table")

    reporting.write_json(state.data_dir / "metrics.json", metrics)
    if sentinel is not None:
        state.network_calls = sentinel.calls
    state.finish()


# -- extract -----------------------------------------------------------------

@main.command()
@_run_options
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--image-root", type=click.Path(file_okay=False), default=None)
@click.option("--profile", type=click.Choice(PROFILE_CHOICES), default="hosted",
              show_default=True)
@click.option("--tf-mode", type=click.Choice(["ratio", "count"]), default="ratio",
              show_default=True, help="Term frequency as ratio or raw count.")
@click.option("--band-sigma", type=click.FloatRange(min=0, min_open=True), default=1.0,
              show_default=True, help="Half-width of the outlier band in standard deviations.")
def extract(config_path, mode, cassette_path, out, run_id, max_failure_rate,
            manifest, image_root, profile, tf_mode, band_sigma) -> None:
    """Detect objects, summarize them into artifacts, and score salience."""
    records = _ingest(manifest)
    root = _resolve_image_root(image_root, manifest)

    config = _load_config(config_path)
    run_dir = _make_run_dir(out, "extract", run_id)
    _snapshot(run_dir, "extract", {
        "manifest": manifest, "profile": profile, "tf_mode": tf_mode,
        "band_sigma": band_sigma, "mode": mode,
    }, config)
    state = RunState("extract", run_dir, mode, max_failure_rate)
    gateway, sentinel = _build_gateway(mode, cassette_path, config, run_dir)

    state.input_count = len(records)
    reports = []
    quarantined = []
    skipped = []
    summaries = []
    phrases_by_country: dict[str, list[str]] = {}
    for record in records:
        try:
            report = detect_objects(record, gateway, image_root=root, profile=profile)
        except SchemaInvalidError as exc:
            state.quarantined += 1
            quarantined.append({"record_id": record.id, "country": record.country,
                                "concept": record.concept, "error": str(exc), "raw": exc.raw})
            continue
        except (GatewayError, OSError) as exc:
            state.errored += 1
            skipped.append(_skip_row(record.id, "detect", exc))
            continue
        try:
            phrases = summarize_objects(report, gateway, profile=profile)
        except (GatewayError, EmptySummaryError) as exc:
            state.errored += 1
            skipped.append(_skip_row(record.id, "summarize", exc))
            continue
        state.processed += 1
        reports.append(report)
        summaries.append({"record_id": record.id, "country": record.country,
                          "concept": record.concept, "phrases": phrases})
        phrases_by_country.setdefault(record.country, []).extend(phrases)

    reporting.write_jsonl(state.data_dir / "detection_reports.jsonl",
                          (report_to_dict(r) for r in reports))
    reporting.write_jsonl(state.data_dir / "quarantined.jsonl", quarantined)
    reporting.write_jsonl(state.data_dir / "skipped.jsonl", skipped)
    reporting.write_jsonl(state.data_dir / "summaries.jsonl", summaries)

    if phrases_by_country:
        for score_mode in MODES:
            corpus = {country: normalize_artifacts(phrases, score_mode)
                      for country, phrases in phrases_by_country.items()}
            try:
                table = tfidf_scores(corpus, mode=score_mode, tf_mode=tf_mode,
                                     band_sigma=band_sigma)
            except EmptyCorpusError:
                continue
            reporting.write_jsonl(state.data_dir / f"artifact_scores_{score_mode}.jsonl",
                                  score_rows(table))
            reporting.write_json(state.data_dir / f"score_summary_{score_mode}.json",
                                 score_summary(table))
            outliers = salience_outliers(table)
            salient = [
                {"country": country, "artifact": artifact, "score": score}
                for country in sorted(outliers)
                for artifact, score in outliers[country]
            ]
            reporting.write_jsonl(state.data_dir / f"salient_{score_mode}.jsonl", salient)
            reporting.score_histogram(
                list(table.scores.values()), table.mean, table.band_sigma * table.std,
                state.plots_dir / f"scores_{score_mode}.png",
                title=f"salience ({score_mode})")
    else:
        logger.info("no artifacts extracted; skipping salience scoring")

    if sentinel is not None:
        state.network_calls = sentinel.calls
    state.finish()


# -- associations --------------------------------------------------------------

@main.command()
@_run_options
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--image-root", type=click.Path(file_okay=False), default=None)
@click.option("--reports", "reports_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Detection reports JSONL from an extract run; "
              "without it, detection runs through the gateway.")
@click.option("--country-weighted", is_flag=True,
              help="Weight the global color mean by country instead of by image.")
def associations(config_path, mode, cassette_path, out, run_id, max_failure_rate,
                 manifest, image_root, reports_path, country_weighted) -> None:
    """Color-statistics deltas and people-count buckets per country."""
    records = _ingest(manifest)
    root = _resolve_image_root(image_root, manifest)

    config = _load_config(config_path)
    run_dir = _make_run_dir(out, "associations", run_id)
    _snapshot(run_dir, "associations", {
        "manifest": manifest, "reports": reports_path,
        "country_weighted": country_weighted, "mode": mode,
    }, config)
    state = RunState("associations", run_dir, mode, max_failure_rate)

    state.input_count = len(records)
    vectors: dict[str, list[RgbVector]] = {}
    skipped = []
    for record in records:
        path = Path(record.image_path)
        if not path.is_absolute():
            path = root / path
        try:
            vector = mean_rgb(path)
        except (AssociationError, OSError) as exc:
            state.errored += 1
            skipped.append(_skip_row(record.id, "color", exc))
            continue
        state.processed += 1
        vectors.setdefault(record.country, []).append(vector)

    reporting.write_jsonl(state.data_dir / "skipped.jsonl", skipped)
    if any(vectors.values()):
        table = aggregate_color_deltas(vectors, country_weighted=country_weighted)
        reporting.write_jsonl(state.data_dir / "color_deltas.jsonl", delta_rows(table))
        reporting.write_json(state.data_dir / "color_summary.json", delta_summary(table))
        reporting.color_delta_chart(table, state.plots_dir / "color_deltas.png")

    if reports_path is not None:
        with open(reports_path, encoding="utf-8") as handle:
            reports = [report_from_dict(json.loads(line))
                       for line in handle if line.strip()]
    else:
        gateway, sentinel = _build_gateway(mode, cassette_path, config, run_dir)
        reports = []
        bucket_skips = []
        for record in records:
            try:
                reports.append(detect_objects(record, gateway, image_root=root))
            except (SchemaInvalidError, GatewayError, OSError) as exc:
                bucket_skips.append(_skip_row(record.id, "detect", exc))
        if bucket_skips:
            reporting.write_jsonl(state.data_dir / "bucket_skipped.jsonl", bucket_skips)
        if sentinel is not None:
            state.network_calls = sentinel.calls

    if reports:
        histograms = aggregate_buckets(reports)
        rows = [{"country": country, **histograms[country]} for country in sorted(histograms)]
        reporting.write_jsonl(state.data_dir / "people_buckets.jsonl", rows)
        if histograms:
            reporting.bucket_chart(histograms, state.plots_dir / "people_buckets.png")
    else:
        logger.info("no detection reports available; skipping people buckets")

    state.finish()


# -- adapt ---------------------------------------------------------------------

@main.command("adapt")
@_run_options
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--image-root", type=click.Path(file_okay=False), default=None)
@click.option("--target-country", required=True, help="Country the images are edited toward.")
@click.option("--k", type=click.IntRange(min=1), default=1, show_default=True,
              help="Salient phrases edited per image.")
@click.option("--scores", "scores_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="artifact_scores_*.jsonl from an extract run.")
@click.option("--per-phrase", is_flag=True,
              help="Edit each phrase sequentially instead of one joint edit.")
def adapt_cmd(config_path, mode, cassette_path, out, run_id, max_failure_rate,
              manifest, image_root, target_country, k, scores_path, per_phrase) -> None:
    """Replace salient artifacts so images read as the target country."""
    records = _ingest(manifest)
    root = _resolve_image_root(image_root, manifest)
    scheme = load_geoscheme()
    try:
        target = scheme.canonical_country(target_country)
    except GeoError as exc:
        raise click.ClickException(str(exc))
    with open(scores_path, encoding="utf-8") as handle:
        rows = [json.loads(line) for line in handle if line.strip()]
    if not rows:
        raise click.ClickException(f"no score rows in {scores_path}")
    table = table_from_rows(rows)

    config = _load_config(config_path)
    run_dir = _make_run_dir(out, "adapt", run_id)
    _snapshot(run_dir, "adapt", {
        "manifest": manifest, "target_country": target, "k": k,
        "scores": scores_path, "per_phrase": per_phrase, "mode": mode,
    }, config)
    state = RunState("adapt", run_dir, mode, max_failure_rate)
    gateway, sentinel = _build_gateway(mode, cassette_path, config, run_dir)

    state.input_count = len(records)
    result_rows = []
    skipped = []
    for record in records:
        if record.country == target:
            state.errored += 1
            skipped.append({"record_id": record.id, "stage": "select",
                            "error": "SourceEqualsTarget",
                            "detail": f"record already labelled {target}"})
            continue
        workdir = state.data_dir / "artifacts" / record.id
        try:
            result = run_adapt(
                AdaptationRequest(record=record, target_country=target, k=k),
                gateway, table, image_root=root, per_phrase=per_phrase,
                workdir=workdir)
        except AdaptError as exc:
            state.errored += 1
            stage = getattr(exc, "stage", "adapt")
            skipped.append(_skip_row(record.id, stage, exc))
            logger.warning("adaptation failed for %s: %s", record.id, exc)
            continue
        state.processed += 1
        row = adaptation_row(result)
        row["artifact_paths"] = {
            kind: str(Path(path).relative_to(run_dir))
            for kind, path in result.artifact_paths.items()
        }
        result_rows.append(row)
        source_path = Path(record.image_path)
        if not source_path.is_absolute():
            source_path = root / source_path
        reporting.adaptation_panel(source_path.read_bytes(), result.boxes,
                                   result.edited_image,
                                   state.plots_dir / f"panel_{record.id}.png")

    reporting.write_jsonl(state.data_dir / "adaptations.jsonl", result_rows)
    reporting.write_jsonl(state.data_dir / "skipped.jsonl", skipped)
    if result_rows:
        succeeded = sum(1 for row in result_rows if row["success"])
        reporting.write_json(state.data_dir / "adapt_summary.json", {
            "requests": state.input_count,
            "completed": len(result_rows),
            "succeeded": succeeded,
            "success_rate": succeeded / len(result_rows),
            "mean_delta_source": sum(r["delta_source"] for r in result_rows) / len(result_rows),
            "mean_delta_target": sum(r["delta_target"] for r in result_rows) / len(result_rows),
            "locality_ok": sum(1 for r in result_rows if r["locality_ok"]),
        })

    if sentinel is not None:
        state.network_calls = sentinel.calls
    state.finish()


if __name__ == "__main__":
    main()
