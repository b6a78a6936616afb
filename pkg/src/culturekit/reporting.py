"""Deterministic data writers and static plot emitters for CLI runs."""

from __future__ import annotations

import io
import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from PIL import Image, ImageDraw

from .associations import ColorDeltaTable
from .awareness import ConfusionMatrix, DisparityCell
from .gateway import BoundingBox


def write_jsonl(path: str | Path, rows: Iterable[Mapping]) -> None:
    """One JSON object per line; key order fixed by sorting for stable bytes."""
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def write_json(path: str | Path, payload: Mapping) -> None:
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8")


def confusion_heatmap(matrix: ConfusionMatrix, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(10, 8))
    image = ax.imshow(matrix.counts, cmap="viridis")
    ax.set_xticks(range(len(matrix.pred_labels)))
    ax.set_xticklabels(matrix.pred_labels, rotation=90, fontsize=7)
    ax.set_yticks(range(len(matrix.true_labels)))
    ax.set_yticklabels(matrix.true_labels, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    fig.colorbar(image, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def disparity_chart(table: Mapping[str, Mapping[int, DisparityCell]], path: str | Path) -> None:
    regions = list(table)
    quartiles = [1, 2, 3, 4]
    fig, ax = plt.subplots(figsize=(9, 5))
    width = 0.2
    xs = np.arange(len(regions))
    for qi, quartile in enumerate(quartiles):
        values = [table[region][quartile].accuracy if quartile in table[region] else np.nan
                  for region in regions]
        ax.bar(xs + (qi - 1.5) * width, values, width, label=f"Q{quartile}")
    ax.set_xticks(xs)
    ax.set_xticklabels(regions, rotation=30, ha="right")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1)
    ax.legend(title="income quartile")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def score_histogram(scores: Sequence[float], mean: float, std: float,
                    path: str | Path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(8, 5))
    ax.hist(scores, bins=40, color="#4878cf", edgecolor="white")
    for x, style in ((mean, "-"), (mean - std, "--"), (mean + std, "--")):
        ax.axvline(x, color="crimson", linestyle=style, linewidth=1)
    ax.set_xlabel("salience score")
    ax.set_ylabel("artifacts")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def color_delta_chart(table: ColorDeltaTable, path: str | Path) -> None:
    countries = [row.country for row in table.rows]
    xs = np.arange(len(countries))
    fig, axes = plt.subplots(3, 1, figsize=(max(6, len(countries) * 0.5), 9), sharex=True)
    channels = ("delta R", "delta G", "delta B")
    colors = ("#c44e52", "#55a868", "#4c72b0")
    for axis, channel, color, values in zip(
            axes, channels, colors,
            ([row.delta.r for row in table.rows],
             [row.delta.g for row in table.rows],
             [row.delta.b for row in table.rows])):
        axis.bar(xs, values, color=color)
        axis.axhline(0, color="black", linewidth=0.8)
        axis.set_ylabel(channel)
    axes[-1].set_xticks(xs)
    axes[-1].set_xticklabels(countries, rotation=90, fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def bucket_chart(histograms: Mapping[str, Mapping[str, int]], path: str | Path) -> None:
    countries = list(histograms)
    buckets = ["1-4", "5-10", ">10"]
    xs = np.arange(len(countries))
    width = 0.25
    fig, ax = plt.subplots(figsize=(max(6, len(countries) * 0.6), 5))
    for bi, bucket in enumerate(buckets):
        values = [histograms[c].get(bucket, 0) for c in countries]
        ax.bar(xs + (bi - 1) * width, values, width, label=bucket)
    ax.set_xticks(xs)
    ax.set_xticklabels(countries, rotation=45, ha="right")
    ax.set_ylabel("images")
    ax.legend(title="people")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def adaptation_panel(source: bytes, boxes: Sequence[BoundingBox], edited: bytes,
                     path: str | Path) -> None:
    """Side-by-side source (with grounded boxes) and edited images."""
    left = Image.open(io.BytesIO(source)).convert("RGB")
    overlay = left.copy()
    draw = ImageDraw.Draw(overlay)
    for box in boxes:
        draw.rectangle((box.x0, box.y0, box.x1, box.y1), outline=(255, 0, 0), width=2)
    right = Image.open(io.BytesIO(edited)).convert("RGB")
    fig, axes = plt.subplots(1, 3, figsize=(12, 4.5))
    for axis, image, title in zip(axes, (left, overlay, right),
                                  ("source", "grounded", "edited")):
        axis.imshow(image)
        axis.set_title(title)
        axis.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
