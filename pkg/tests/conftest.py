from __future__ import annotations

import io
from pathlib import Path

import pytest
from PIL import Image

from culturekit.geo import Geoscheme, RegionResponseParser, load_geoscheme

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def scheme() -> Geoscheme:
    return load_geoscheme()


@pytest.fixture(scope="session")
def parser(scheme) -> RegionResponseParser:
    return RegionResponseParser(scheme)


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


def make_png(width: int = 8, height: int = 8,
             color: tuple[int, int, int] = (120, 30, 200)) -> bytes:
    buffer = io.BytesIO()
    Image.new("RGB", (width, height), color).save(buffer, format="PNG")
    return buffer.getvalue()


@pytest.fixture
def png_factory():
    return make_png
