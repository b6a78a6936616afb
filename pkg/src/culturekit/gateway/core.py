"""Record/replay gateway in front of every model provider.

All model interactions (vision chat, image generation, grounding,
inpainting, embedding) flow through :class:`ModelGateway`.  In record mode
unseen requests hit the transport and land in the cassette; in replay mode
the cassette is the only source — a miss raises, and no transport is ever
consulted, so replay runs are network-free by construction.
"""

from __future__ import annotations

import base64
import io
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Protocol

import numpy as np
from PIL import Image, UnidentifiedImageError

from .cassette import (
    Cassette,
    CassetteEntry,
    binary_response,
    canonical_request,
    fingerprint,
    hash_bytes,
    json_response,
)
from .config import EndpointConfig, GatewayConfig

GENERATED_IMAGE_SIZE = (1024, 1024)
QUALITY_TAIL = "intricate details. 4k. high resolution. high quality."
EMBED_NORM_TOLERANCE = 1e-6


class GatewayError(Exception):
    pass


class ProviderError(GatewayError):
    pass


class CassetteMissError(GatewayError):
    pass


class PolicyRejectedError(GatewayError):
    pass


class EmptyMaskError(GatewayError, ValueError):
    pass


class NetworkDisabledError(GatewayError):
    pass


@dataclass(frozen=True)
class GatewayRequest:
    op: str
    provider: str
    params: dict
    attachments: dict[str, bytes] = field(default_factory=dict)


@dataclass(frozen=True)
class TransportResponse:
    json: dict | None = None
    binary: bytes | None = None


class Transport(Protocol):
    def send(self, request: GatewayRequest) -> TransportResponse: ...


class SentinelTransport:
    """Refuses all traffic; proves a run never left the cassette."""

    def __init__(self) -> None:
        self.calls = 0

    def send(self, request: GatewayRequest) -> TransportResponse:
        self.calls += 1
        raise NetworkDisabledError(f"network disabled; blocked {request.op} call to {request.provider}")


class CallableTransport:
    """Adapter turning a plain function into a transport (used in tests and
    for custom provider backends)."""

    def __init__(self, fn: Callable[[GatewayRequest], TransportResponse]) -> None:
        self._fn = fn

    def send(self, request: GatewayRequest) -> TransportResponse:
        return self._fn(request)


class HttpTransport:
    """Minimal JSON-over-HTTP transport.

    Posts the canonical request (attachments base64-inlined) to the
    endpoint's base URL with a bearer token resolved from the configured
    environment variable.  Providers answer either with a JSON body or with
    base64 image bytes under ``b64``.
    """

    def __init__(self, config: GatewayConfig, timeout: float = 120.0) -> None:
        self._config = config
        self._timeout = timeout

    def _endpoint_for(self, request: GatewayRequest) -> EndpointConfig:
        for name in ("chat", "image_gen", "grounding", "inpaint", "embed"):
            endpoint = self._config.endpoint(name)
            if endpoint.provider == request.provider:
                return endpoint
        raise ProviderError(f"no endpoint configured for provider {request.provider!r}")

    def send(self, request: GatewayRequest) -> TransportResponse:
        import requests

        endpoint = self._endpoint_for(request)
        if not endpoint.base_url:
            raise ProviderError(f"provider {request.provider!r} has no base_url configured")
        headers = {}
        if endpoint.credential_env:
            token = os.environ.get(endpoint.credential_env)
            if not token:
                raise ProviderError(
                    f"credential env var {endpoint.credential_env!r} is not set")
            headers["Authorization"] = f"Bearer {token}"
        body = {
            "op": request.op,
            "params": request.params,
            "attachments": {
                name: base64.b64encode(blob).decode("ascii")
                for name, blob in request.attachments.items()
            },
        }
        try:
            reply = requests.post(endpoint.base_url, json=body, headers=headers,
                                  timeout=self._timeout)
            reply.raise_for_status()
            payload = reply.json()
        except requests.RequestException as exc:
            raise ProviderError(f"{request.provider}: {exc}") from exc
        if isinstance(payload, dict) and "b64" in payload:
            return TransportResponse(binary=base64.b64decode(payload["b64"]))
        if isinstance(payload, dict):
            return TransportResponse(json=payload)
        raise ProviderError(f"{request.provider}: unexpected payload type {type(payload).__name__}")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel coordinates, origin top-left."""

    x0: float
    y0: float
    x1: float
    y1: float
    phrase: str = ""
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate box {(self.x0, self.y0, self.x1, self.y1)}")
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError("box extends beyond the top-left image corner")

    def validate_within(self, width: int, height: int) -> None:
        if self.x1 > width or self.y1 > height:
            raise ValueError(f"box {(self.x0, self.y0, self.x1, self.y1)} exceeds {width}x{height}")


@dataclass(frozen=True)
class GeneratedImage:
    data: bytes
    path: Path | None
    provider: str
    style: str


def _decode_image(data: bytes, what: str = "image") -> Image.Image:
    try:
        image = Image.open(io.BytesIO(data))
        image.load()
        return image
    except (UnidentifiedImageError, OSError) as exc:
        raise ValueError(f"{what} bytes are not a decodable image: {exc}") from None


def encode_png(image: Image.Image) -> bytes:
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return buffer.getvalue()


class ModelGateway:
    """Single entry point for all provider calls, cassette-backed.

    mode="replay" answers exclusively from the cassette (a miss raises
    CassetteMissError).  mode="record" consults the cassette first, then the
    transport, appending fresh responses.  Concurrent use is safe: cassette
    appends are serialized, and per-provider semaphores cap in-flight
    transport calls.
    """

    def __init__(self, config: GatewayConfig | None = None, *, mode: str = "replay",
                 cassette: Cassette | None = None, transport: Transport | None = None,
                 image_store: str | Path | None = None, max_concurrency: int = 4) -> None:
        if mode not in ("record", "replay"):
            raise ValueError(f"mode must be 'record' or 'replay', got {mode!r}")
        if mode == "replay" and cassette is None:
            raise ValueError("replay mode requires a cassette")
        if mode == "record" and transport is None:
            raise ValueError("record mode requires a transport")
        self.config = config if config is not None else GatewayConfig()
        self.mode = mode
        self.cassette = cassette
        self.transport = transport if transport is not None else SentinelTransport()
        self.image_store = Path(image_store) if image_store is not None else None
        self._semaphores: dict[str, threading.Semaphore] = {}
        self._semaphore_lock = threading.Lock()
        self._max_concurrency = max_concurrency

    # -- plumbing ------------------------------------------------------

    def _semaphore(self, provider: str) -> threading.Semaphore:
        with self._semaphore_lock:
            if provider not in self._semaphores:
                self._semaphores[provider] = threading.Semaphore(self._max_concurrency)
            return self._semaphores[provider]

    def _execute(self, op: str, endpoint: EndpointConfig, params: Mapping,
                 attachments: Mapping[str, bytes] | None = None) -> CassetteEntry:
        attachments = dict(attachments or {})
        request = canonical_request(op, endpoint.provider, params, attachments)
        fp = fingerprint(request)
        if self.cassette is not None:
            entry = self.cassette.get(fp)
            if entry is not None:
                return entry
        if self.mode == "replay":
            raise CassetteMissError(
                f"no cassette entry for {op} request {fp[:12]}… in replay mode")
        with self._semaphore(endpoint.provider):
            response = self.transport.send(
                GatewayRequest(op, endpoint.provider, dict(params), attachments))
        if response.binary is not None:
            payload = binary_response(response.binary)
        elif response.json is not None:
            payload = json_response(response.json)
        else:
            raise ProviderError(f"{endpoint.provider}: transport returned an empty response")
        entry = CassetteEntry(
            fingerprint=fp,
            request=request,
            response=payload,
            meta={
                "provider": endpoint.provider,
                "recorded_at": datetime.now(timezone.utc).isoformat(),
            },
        )
        if self.cassette is not None:
            self.cassette.append(entry)
        return entry

    def _persist(self, data: bytes, suffix: str = ".png") -> Path | None:
        if self.image_store is None:
            return None
        self.image_store.mkdir(parents=True, exist_ok=True)
        path = self.image_store / f"{hash_bytes(data)}{suffix}"
        if not path.exists():
            path.write_bytes(data)
        return path

    # -- operations ----------------------------------------------------

    def chat_vision(self, image: bytes | None, prompt: str, *, profile: str = "hosted") -> str:
        """Prompt a vision-chat endpoint about one image; returns raw text.

        ``image=None`` makes a text-only call.  Policy refusals arrive as
        ordinary text for downstream parsing.
        """
        if not prompt or not prompt.strip():
            raise ValueError("prompt must be non-empty")
        endpoint = self.config.chat.with_profile(profile)
        params = {
            "prompt": prompt,
            "temperature": endpoint.temperature,
            "top_p": endpoint.top_p,
            "max_tokens": endpoint.max_tokens,
        }
        attachments = {}
        if image is not None:
            _decode_image(image)
            params["image_sha256"] = hash_bytes(image)
            attachments["image"] = image
        entry = self._execute("chat_vision", endpoint, params, attachments)
        data = entry.response_json()
        if "text" not in data:
            raise ProviderError(f"{endpoint.provider}: chat response lacks 'text'")
        return str(data["text"])

    def generate_image(self, prompt: str, style: str, *, seed: int | None = None) -> GeneratedImage:
        """Generate one image; rejected prompts raise PolicyRejectedError.

        Accepted outputs are validated to the fixed generation size and, when
        an image store is configured, persisted under a content-addressed
        filename.
        """
        if not prompt or not prompt.strip():
            raise ValueError("prompt must be non-empty")
        if style not in ("vivid", "natural"):
            raise ValueError(f"style must be 'vivid' or 'natural', got {style!r}")
        endpoint = self.config.image_gen
        params = {
            "prompt": prompt,
            "style": style,
            "size": f"{GENERATED_IMAGE_SIZE[0]}x{GENERATED_IMAGE_SIZE[1]}",
        }
        if seed is not None:
            params["seed"] = int(seed)
        entry = self._execute("generate_image", endpoint, params)
        if entry.response.get("kind") == "json":
            data = entry.response_json()
            if data.get("policy_rejected"):
                raise PolicyRejectedError(
                    data.get("reason", f"{endpoint.provider} rejected the prompt"))
            raise ProviderError(f"{endpoint.provider}: expected image bytes, got JSON")
        blob = entry.response_bytes()
        image = _decode_image(blob, "generated image")
        if image.size != GENERATED_IMAGE_SIZE:
            raise ProviderError(
                f"{endpoint.provider}: expected {GENERATED_IMAGE_SIZE} image, got {image.size}")
        return GeneratedImage(
            data=blob,
            path=self._persist(blob),
            provider=endpoint.provider,
            style=style,
        )

    def ground(self, image: bytes, phrases: list[str]) -> list[BoundingBox]:
        """Locate ``phrases`` in the image; returns boxes that clear both the
        box and text confidence thresholds, clamped to image bounds."""
        if not phrases:
            raise ValueError("phrases must be non-empty")
        pil = _decode_image(image)
        width, height = pil.size
        endpoint = self.config.grounding
        params = {
            "phrases": list(phrases),
            "box_threshold": endpoint.box_threshold,
            "text_threshold": endpoint.text_threshold,
            "image_sha256": hash_bytes(image),
        }
        entry = self._execute("ground", endpoint, params, {"image": image})
        data = entry.response_json()
        raw_boxes = data.get("boxes")
        if raw_boxes is None:
            raise ProviderError(f"{endpoint.provider}: grounding response lacks 'boxes'")
        floor = max(endpoint.box_threshold, endpoint.text_threshold)
        boxes = []
        for raw in raw_boxes:
            confidence = float(raw.get("confidence", 0.0))
            if confidence < floor:
                continue
            x0 = max(0.0, float(raw["x0"]))
            y0 = max(0.0, float(raw["y0"]))
            x1 = min(float(width), float(raw["x1"]))
            y1 = min(float(height), float(raw["y1"]))
            if x0 >= x1 or y0 >= y1:
                continue
            boxes.append(BoundingBox(x0, y0, x1, y1,
                                     phrase=str(raw.get("phrase", "")),
                                     confidence=confidence))
        return boxes

    def inpaint(self, image: bytes, mask: bytes, prompt: str) -> bytes:
        """Regenerate the masked region under ``prompt``.

        The fixed quality tail is appended to every prompt; the mask must
        match the image size and select at least one pixel.
        """
        pil = _decode_image(image)
        mask_pil = _decode_image(mask, "mask")
        if mask_pil.size != pil.size:
            raise ValueError(f"mask size {mask_pil.size} != image size {pil.size}")
        if not np.asarray(mask_pil.convert("L")).any():
            raise EmptyMaskError("mask selects no pixels")
        full_prompt = f"{prompt.strip()} {QUALITY_TAIL}".strip()
        endpoint = self.config.inpaint
        params = {
            "prompt": full_prompt,
            "image_sha256": hash_bytes(image),
            "mask_sha256": hash_bytes(mask),
        }
        entry = self._execute("inpaint", endpoint, params, {"image": image, "mask": mask})
        blob = entry.response_bytes()
        _decode_image(blob, "inpainted image")
        return blob

    def embed(self, payload: bytes | str) -> np.ndarray:
        """Embed an image (bytes) or a text (str) into a unit-norm vector."""
        endpoint = self.config.embed
        if isinstance(payload, bytes):
            _decode_image(payload)
            params: dict = {"kind": "image", "image_sha256": hash_bytes(payload)}
            attachments = {"image": payload}
        elif isinstance(payload, str):
            if not payload.strip():
                raise ValueError("text payload must be non-empty")
            params = {"kind": "text", "text": payload}
            attachments = {}
        else:
            raise TypeError(f"payload must be bytes or str, got {type(payload).__name__}")
        entry = self._execute("embed", endpoint, params, attachments)
        data = entry.response_json()
        if "vector" not in data:
            raise ProviderError(f"{endpoint.provider}: embed response lacks 'vector'")
        vector = np.asarray(data["vector"], dtype=np.float64)
        if vector.ndim != 1 or vector.size == 0:
            raise ProviderError(f"{endpoint.provider}: embed vector has shape {vector.shape}")
        norm = float(np.linalg.norm(vector))
        if not np.isfinite(norm) or norm == 0.0:
            raise ProviderError(f"{endpoint.provider}: embed vector has invalid norm {norm}")
        return vector / norm
