"""Endpoint configuration for the model gateway.

Credentials are never stored in config files; each endpoint names an
environment variable that holds its key, resolved only at call time.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

# Decoding parameter presets. Hosted chat endpoints run cooler with a longer
# budget; open-weight endpoints run at their defaults with a short budget.
PROFILES: dict[str, dict] = {
    "hosted": {"temperature": 0.7, "top_p": 0.95, "max_tokens": 300},
    "open": {"temperature": 1.0, "top_p": 1.0, "max_tokens": 128},
}


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class EndpointConfig:
    """One provider endpoint plus its decoding/detection parameters."""

    provider: str
    base_url: str = ""
    credential_env: str = ""
    temperature: float = 0.7
    top_p: float = 0.95
    max_tokens: int = 300
    box_threshold: float = 0.25
    text_threshold: float = 0.25

    def __post_init__(self) -> None:
        if not self.provider:
            raise ConfigError("provider id must be non-empty")
        for name in ("temperature", "top_p"):
            value = getattr(self, name)
            if not 0.0 <= value <= 2.0:
                raise ConfigError(f"{name} must be in [0, 2], got {value}")
        if self.max_tokens < 1:
            raise ConfigError(f"max_tokens must be positive, got {self.max_tokens}")
        for name in ("box_threshold", "text_threshold"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name} must be in (0, 1), got {value}")

    def with_profile(self, profile: str) -> "EndpointConfig":
        try:
            params = PROFILES[profile]
        except KeyError:
            raise ConfigError(f"unknown model profile {profile!r}") from None
        return replace(self, **params)


_OPS = ("chat", "image_gen", "grounding", "inpaint", "embed")


@dataclass(frozen=True)
class GatewayConfig:
    """Per-operation endpoint table."""

    chat: EndpointConfig = field(default_factory=lambda: EndpointConfig("vision-chat"))
    image_gen: EndpointConfig = field(default_factory=lambda: EndpointConfig("image-gen"))
    grounding: EndpointConfig = field(default_factory=lambda: EndpointConfig("grounder"))
    inpaint: EndpointConfig = field(default_factory=lambda: EndpointConfig("inpainter"))
    embed: EndpointConfig = field(default_factory=lambda: EndpointConfig("embedder"))

    def endpoint(self, op: str) -> EndpointConfig:
        if op not in _OPS:
            raise ConfigError(f"unknown gateway operation {op!r}")
        return getattr(self, op)


def load_gateway_config(path: str | Path) -> GatewayConfig:
    """Build a GatewayConfig from a YAML file with per-operation sections.

    Unknown sections or keys are rejected so typos fail loudly.
    """
    payload = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if payload is None:
        return GatewayConfig()
    if not isinstance(payload, dict):
        raise ConfigError("gateway config must be a mapping")
    unknown = set(payload) - set(_OPS)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    allowed_keys = {f.name for f in fields(EndpointConfig)}
    endpoints = {}
    for op, section in payload.items():
        if not isinstance(section, dict):
            raise ConfigError(f"section {op!r} must be a mapping")
        bad = set(section) - allowed_keys
        if bad:
            raise ConfigError(f"section {op!r}: unknown keys {sorted(bad)}")
        section = dict(section)
        section.setdefault("provider", GatewayConfig().endpoint(op).provider)
        try:
            endpoints[op] = EndpointConfig(**section)
        except TypeError as exc:
            raise ConfigError(f"section {op!r}: {exc}") from None
    return GatewayConfig(**endpoints)
