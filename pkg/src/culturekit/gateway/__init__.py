"""Record/replay gateway package."""

from .cassette import (
    Cassette,
    CassetteEntry,
    CassetteError,
    binary_response,
    canonical_request,
    fingerprint,
    hash_bytes,
    json_response,
)
from .config import PROFILES, ConfigError, EndpointConfig, GatewayConfig, load_gateway_config
from .core import (
    GENERATED_IMAGE_SIZE,
    QUALITY_TAIL,
    BoundingBox,
    CallableTransport,
    CassetteMissError,
    EmptyMaskError,
    GatewayError,
    GatewayRequest,
    GeneratedImage,
    HttpTransport,
    ModelGateway,
    NetworkDisabledError,
    PolicyRejectedError,
    ProviderError,
    SentinelTransport,
    Transport,
    TransportResponse,
    encode_png,
)

__all__ = [
    "Cassette",
    "CassetteEntry",
    "CassetteError",
    "CassetteMissError",
    "CallableTransport",
    "ConfigError",
    "EndpointConfig",
    "EmptyMaskError",
    "GatewayConfig",
    "GatewayError",
    "GatewayRequest",
    "GeneratedImage",
    "GENERATED_IMAGE_SIZE",
    "HttpTransport",
    "ModelGateway",
    "NetworkDisabledError",
    "PolicyRejectedError",
    "PROFILES",
    "ProviderError",
    "QUALITY_TAIL",
    "SentinelTransport",
    "Transport",
    "TransportResponse",
    "binary_response",
    "canonical_request",
    "encode_png",
    "fingerprint",
    "hash_bytes",
    "json_response",
    "load_gateway_config",
]
