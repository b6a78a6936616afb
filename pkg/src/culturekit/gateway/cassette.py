"""Append-only JSONL cassette for recording and replaying provider traffic.

Every request is reduced to a stable fingerprint: the request dict is
canonicalised (sorted keys, compact separators) with binary attachments
replaced by their SHA-256 digests, then hashed.  Identical requests always
produce identical fingerprints across runs and machines.
"""

from __future__ import annotations

import base64
import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping


class CassetteError(Exception):
    pass


def hash_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def canonical_request(op: str, provider: str, params: Mapping,
                      attachments: Mapping[str, bytes] | None = None) -> dict:
    """Request identity: op, provider, scalar params, attachment digests."""
    body = {"op": op, "provider": provider, "params": dict(params)}
    if attachments:
        body["attachments"] = {name: hash_bytes(blob) for name, blob in sorted(attachments.items())}
    return body


def fingerprint(request: Mapping) -> str:
    canonical = json.dumps(request, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CassetteEntry:
    fingerprint: str
    request: dict
    response: dict
    meta: dict = field(default_factory=dict)

    def response_json(self) -> dict:
        if self.response.get("kind") != "json":
            raise CassetteError(f"entry {self.fingerprint[:12]} holds a binary response")
        return self.response["data"]

    def response_bytes(self) -> bytes:
        if self.response.get("kind") != "binary":
            raise CassetteError(f"entry {self.fingerprint[:12]} holds a JSON response")
        return base64.b64decode(self.response["b64"])


def json_response(data: Mapping) -> dict:
    return {"kind": "json", "data": dict(data)}


def binary_response(blob: bytes) -> dict:
    return {"kind": "binary", "b64": base64.b64encode(blob).decode("ascii")}


class Cassette:
    """A fingerprint-keyed store of recorded responses.

    Loading verifies fingerprint uniqueness.  Appends are serialized through
    a single lock and written through to disk immediately; lookups are
    lock-free reads of an insert-only dict.
    """

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, CassetteEntry] = {}
        self._write_lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load(self.path)

    @classmethod
    def load(cls, path: str | Path) -> "Cassette":
        path = Path(path)
        if not path.exists():
            raise CassetteError(f"cassette {path} does not exist")
        return cls(path)

    def _load(self, path: Path) -> None:
        with open(path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CassetteError(f"{path}:{lineno}: not valid JSON ({exc})") from None
                entry = CassetteEntry(
                    fingerprint=row["fingerprint"],
                    request=row["request"],
                    response=row["response"],
                    meta=row.get("meta", {}),
                )
                if entry.fingerprint in self._entries:
                    raise CassetteError(f"{path}:{lineno}: duplicate fingerprint {entry.fingerprint}")
                if fingerprint(entry.request) != entry.fingerprint:
                    raise CassetteError(f"{path}:{lineno}: fingerprint does not match request")
                self._entries[entry.fingerprint] = entry

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, fp: str) -> bool:
        return fp in self._entries

    def get(self, fp: str) -> CassetteEntry | None:
        return self._entries.get(fp)

    def append(self, entry: CassetteEntry) -> None:
        with self._write_lock:
            if entry.fingerprint in self._entries:
                raise CassetteError(f"duplicate fingerprint {entry.fingerprint}")
            self._entries[entry.fingerprint] = entry
            if self.path is not None:
                row = {
                    "fingerprint": entry.fingerprint,
                    "request": entry.request,
                    "response": entry.response,
                    "meta": entry.meta,
                }
                with open(self.path, "a", encoding="utf-8") as handle:
                    handle.write(json.dumps(row, ensure_ascii=False) + "\n")
