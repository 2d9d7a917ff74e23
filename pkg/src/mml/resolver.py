"""DOI/Handle-style resolver: identifiers to repository locations."""
from __future__ import annotations

import base64
import json
import os
import re
import threading
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import urlparse

from mml.errors import NamespaceError, ValidationError
from mml.metadata import Identifier

_PREFIX = re.compile(r"10\.[0-9]+")


def mint(prefix: str, entropy: bytes) -> Identifier:
    """Build an identifier whose suffix is the unpadded lowercase base32 of ``entropy``."""
    if not isinstance(prefix, str) or not _PREFIX.fullmatch(prefix):
        raise NamespaceError(f"malformed registrant prefix {prefix!r}", field="prefix")
    if len(entropy) != 16:
        raise ValidationError("mint needs 16 bytes of entropy", field="entropy")
    suffix = base64.b32encode(entropy).decode("ascii").rstrip("=").lower()
    ident = Identifier(prefix, suffix)
    try:
        ident.validate()
    except ValidationError as exc:
        raise NamespaceError(exc.message, field="prefix") from None
    return ident


def validate_endpoint(endpoint: str) -> str:
    parsed = urlparse(endpoint) if isinstance(endpoint, str) else None
    if parsed is None or parsed.scheme not in ("http", "https") or not parsed.netloc:
        raise ValidationError(f"not an http(s) URL: {endpoint!r}", field="endpoint")
    return endpoint


@dataclass
class Location:
    endpoint: str
    added_at: int
    removed_at: int | None = None


@dataclass
class IdentifierRecord:
    identifier: Identifier
    created_at: int
    locations: list[Location] = field(default_factory=list)
    # append-only audit trail of (action, endpoint, at)
    history: list[tuple[str, str, int]] = field(default_factory=list)

    def active(self) -> list[str]:
        return [loc.endpoint for loc in self.locations if loc.removed_at is None]

    def to_dict(self) -> dict:
        return {
            "identifier": str(self.identifier),
            "created_at": self.created_at,
            "locations": [[loc.endpoint, loc.added_at] for loc in self.locations if loc.removed_at is None],
            "history": [list(h) for h in self.history],
        }


class Resolver:
    """In-memory resolver with optional JSON persistence.

    Registration is open: anyone may bind a location to any identifier. Unbinding
    leaves a tombstone in the record history rather than deleting it.
    """

    def __init__(self, state_file: str | Path | None = None, clock: Callable[[], float] = time.time) -> None:
        self._records: dict[Identifier, IdentifierRecord] = {}
        self._minted: set[Identifier] = set()
        self._lock = threading.Lock()
        self._clock = clock
        self._state_file = Path(state_file) if state_file else None
        if self._state_file and self._state_file.exists():
            self._load()

    def _now(self) -> int:
        return int(self._clock())

    def mint(self, prefix: str, entropy: bytes | None = None) -> Identifier:
        with self._lock:
            while True:
                ident = mint(prefix, entropy if entropy is not None else os.urandom(16))
                if ident not in self._minted and ident not in self._records:
                    self._minted.add(ident)
                    self._save()
                    return ident
                if entropy is not None:
                    raise NamespaceError(f"{ident} is already registered", field="identifier")

    def bind(self, identifier: Identifier, endpoint: str) -> IdentifierRecord:
        identifier.validate()
        validate_endpoint(endpoint)
        with self._lock:
            now = self._now()
            record = self._records.get(identifier)
            if record is None:
                record = self._records[identifier] = IdentifierRecord(identifier, now)
            if endpoint not in record.active():
                record.locations = [loc for loc in record.locations if loc.endpoint != endpoint]
                record.locations.append(Location(endpoint, now))
                record.history.append(("bind", endpoint, now))
                self._save()
            return record

    def unbind(self, identifier: Identifier, endpoint: str) -> IdentifierRecord | None:
        with self._lock:
            record = self._records.get(identifier)
            if record is None:
                return None
            now = self._now()
            for loc in record.locations:
                if loc.endpoint == endpoint and loc.removed_at is None:
                    loc.removed_at = now
                    record.history.append(("unbind", endpoint, now))
                    self._save()
            return record

    def resolve(self, identifier: Identifier) -> list[str]:
        record = self._records.get(identifier)
        return [] if record is None else record.active()

    def record(self, identifier: Identifier) -> IdentifierRecord | None:
        return self._records.get(identifier)

    def _save(self) -> None:
        if not self._state_file:
            return
        doc = {
            "minted": sorted(str(i) for i in self._minted),
            "records": [
                {
                    "identifier": str(r.identifier),
                    "created_at": r.created_at,
                    "locations": [[l.endpoint, l.added_at, l.removed_at] for l in r.locations],
                    "history": [list(h) for h in r.history],
                }
                for r in self._records.values()
            ],
        }
        tmp = self._state_file.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, indent=1))
        tmp.replace(self._state_file)

    def _load(self) -> None:
        doc = json.loads(self._state_file.read_text())
        self._minted = {Identifier.parse(i) for i in doc.get("minted", [])}
        for r in doc.get("records", []):
            ident = Identifier.parse(r["identifier"])
            self._records[ident] = IdentifierRecord(
                ident,
                r["created_at"],
                [Location(*loc) for loc in r["locations"]],
                [tuple(h) for h in r["history"]],
            )
