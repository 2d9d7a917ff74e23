"""Creation-metadata and registry-metadata data model with canonical serialization.

A creation-metadata unit has four parts: identifier, works payload (with its
format descriptor), the hash of the musical work file, and the issuer's
signature. A registry-metadata record is the short ledger summary: the same
identifier, an optional industry works ID, the hash of the full signed unit,
and a signature. Revisions link back to their predecessor by identifier and
unit hash; registrations of revisions link back by transaction ID.

Canonical form (what gets signed and hashed) is compact UTF-8 JSON with the
fields in the order emitted by ``content_doc``; payload entries are sorted by
key bytes and binary values are lowercase hex. The ``.cmeta``/``.rmeta`` file
bytes are the canonical form of the signed document (content fields followed
by ``signature``).
"""
from __future__ import annotations

import codecs
import re
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from typing import Any

from mml import canonical
from mml.canonical import from_hex, require, to_hex
from mml.errors import (
    CanonicalizationError,
    ParseError,
    PayloadTooLarge,
    RightsContentRejected,
    ValidationError,
)

CREATION_TYPE = "creation-metadata"
REGISTRY_TYPE = "registry-metadata"
FORMAT_VERSION = 1

DIGEST_SIZES = {"sha-256": 32}
SIGNATURE_ALGORITHMS = {"ed25519": (32, 64)}
MAX_PAYLOAD_BYTES = 64 * 1024
DEFAULT_DENYLIST = frozenset({"owner", "rights_holder", "royalty_split", "contract", "license"})

_PREFIX = re.compile(r"10\.[0-9]{4,8}")
_SUFFIX = re.compile(r"[a-z0-9.-]{1,64}")


@dataclass(frozen=True)
class Identifier:
    """DOI-style identifier; the suffix is case-insensitive and stored lowercase."""

    prefix: str
    suffix: str

    def __post_init__(self) -> None:
        if isinstance(self.suffix, str):
            object.__setattr__(self, "suffix", self.suffix.lower())

    @classmethod
    def parse(cls, text: str) -> Identifier:
        if not isinstance(text, str):
            raise ParseError("identifier must be text", field="identifier")
        body = text.strip()
        if body[:4].lower() == "doi:":
            body = body[4:]
        prefix, sep, suffix = body.partition("/")
        if not sep:
            raise ParseError(f"not an identifier: {text!r}", field="identifier")
        ident = cls(prefix, suffix)
        ident.validate()
        return ident

    def validate(self, where: str = "identifier") -> None:
        if not isinstance(self.prefix, str) or not _PREFIX.fullmatch(self.prefix):
            raise ValidationError(f"{where}: bad prefix {self.prefix!r}", field=f"{where}.prefix")
        if not isinstance(self.suffix, str) or not _SUFFIX.fullmatch(self.suffix):
            raise ValidationError(f"{where}: bad suffix {self.suffix!r}", field=f"{where}.suffix")

    def __str__(self) -> str:
        return f"doi:{self.prefix}/{self.suffix}"

    @property
    def path(self) -> str:
        return f"{self.prefix}/{self.suffix}"


@dataclass(frozen=True)
class WorkDigest:
    value: bytes
    algorithm: str = "sha-256"

    def validate(self, where: str = "work_hash") -> None:
        size = DIGEST_SIZES.get(self.algorithm)
        if size is None:
            raise ValidationError(f"{where}: unknown algorithm {self.algorithm!r}", field=f"{where}.algorithm")
        if not isinstance(self.value, bytes) or len(self.value) != size:
            raise ValidationError(f"{where}: expected {size} bytes", field=f"{where}.value")

    def to_dict(self) -> dict[str, Any]:
        return {"algorithm": self.algorithm, "value": to_hex(self.value)}

    @classmethod
    def from_dict(cls, doc: Any, where: str = "work_hash") -> WorkDigest:
        return cls(
            algorithm=require(doc, "algorithm", str, where),
            value=from_hex(require(doc, "value", str, where), f"{where}.value"),
        )


@dataclass(frozen=True)
class PayloadDescriptor:
    format: str = "kv-v1"
    encoding: str = "utf-8"

    def validate(self) -> None:
        for name in ("format", "encoding"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value:
                raise ValidationError(f"payload.{name} must be non-empty", field=f"payload.{name}")
        try:
            codecs.lookup(self.encoding)
        except LookupError:
            raise ValidationError(f"unknown encoding {self.encoding!r}", field="payload.encoding") from None


@dataclass(frozen=True, eq=False)
class WorksPayload:
    """Opaque factual fields about a work, e.g. title, contributors, instruments."""

    entries: tuple[tuple[str, str], ...] = ()
    descriptor: PayloadDescriptor = field(default_factory=PayloadDescriptor)

    @classmethod
    def from_mapping(cls, entries: Mapping[str, str], format: str = "kv-v1", encoding: str = "utf-8") -> WorksPayload:
        return cls(tuple(entries.items()), PayloadDescriptor(format, encoding))

    def _key(self) -> tuple:
        try:
            entries = tuple(sorted(self.entries, key=lambda kv: kv[0].encode("utf-8", "surrogatepass")))
        except (AttributeError, TypeError, ValueError):
            entries = self.entries
        return entries, self.descriptor

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WorksPayload):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def as_dict(self) -> dict[str, str]:
        return dict(self.entries)

    def keys(self) -> list[str]:
        return [k for k, _ in self.entries]

    def get(self, key: str, default: str | None = None) -> str | None:
        return self.as_dict().get(key, default)

    def with_entries(self, entries: Mapping[str, str]) -> WorksPayload:
        return replace(self, entries=tuple(entries.items()))

    def validate(self) -> None:
        self.descriptor.validate()
        seen: set[str] = set()
        for item in self.entries:
            if not (isinstance(item, tuple) and len(item) == 2):
                raise ValidationError("payload entry must be a (key, value) pair", field="payload.entries")
            key, value = item
            if not isinstance(key, str) or not key:
                raise ValidationError("payload keys must be non-empty text", field="payload.entries")
            if not isinstance(value, str):
                raise ValidationError(f"payload value for {key!r} must be text", field=f"payload.entries.{key}")
            if key in seen:
                raise ValidationError(f"duplicate payload key {key!r}", field=f"payload.entries.{key}")
            seen.add(key)
            for text in (key, value):
                try:
                    text.encode(self.descriptor.encoding)
                except UnicodeError:
                    raise ValidationError(
                        f"payload entry {key!r} is not valid {self.descriptor.encoding}",
                        field=f"payload.entries.{key}",
                    ) from None
                # canonical form itself is UTF-8
                try:
                    text.encode("utf-8")
                except UnicodeError:
                    raise ValidationError(f"payload entry {key!r} is not valid UTF-8", field=f"payload.entries.{key}") from None

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": self.descriptor.format,
            "encoding": self.descriptor.encoding,
            "entries": canonical.sorted_map(self.entries),
        }

    def serialized_size(self) -> int:
        return len(canonical.dumps(self.to_dict()))

    @classmethod
    def from_dict(cls, doc: Any) -> WorksPayload:
        entries = require(doc, "entries", dict, "payload")
        for k, v in entries.items():
            if not isinstance(v, str):
                raise ParseError(f"payload.entries.{k}: expected text", field=f"payload.entries.{k}")
        return cls(
            tuple(entries.items()),
            PayloadDescriptor(require(doc, "format", str, "payload"), require(doc, "encoding", str, "payload")),
        )


@dataclass(frozen=True)
class Signature:
    algorithm: str
    signer_id: str
    signer_public_key: bytes
    timestamp: int
    value: bytes

    def validate(self, where: str = "signature") -> None:
        sizes = SIGNATURE_ALGORITHMS.get(self.algorithm)
        if sizes is None:
            raise ValidationError(f"{where}: unknown algorithm {self.algorithm!r}", field=f"{where}.algorithm")
        if not isinstance(self.signer_id, str) or not self.signer_id:
            raise ValidationError(f"{where}: signer_id must be non-empty", field=f"{where}.signer_id")
        if not isinstance(self.signer_public_key, bytes) or len(self.signer_public_key) != sizes[0]:
            raise ValidationError(f"{where}: bad public key length", field=f"{where}.signer_public_key")
        if not isinstance(self.timestamp, int) or isinstance(self.timestamp, bool) or self.timestamp < 0:
            raise ValidationError(f"{where}: bad timestamp", field=f"{where}.timestamp")
        if not isinstance(self.value, bytes) or len(self.value) != sizes[1]:
            raise ValidationError(f"{where}: bad signature length", field=f"{where}.value")

    def header(self) -> dict[str, Any]:
        """The signed attributes: everything except the signature value."""
        return {
            "algorithm": self.algorithm,
            "signer_id": self.signer_id,
            "signer_public_key": to_hex(self.signer_public_key),
            "timestamp": self.timestamp,
        }

    def to_dict(self) -> dict[str, Any]:
        return {**self.header(), "value": to_hex(self.value)}

    @classmethod
    def from_dict(cls, doc: Any, where: str = "signature") -> Signature:
        return cls(
            algorithm=require(doc, "algorithm", str, where),
            signer_id=require(doc, "signer_id", str, where),
            signer_public_key=from_hex(require(doc, "signer_public_key", str, where), f"{where}.signer_public_key"),
            timestamp=require(doc, "timestamp", int, where),
            value=from_hex(require(doc, "value", str, where), f"{where}.value"),
        )


@dataclass(frozen=True)
class RevisionLink:
    identifier: Identifier
    unit_hash: bytes

    def to_dict(self) -> dict[str, Any]:
        return {"identifier": str(self.identifier), "unit_hash": to_hex(self.unit_hash)}

    @classmethod
    def from_dict(cls, doc: Any) -> RevisionLink:
        return cls(
            identifier=_parse_identifier(require(doc, "identifier", str, "prev_revision"), "prev_revision.identifier"),
            unit_hash=from_hex(require(doc, "unit_hash", str, "prev_revision"), "prev_revision.unit_hash"),
        )


def _parse_identifier(text: str, where: str) -> Identifier:
    # structural parse only; field invariants are checked by validate()
    body = text[4:] if text[:4].lower() == "doi:" else text
    prefix, sep, suffix = body.partition("/")
    if not sep:
        raise ParseError(f"{where}: not an identifier", field=where)
    return Identifier(prefix, suffix)


def _check_type(doc: Any, expected: str) -> None:
    kind = require(doc, "type", str, "document")
    if kind != expected:
        raise ParseError(f"expected a {expected} document, got {kind!r}", field="type")
    if require(doc, "version", int, "document") != FORMAT_VERSION:
        raise ParseError("unsupported format version", field="version")


@dataclass(frozen=True)
class CreationMetadata:
    """A signed creation-metadata unit. ``signature`` is ``None`` before signing."""

    identifier: Identifier
    payload: WorksPayload
    work_hash: WorkDigest
    prev_revision: RevisionLink | None = None
    signature: Signature | None = None

    def validate(self, require_signature: bool = False) -> None:
        self.identifier.validate()
        self.payload.validate()
        self.work_hash.validate()
        if self.prev_revision is not None:
            self.prev_revision.identifier.validate("prev_revision.identifier")
            h = self.prev_revision.unit_hash
            if not isinstance(h, bytes) or len(h) != 32:
                raise ValidationError("prev_revision.unit_hash: expected 32 bytes", field="prev_revision.unit_hash")
            if self.prev_revision.identifier == self.identifier:
                raise ValidationError("a revision needs a new identifier", field="prev_revision.identifier")
        if self.signature is not None:
            self.signature.validate()
        elif require_signature:
            raise ValidationError("unit is not signed", field="signature")

    def content_doc(self) -> dict[str, Any]:
        return {
            "type": CREATION_TYPE,
            "version": FORMAT_VERSION,
            "identifier": str(self.identifier),
            "payload": self.payload.to_dict(),
            "work_hash": self.work_hash.to_dict(),
            "prev_revision": None if self.prev_revision is None else self.prev_revision.to_dict(),
        }

    def canonical_bytes(self) -> bytes:
        """Canonical bytes of parts 1-3 plus the revision link (the signed content)."""
        try:
            self.identifier.validate()
            self.payload.validate()
            self.work_hash.validate()
            if self.prev_revision is not None:
                self.prev_revision.identifier.validate("prev_revision.identifier")
                if len(self.prev_revision.unit_hash) != 32:
                    raise ValidationError("prev_revision.unit_hash: expected 32 bytes", field="prev_revision.unit_hash")
        except ValidationError as exc:
            raise CanonicalizationError(exc.message, field=exc.field) from None
        return canonical.dumps(self.content_doc())

    def to_dict(self) -> dict[str, Any]:
        doc = self.content_doc()
        doc["signature"] = None if self.signature is None else self.signature.to_dict()
        return doc

    def signed_bytes(self) -> bytes:
        """The ``.cmeta`` file form; hashing these bytes gives the unit hash."""
        if self.signature is None:
            raise CanonicalizationError("unit is not signed", field="signature")
        self.canonical_bytes()
        return canonical.dumps(self.to_dict())

    def unit_hash(self) -> bytes:
        return canonical.sha256(self.signed_bytes())

    def unsigned(self) -> CreationMetadata:
        return replace(self, signature=None)

    @classmethod
    def from_dict(cls, doc: Any) -> CreationMetadata:
        _check_type(doc, CREATION_TYPE)
        prev = doc.get("prev_revision")
        sig = doc.get("signature")
        return cls(
            identifier=_parse_identifier(require(doc, "identifier", str, "document"), "identifier"),
            payload=WorksPayload.from_dict(require(doc, "payload", dict, "document")),
            work_hash=WorkDigest.from_dict(require(doc, "work_hash", dict, "document")),
            prev_revision=None if prev is None else RevisionLink.from_dict(prev),
            signature=None if sig is None else Signature.from_dict(sig),
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> CreationMetadata:
        return cls.from_dict(canonical.loads(data))


@dataclass(frozen=True)
class RegistryMetadata:
    """Short ledger record summarizing one creation-metadata unit."""

    identifier: Identifier
    full_metadata_hash: bytes
    works_id: str | None = None
    prev_txid: bytes | None = None
    signature: Signature | None = None

    def __post_init__(self) -> None:
        if self.works_id == "":
            object.__setattr__(self, "works_id", None)

    def validate(self, require_signature: bool = False) -> None:
        self._validate_content()
        if self.signature is not None:
            self.signature.validate()
        elif require_signature:
            raise ValidationError("record is not signed", field="signature")

    def _validate_content(self) -> None:
        self.identifier.validate()
        if self.works_id is not None and (not isinstance(self.works_id, str) or len(self.works_id) > 64):
            raise ValidationError("works_id must be text of at most 64 chars", field="works_id")
        if not isinstance(self.full_metadata_hash, bytes) or len(self.full_metadata_hash) != 32:
            raise ValidationError("full_metadata_hash: expected 32 bytes", field="full_metadata_hash")
        if self.prev_txid is not None and (not isinstance(self.prev_txid, bytes) or len(self.prev_txid) != 32):
            raise ValidationError("prev_txid: expected 32 bytes", field="prev_txid")

    def content_doc(self) -> dict[str, Any]:
        return {
            "type": REGISTRY_TYPE,
            "version": FORMAT_VERSION,
            "identifier": str(self.identifier),
            "works_id": self.works_id,
            "full_metadata_hash": to_hex(self.full_metadata_hash),
            "prev_txid": to_hex(self.prev_txid),
        }

    def canonical_bytes(self) -> bytes:
        try:
            self._validate_content()
        except ValidationError as exc:
            raise CanonicalizationError(exc.message, field=exc.field) from None
        return canonical.dumps(self.content_doc())

    def to_dict(self) -> dict[str, Any]:
        doc = self.content_doc()
        doc["signature"] = None if self.signature is None else self.signature.to_dict()
        return doc

    def signed_bytes(self) -> bytes:
        if self.signature is None:
            raise CanonicalizationError("record is not signed", field="signature")
        self.canonical_bytes()
        return canonical.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: Any) -> RegistryMetadata:
        _check_type(doc, REGISTRY_TYPE)
        works_id = doc.get("works_id")
        if works_id is not None and not isinstance(works_id, str):
            raise ParseError("works_id: expected text", field="works_id")
        prev = doc.get("prev_txid")
        sig = doc.get("signature")
        return cls(
            identifier=_parse_identifier(require(doc, "identifier", str, "document"), "identifier"),
            works_id=works_id,
            full_metadata_hash=from_hex(require(doc, "full_metadata_hash", str, "document"), "full_metadata_hash"),
            prev_txid=None if prev is None else from_hex(prev, "prev_txid"),
            signature=None if sig is None else Signature.from_dict(sig),
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> RegistryMetadata:
        return cls.from_dict(canonical.loads(data))


def load_document(data: bytes) -> CreationMetadata | RegistryMetadata:
    """Parse either file kind, dispatching on the ``type`` field."""
    doc = canonical.loads(data)
    kind = doc.get("type") if isinstance(doc, dict) else None
    if kind == REGISTRY_TYPE:
        return RegistryMetadata.from_dict(doc)
    return CreationMetadata.from_dict(doc)


def check_payload_policy(
    payload: WorksPayload,
    denylist: frozenset[str] | set[str] = DEFAULT_DENYLIST,
    max_bytes: int = MAX_PAYLOAD_BYTES,
) -> None:
    """Reject payloads that carry rights information or are too big to be metadata.

    Keys are compared case-insensitively against the denylist.
    """
    denied = {k.lower() for k in denylist}
    for key in payload.keys():
        if isinstance(key, str) and key.strip().lower() in denied:
            raise RightsContentRejected(f"payload key {key!r} is reserved for rights metadata", field=key)
    size = payload.serialized_size()
    if size > max_bytes:
        raise PayloadTooLarge(f"payload is {size} bytes, limit {max_bytes}", size=size, limit=max_bytes)
