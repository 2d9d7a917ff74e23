"""Hashing, signing and verification of metadata units, plus revision chains."""
from __future__ import annotations

import enum
import hashlib
from collections.abc import Callable
from dataclasses import dataclass, field, replace

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from mml import canonical
from mml.errors import (
    CycleError,
    ProvenanceError,
    RevisionError,
    SigningKeyError,
    ValidationError,
)
from mml.metadata import (
    CreationMetadata,
    Identifier,
    RegistryMetadata,
    RevisionLink,
    Signature,
    WorkDigest,
    WorksPayload,
    check_payload_policy,
)

SIGNATURE_ALGORITHM = "ed25519"

SigningKeyLike = Ed25519PrivateKey | bytes


class Verification(str, enum.Enum):
    OK = "ok"
    TAMPERED = "tampered"
    MALFORMED = "malformed"


class PairCheck(str, enum.Enum):
    OK = "ok"
    IDENTIFIER_MISMATCH = "identifier-mismatch"
    HASH_MISMATCH = "hash-mismatch"
    BAD_SIGNATURE = "bad-signature"


def generate_key() -> Ed25519PrivateKey:
    return Ed25519PrivateKey.generate()


def load_signing_key(key: SigningKeyLike) -> Ed25519PrivateKey:
    """Accept a key object or its 32 raw private bytes."""
    if isinstance(key, Ed25519PrivateKey):
        return key
    if isinstance(key, (bytes, bytearray)) and len(key) == 32:
        return Ed25519PrivateKey.from_private_bytes(bytes(key))
    raise SigningKeyError("expected an ed25519 private key or 32 raw bytes")


def private_key_bytes(key: Ed25519PrivateKey) -> bytes:
    return key.private_bytes(serialization.Encoding.Raw, serialization.PrivateFormat.Raw, serialization.NoEncryption())


def public_key_bytes(key: SigningKeyLike) -> bytes:
    return load_signing_key(key).public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)


def hash_work(work_bytes: bytes) -> WorkDigest:
    return WorkDigest(hashlib.sha256(work_bytes).digest())


def _signing_input(content: bytes, header: dict) -> bytes:
    # content is compact JSON, which never contains a raw newline
    return content + b"\n" + canonical.dumps(header)


def make_signature(content: bytes, key: SigningKeyLike, signer_id: str, timestamp: int) -> Signature:
    sk = load_signing_key(key)
    unsigned = Signature(SIGNATURE_ALGORITHM, signer_id, public_key_bytes(sk), timestamp, b"\0" * 64)
    unsigned.validate()
    value = sk.sign(_signing_input(content, unsigned.header()))
    return replace(unsigned, value=value)


def check_signature(content: bytes, sig: Signature) -> bool:
    if sig.algorithm != SIGNATURE_ALGORITHM:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(sig.signer_public_key).verify(sig.value, _signing_input(content, sig.header()))
    except (InvalidSignature, ValueError):
        return False
    return True


def sign_creation(
    unsigned: CreationMetadata,
    signing_key: SigningKeyLike,
    signer_id: str,
    timestamp: int,
    *,
    enforce_policy: bool = True,
) -> CreationMetadata:
    """Sign parts 1-3 (and the revision link) of a unit.

    With ``enforce_policy`` the payload is also checked against the default
    rights denylist and size cap before anything is signed.
    """
    unit = unsigned.unsigned()
    unit.validate()
    if enforce_policy:
        check_payload_policy(unit.payload)
    sig = make_signature(unit.canonical_bytes(), signing_key, signer_id, timestamp)
    return replace(unit, signature=sig)


def verify_creation(unit: CreationMetadata) -> Verification:
    try:
        unit.validate(require_signature=True)
        content = unit.canonical_bytes()
    except (ValidationError, AttributeError, TypeError):
        return Verification.MALFORMED
    return Verification.OK if check_signature(content, unit.signature) else Verification.TAMPERED


def verify_registry(rm: RegistryMetadata) -> Verification:
    try:
        rm.validate(require_signature=True)
        content = rm.canonical_bytes()
    except (ValidationError, AttributeError, TypeError):
        return Verification.MALFORMED
    return Verification.OK if check_signature(content, rm.signature) else Verification.TAMPERED


def derive_registry(
    unit: CreationMetadata,
    works_id: str | None,
    prev_txid: bytes | None,
    signing_key: SigningKeyLike,
    signer_id: str,
    timestamp: int,
) -> RegistryMetadata:
    status = verify_creation(unit)
    if status is not Verification.OK:
        raise ProvenanceError(f"refusing to register an unverifiable unit ({status.value})")
    rm = RegistryMetadata(
        identifier=unit.identifier,
        works_id=works_id,
        full_metadata_hash=unit.unit_hash(),
        prev_txid=prev_txid,
    )
    rm.validate()
    sig = make_signature(rm.canonical_bytes(), signing_key, signer_id, timestamp)
    return replace(rm, signature=sig)


def verify_registry_pair(rm: RegistryMetadata, unit: CreationMetadata) -> PairCheck:
    # hash first: a record paired with some other unit is a hash mismatch
    # whatever its identifier says
    try:
        unit_hash = unit.unit_hash()
    except ValidationError:
        return PairCheck.HASH_MISMATCH
    if rm.full_metadata_hash != unit_hash:
        return PairCheck.HASH_MISMATCH
    if rm.identifier != unit.identifier:
        return PairCheck.IDENTIFIER_MISMATCH
    if verify_registry(rm) is not Verification.OK or verify_creation(unit) is not Verification.OK:
        return PairCheck.BAD_SIGNATURE
    return PairCheck.OK


def new_revision(
    old: CreationMetadata,
    new_payload: WorksPayload,
    new_work_hash: WorkDigest,
    new_identifier: Identifier,
    signing_key: SigningKeyLike,
    signer_id: str,
    timestamp: int,
    *,
    enforce_policy: bool = True,
) -> CreationMetadata:
    if new_identifier == old.identifier:
        raise RevisionError("a revision must be assigned a new identifier", field="identifier")
    status = verify_creation(old)
    if status is not Verification.OK:
        raise ProvenanceError(f"cannot revise an unverifiable unit ({status.value})")
    unsigned = CreationMetadata(
        identifier=new_identifier,
        payload=new_payload,
        work_hash=new_work_hash,
        prev_revision=RevisionLink(old.identifier, old.unit_hash()),
    )
    return sign_creation(unsigned, signing_key, signer_id, timestamp, enforce_policy=enforce_policy)


@dataclass
class RevisionChain:
    """Result of walking revision links from a head unit, newest first.

    When an ancestor is missing or does not match its recorded hash, ``units``
    stops at the last good unit and ``broken_at`` is the depth of the missing
    ancestor (head is depth 0).
    """

    units: list[CreationMetadata] = field(default_factory=list)
    broken_at: int | None = None
    break_reason: str | None = None
    missing: Identifier | None = None

    @property
    def complete(self) -> bool:
        return self.broken_at is None


def walk_revision_chain(
    head: CreationMetadata,
    fetch: Callable[[Identifier], CreationMetadata | None],
) -> RevisionChain:
    chain = RevisionChain(units=[head])
    seen = {head.identifier}
    current = head
    while current.prev_revision is not None:
        link = current.prev_revision
        if link.identifier in seen:
            raise CycleError(f"revision chain revisits {link.identifier}")
        seen.add(link.identifier)
        depth = len(chain.units)
        ancestor = fetch(link.identifier)
        if ancestor is None:
            chain.broken_at, chain.break_reason, chain.missing = depth, "missing", link.identifier
            break
        try:
            matches = ancestor.unit_hash() == link.unit_hash
        except ValidationError:
            matches = False
        if not matches:
            chain.broken_at, chain.break_reason, chain.missing = depth, "hash-mismatch", link.identifier
            break
        chain.units.append(ancestor)
        current = ancestor
    return chain
