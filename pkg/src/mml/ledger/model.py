"""Ledger transactions and blocks, and whole-chain verification."""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Any

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PublicKey

from mml import canonical
from mml.canonical import from_hex, require, to_hex
from mml.errors import (
    InvalidTransaction,
    MMLError,
    ParseError,
    RecipientRuleViolation,
    RejectedPayload,
    ValidationError,
)
from mml.metadata import RegistryMetadata, Signature
from mml.signing import (
    SigningKeyLike,
    Verification,
    check_signature,
    load_signing_key,
    make_signature,
    public_key_bytes,
    verify_registry,
)

RECIPIENT_SELF = "self"
RECIPIENT_NULL = "null"
RECIPIENTS = (RECIPIENT_SELF, RECIPIENT_NULL)
MAX_REGISTRY_BYTES = 1024
ZERO_HASH = bytes(32)
GENESIS_PROPOSER = "genesis"


@dataclass(frozen=True)
class LedgerTransaction:
    """A notarization transaction enveloping one registry-metadata record."""

    sender_public_key: bytes
    recipient: str
    payload: RegistryMetadata
    tx_signature: Signature
    txid: bytes

    def body_doc(self) -> dict[str, Any]:
        return {
            "type": "ledger-transaction",
            "sender_public_key": to_hex(self.sender_public_key),
            "recipient": self.recipient,
            "payload": self.payload.to_dict(),
        }

    def compute_txid(self) -> bytes:
        return canonical.sha256(canonical.dumps({**self.body_doc(), "tx_signature": self.tx_signature.to_dict()}))

    def to_dict(self) -> dict[str, Any]:
        return {**self.body_doc(), "tx_signature": self.tx_signature.to_dict(), "txid": to_hex(self.txid)}

    @classmethod
    def from_dict(cls, doc: Any) -> LedgerTransaction:
        if require(doc, "type", str, "transaction") != "ledger-transaction":
            raise ParseError("not a ledger transaction", field="type")
        return cls(
            sender_public_key=from_hex(require(doc, "sender_public_key", str, "transaction"), "sender_public_key"),
            recipient=require(doc, "recipient", str, "transaction"),
            payload=RegistryMetadata.from_dict(require(doc, "payload", dict, "transaction")),
            tx_signature=Signature.from_dict(require(doc, "tx_signature", dict, "transaction"), "tx_signature"),
            txid=from_hex(require(doc, "txid", str, "transaction"), "txid"),
        )


def _check_payload(rm: RegistryMetadata) -> None:
    if verify_registry(rm) is not Verification.OK:
        raise RejectedPayload(f"registry metadata for {rm.identifier} does not verify")
    size = len(rm.signed_bytes())
    if size > MAX_REGISTRY_BYTES:
        raise RejectedPayload(f"registry metadata is {size} bytes, ledger limit is {MAX_REGISTRY_BYTES}")


def _check_recipient(recipient: str, sender: bytes, rm: RegistryMetadata) -> None:
    if recipient not in RECIPIENTS:
        raise RecipientRuleViolation(f"recipient must be 'self' or 'null', got {recipient!r}", field="recipient")
    if recipient == RECIPIENT_SELF and sender != rm.signature.signer_public_key:
        raise RecipientRuleViolation("a self-addressed transaction must be sent by the record's issuer", field="recipient")


def build_transaction(
    rm: RegistryMetadata,
    sender_key: SigningKeyLike,
    recipient: str = RECIPIENT_SELF,
    *,
    sender_id: str | None = None,
    timestamp: int | None = None,
) -> LedgerTransaction:
    """Envelope and sign a registration. Same inputs give the same txid."""
    _check_payload(rm)
    sk = load_signing_key(sender_key)
    sender = public_key_bytes(sk)
    _check_recipient(recipient, sender, rm)
    draft = LedgerTransaction(sender, recipient, rm, rm.signature, ZERO_HASH)
    sig = make_signature(
        canonical.dumps(draft.body_doc()),
        sk,
        sender_id or rm.signature.signer_id,
        rm.signature.timestamp if timestamp is None else timestamp,
    )
    tx = replace(draft, tx_signature=sig)
    return replace(tx, txid=tx.compute_txid())


def validate_transaction(tx: LedgerTransaction) -> None:
    try:
        tx.tx_signature.validate("tx_signature")
    except ValidationError as exc:
        raise InvalidTransaction(exc.message) from None
    _check_payload(tx.payload)
    _check_recipient(tx.recipient, tx.sender_public_key, tx.payload)
    if tx.tx_signature.signer_public_key != tx.sender_public_key:
        raise InvalidTransaction("transaction signed by someone other than its sender")
    if not check_signature(canonical.dumps(tx.body_doc()), tx.tx_signature):
        raise InvalidTransaction("transaction signature does not verify")
    if tx.txid != tx.compute_txid():
        raise InvalidTransaction("txid does not match transaction contents")


def compute_tx_root(transactions: Sequence[LedgerTransaction]) -> bytes:
    return canonical.sha256(b"".join(tx.txid for tx in transactions))


@dataclass(frozen=True)
class Block:
    height: int
    prev_block_hash: bytes
    tx_root: bytes
    transactions: tuple[LedgerTransaction, ...]
    proposer: str
    block_time: int
    proposer_signature: bytes = b""

    def header_doc(self) -> dict[str, Any]:
        return {
            "type": "block-header",
            "height": self.height,
            "prev_block_hash": to_hex(self.prev_block_hash),
            "tx_root": to_hex(self.tx_root),
            "proposer": self.proposer,
            "block_time": self.block_time,
        }

    @cached_property
    def block_hash(self) -> bytes:
        return canonical.sha256(canonical.dumps({**self.header_doc(), "proposer_signature": to_hex(self.proposer_signature)}))

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.header_doc(),
            "proposer_signature": to_hex(self.proposer_signature),
            "transactions": [tx.to_dict() for tx in self.transactions],
        }

    def to_bytes(self) -> bytes:
        return canonical.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: Any) -> Block:
        if require(doc, "type", str, "block") != "block-header":
            raise ParseError("not a block", field="type")
        return cls(
            height=require(doc, "height", int, "block"),
            prev_block_hash=from_hex(require(doc, "prev_block_hash", str, "block"), "prev_block_hash"),
            tx_root=from_hex(require(doc, "tx_root", str, "block"), "tx_root"),
            transactions=tuple(LedgerTransaction.from_dict(t) for t in require(doc, "transactions", list, "block")),
            proposer=require(doc, "proposer", str, "block"),
            block_time=require(doc, "block_time", int, "block"),
            proposer_signature=from_hex(require(doc, "proposer_signature", str, "block"), "proposer_signature"),
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> Block:
        return cls.from_dict(canonical.loads(data))


def genesis_block() -> Block:
    return Block(0, ZERO_HASH, compute_tx_root(()), (), GENESIS_PROPOSER, 0)


def make_block(
    parent: Block,
    transactions: Sequence[LedgerTransaction],
    proposer: str,
    block_time: int,
    key: SigningKeyLike,
) -> Block:
    block = Block(
        height=parent.height + 1,
        prev_block_hash=parent.block_hash,
        tx_root=compute_tx_root(transactions),
        transactions=tuple(transactions),
        proposer=proposer,
        block_time=block_time,
    )
    sig = load_signing_key(key).sign(canonical.dumps(block.header_doc()))
    return replace(block, proposer_signature=sig)


@dataclass(frozen=True)
class Validators:
    """Ordered validator set; the proposer for tick ``t`` is ``ids[t % len(ids)]``."""

    ids: tuple[str, ...]
    keys: tuple[bytes, ...]

    def proposer_for(self, tick: int) -> str:
        return self.ids[tick % len(self.ids)]

    def key_of(self, node_id: str) -> bytes | None:
        try:
            return self.keys[self.ids.index(node_id)]
        except ValueError:
            return None

    @property
    def quorum(self) -> int:
        return len(self.ids) // 2 + 1

    def to_dict(self) -> dict[str, Any]:
        return {"validators": [{"node_id": i, "public_key": k.hex()} for i, k in zip(self.ids, self.keys)]}

    @classmethod
    def from_dict(cls, doc: dict) -> Validators:
        entries = doc["validators"]
        return cls(tuple(e["node_id"] for e in entries), tuple(bytes.fromhex(e["public_key"]) for e in entries))


@dataclass(frozen=True)
class Vote:
    """A validator's signed statement that ``target`` extends the justified ``source``."""

    voter: str
    source_hash: bytes
    source_height: int
    target_hash: bytes
    target_height: int
    signature: bytes = b""

    def body_doc(self) -> dict[str, Any]:
        return {
            "type": "vote",
            "voter": self.voter,
            "source_hash": to_hex(self.source_hash),
            "source_height": self.source_height,
            "target_hash": to_hex(self.target_hash),
            "target_height": self.target_height,
        }

    @property
    def key(self) -> tuple[str, bytes]:
        return (self.voter, self.target_hash)

    def to_dict(self) -> dict[str, Any]:
        return {**self.body_doc(), "signature": to_hex(self.signature)}


def make_vote(voter: str, key: SigningKeyLike, source: Block, target: Block) -> Vote:
    vote = Vote(voter, source.block_hash, source.height, target.block_hash, target.height)
    return replace(vote, signature=load_signing_key(key).sign(canonical.dumps(vote.body_doc())))


def check_vote(vote: Vote, validators: Validators) -> bool:
    pk = validators.key_of(vote.voter)
    if pk is None or not 0 <= vote.source_height < vote.target_height:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(pk).verify(vote.signature, canonical.dumps(vote.body_doc()))
    except (InvalidSignature, ValueError, TypeError):
        return False
    return True


def check_block(block: Block, index: int, parent: Block | None, validators: Validators, seen_txids: set[bytes], capacity: int | None = None) -> str | None:
    """Return a reason string if ``block`` is not valid at position ``index``, else None.

    ``seen_txids`` holds the txids of all ancestors; it is extended in place.
    """
    if block.height != index:
        return "height out of sequence"
    if parent is None:
        return None if block == genesis_block() else "not the genesis block"
    if block.prev_block_hash != parent.block_hash:
        return "prev_block_hash does not match parent"
    if block.block_time <= parent.block_time:
        return "block_time not increasing"
    if block.proposer != validators.proposer_for(block.block_time):
        return "proposer out of turn"
    pk = validators.key_of(block.proposer)
    try:
        Ed25519PublicKey.from_public_bytes(pk).verify(block.proposer_signature, canonical.dumps(block.header_doc()))
    except (InvalidSignature, ValueError, TypeError):
        return "bad proposer signature"
    if capacity is not None and len(block.transactions) > capacity:
        return "block over capacity"
    if block.tx_root != compute_tx_root(block.transactions):
        return "tx_root mismatch"
    for tx in block.transactions:
        try:
            validate_transaction(tx)
        except MMLError as exc:
            return f"invalid transaction: {exc.message}"
        if tx.txid in seen_txids:
            return "duplicate transaction"
        seen_txids.add(tx.txid)
    return None


def verify_chain(chain: Sequence[Block], validators: Validators) -> int | None:
    """Recheck every link, root, txid and signature. Returns the first bad height, or None."""
    seen: set[bytes] = set()
    parent = None
    for index, block in enumerate(chain):
        if check_block(block, index, parent, validators, seen) is not None:
            return index
        parent = block
    return None


def verify_chain_bytes(blocks: Sequence[bytes], validators: Validators) -> int | None:
    """Like :func:`verify_chain` over serialized blocks.

    A block that does not parse, or does not re-encode to exactly its own
    bytes, is bad at its height.
    """
    chain: list[Block] = []
    for data in blocks:
        try:
            block = Block.from_bytes(data)
        except (ValidationError, ValueError, TypeError, KeyError):
            return len(chain)
        if block.to_bytes() != data:
            return len(chain)
        chain.append(block)
    return verify_chain(chain, validators)
