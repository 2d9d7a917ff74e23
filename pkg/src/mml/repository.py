"""Open-access, append-only creation-metadata repository with pull replication.

On-disk layout under ``data_dir``::

    units/<prefix>/<suffix>.cmeta   canonical signed file bytes
    index.json                      stored_at / unit_hash / superseded_by per identifier

Units are write-once. Supersession markers are local state derived from the
revision links of stored units; they are never copied from peers.
"""
from __future__ import annotations

import json
import logging
import threading
import time
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from mml.errors import (
    DuplicateIdentifier,
    MalformedUnit,
    MMLError,
    NotFound,
    TamperedUnit,
)
from mml.metadata import (
    DEFAULT_DENYLIST,
    MAX_PAYLOAD_BYTES,
    CreationMetadata,
    Identifier,
    check_payload_policy,
)
from mml.signing import Verification, verify_creation

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Receipt:
    identifier: Identifier
    unit_hash: bytes

    def to_dict(self) -> dict:
        return {"identifier": str(self.identifier), "unit_hash": self.unit_hash.hex()}

    @classmethod
    def from_dict(cls, doc: dict) -> Receipt:
        return cls(Identifier.parse(doc["identifier"]), bytes.fromhex(doc["unit_hash"]))


@dataclass(frozen=True)
class InventoryEntry:
    identifier: Identifier
    unit_hash: bytes
    stored_at: int

    def to_dict(self) -> dict:
        return {"identifier": str(self.identifier), "unit_hash": self.unit_hash.hex(), "stored_at": self.stored_at}

    @classmethod
    def from_dict(cls, doc: dict) -> InventoryEntry:
        return cls(Identifier.parse(doc["identifier"]), bytes.fromhex(doc["unit_hash"]), int(doc["stored_at"]))


@dataclass
class StoredUnit:
    unit: CreationMetadata
    stored_at: int
    unit_hash: bytes
    superseded_by: Identifier | None = None


@dataclass
class SyncReport:
    peer: str
    fetched: int = 0
    skipped: int = 0
    present: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "peer": self.peer,
            "fetched": self.fetched,
            "skipped": self.skipped,
            "present": self.present,
            "failures": [{"identifier": i, "error": e} for i, e in self.failures],
        }


class Peer(Protocol):
    def inventory(self) -> list[InventoryEntry]: ...

    def export(self, identifier: Identifier) -> bytes: ...


class Repository:
    def __init__(
        self,
        data_dir: str | Path | None = None,
        *,
        denylist: Iterable[str] = DEFAULT_DENYLIST,
        peers: Sequence[str] = (),
        max_payload: int = MAX_PAYLOAD_BYTES,
        clock: Callable[[], float] = time.time,
        name: str = "repository",
    ) -> None:
        self.name = name
        self.denylist = frozenset(k.lower() for k in denylist)
        self.peers = list(peers)
        self.max_payload = max_payload
        self._clock = clock
        self._units: dict[Identifier, StoredUnit] = {}
        # revision links whose target is not stored (yet): target -> [(newer, expected hash)]
        self._pending_links: dict[Identifier, list[tuple[Identifier, bytes]]] = {}
        self._lock = threading.RLock()
        self.data_dir = Path(data_dir) if data_dir else None
        if self.data_dir:
            (self.data_dir / "units").mkdir(parents=True, exist_ok=True)
            self._load()

    # writes

    def put(self, unit: CreationMetadata) -> Receipt:
        check_payload_policy(unit.payload, self.denylist, self.max_payload)
        status = verify_creation(unit)
        if status is Verification.MALFORMED:
            raise MalformedUnit(f"{unit.identifier}: structurally invalid unit")
        if status is Verification.TAMPERED:
            raise TamperedUnit(f"{unit.identifier}: signature does not verify")
        data = unit.signed_bytes()
        receipt = Receipt(unit.identifier, unit.unit_hash())
        with self._lock:
            existing = self._units.get(unit.identifier)
            if existing is not None:
                original = Receipt(unit.identifier, existing.unit_hash)
                raise DuplicateIdentifier(
                    f"{unit.identifier} is already stored",
                    receipt=original,
                    identical=existing.unit_hash == receipt.unit_hash,
                )
            stored = StoredUnit(unit, int(self._clock()), receipt.unit_hash)
            self._units[unit.identifier] = stored
            self._link_revisions(stored)
            self._persist(stored, data)
        log.info("stored %s", unit.identifier)
        return receipt

    def _link_revisions(self, stored: StoredUnit) -> None:
        unit = stored.unit
        link = unit.prev_revision
        if link is not None:
            prior = self._units.get(link.identifier)
            if prior is None:
                self._pending_links.setdefault(link.identifier, []).append((unit.identifier, link.unit_hash))
            elif prior.superseded_by is None and prior.unit_hash == link.unit_hash:
                prior.superseded_by = unit.identifier
                self._persist_index()
        for newer, expected in self._pending_links.pop(unit.identifier, []):
            if stored.superseded_by is None and expected == stored.unit_hash:
                stored.superseded_by = newer

    def import_unit(self, data: bytes) -> Receipt:
        return self.put(CreationMetadata.from_bytes(data))

    # reads

    def get(self, identifier: Identifier) -> StoredUnit:
        stored = self._units.get(identifier)
        if stored is None:
            raise NotFound(f"{identifier} is not stored here")
        return stored

    def __contains__(self, identifier: Identifier) -> bool:
        return identifier in self._units

    def __len__(self) -> int:
        return len(self._units)

    def export(self, identifier: Identifier) -> bytes:
        return self.get(identifier).unit.signed_bytes()

    def inventory(self) -> list[InventoryEntry]:
        with self._lock:
            entries = [InventoryEntry(i, s.unit_hash, s.stored_at) for i, s in self._units.items()]
        return sorted(entries, key=lambda e: str(e.identifier))

    list_inventory = inventory

    def units(self) -> list[StoredUnit]:
        with self._lock:
            return list(self._units.values())

    # replication

    def sync_pull(self, peer: Peer | str, connect: Callable[[str], Peer] | None = None) -> SyncReport:
        """Copy every unit the peer has and we lack, validating each through ``put``."""
        if isinstance(peer, str):
            label = peer
            if connect is None:
                from mml.clients import RepositoryClient

                connect = RepositoryClient
            peer = connect(peer)
        else:
            label = getattr(peer, "name", type(peer).__name__)
        report = SyncReport(label)
        for entry in peer.inventory():
            if entry.identifier in self._units:
                report.present += 1
                continue
            try:
                self.import_unit(peer.export(entry.identifier))
            except DuplicateIdentifier:
                report.present += 1
            except MMLError as exc:
                report.skipped += 1
                report.failures.append((str(entry.identifier), exc.kind))
                log.warning("sync from %s skipped %s: %s", label, entry.identifier, exc.kind)
            else:
                report.fetched += 1
        return report

    # persistence

    def _unit_path(self, identifier: Identifier) -> Path:
        return self.data_dir / "units" / identifier.prefix / f"{identifier.suffix}.cmeta"

    def _persist(self, stored: StoredUnit, data: bytes) -> None:
        if not self.data_dir:
            return
        path = self._unit_path(stored.unit.identifier)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(data)
        tmp.replace(path)
        self._persist_index()

    def _persist_index(self) -> None:
        if not self.data_dir:
            return
        index = {
            str(i): {
                "stored_at": s.stored_at,
                "unit_hash": s.unit_hash.hex(),
                "superseded_by": None if s.superseded_by is None else str(s.superseded_by),
            }
            for i, s in self._units.items()
        }
        tmp = self.data_dir / "index.json.tmp"
        tmp.write_text(json.dumps(index, indent=1, sort_keys=True))
        tmp.replace(self.data_dir / "index.json")

    def _load(self) -> None:
        index_path = self.data_dir / "index.json"
        index = json.loads(index_path.read_text()) if index_path.exists() else {}
        for text, meta in index.items():
            ident = Identifier.parse(text)
            unit = CreationMetadata.from_bytes(self._unit_path(ident).read_bytes())
            if verify_creation(unit) is not Verification.OK or unit.unit_hash().hex() != meta["unit_hash"]:
                raise TamperedUnit(f"stored unit {ident} failed verification on load")
            superseded = meta.get("superseded_by")
            self._units[ident] = StoredUnit(
                unit, meta["stored_at"], unit.unit_hash(), Identifier.parse(superseded) if superseded else None
            )
        for stored in self._units.values():
            link = stored.unit.prev_revision
            if link is not None and link.identifier not in self._units:
                self._pending_links.setdefault(link.identifier, []).append((stored.unit.identifier, link.unit_hash))


def ring_edges(n: int) -> list[tuple[int, int]]:
    """Node i pulls from node i+1 (mod n)."""
    return [(i, (i + 1) % n) for i in range(n)] if n > 1 else []


def mesh_edges(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(n) if i != j]


def anti_entropy_round(repos: Sequence[Repository], edges: Iterable[tuple[int, int]]) -> list[SyncReport]:
    """One full round: for each edge (i, j), repository i pulls from repository j."""
    return [repos[i].sync_pull(repos[j]) for i, j in edges]


def converged(repos: Sequence[Repository]) -> bool:
    inventories = [{(e.identifier, e.unit_hash) for e in r.inventory()} for r in repos]
    return all(inv == inventories[0] for inv in inventories)

