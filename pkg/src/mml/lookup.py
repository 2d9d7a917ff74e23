"""End-to-end lookup: keyword search, resolution, fetch, verification, freshness."""
from __future__ import annotations

from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Protocol

from mml.errors import MMLError
from mml.metadata import CreationMetadata, Identifier
from mml.search import Searchable, SearchResult, search
from mml.signing import PairCheck, Verification, verify_creation, verify_registry_pair

LATEST = "latest"
SUPERSEDED = "superseded-by"
UNREGISTERED = "unregistered"
BROKEN_CHAIN = "broken-chain"

FETCH_FAILED = "fetch-failed"
VERIFY_FAILED = "verify-failed"
RESOLVE_FAILED = "resolve-failed"
LEDGER_FAILED = "ledger-failed"
REGISTRY_MISMATCH = "registry-mismatch"


class Resolves(Protocol):
    def resolve(self, identifier: Identifier) -> list[str]: ...


class Exports(Protocol):
    def export(self, identifier: Identifier) -> bytes: ...


class LatestLookup(Protocol):
    def latest_registration(self, identifier: Identifier) -> Any: ...


@dataclass(frozen=True)
class LookupResult:
    match: SearchResult
    unit: CreationMetadata | None = None
    freshness: str | None = None
    superseded_by: Identifier | None = None
    source: str | None = None
    error: str | None = None
    detail: str = ""

    @property
    def identifier(self) -> Identifier:
        return self.match.identifier

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.match.to_dict(),
            "unit": None if self.unit is None else self.unit.to_dict(),
            "freshness": self.freshness,
            "superseded_by": None if self.superseded_by is None else str(self.superseded_by),
            "source": self.source,
            "error": self.error,
            "detail": self.detail,
        }


def fetch_verified(
    identifier: Identifier,
    endpoints: Sequence[str],
    connect: Callable[[str], Exports],
) -> tuple[CreationMetadata | None, str | None, str | None, str]:
    """Try each location in order. Returns (unit, source, error, detail).

    A copy that fails verification is never returned; the next location is
    tried instead.
    """
    if not endpoints:
        return None, None, FETCH_FAILED, "no locations bound"
    error, detail = FETCH_FAILED, ""
    for endpoint in endpoints:
        try:
            data = connect(endpoint).export(identifier)
        except MMLError as exc:
            detail = f"{endpoint}: {exc.message}"
            continue
        try:
            unit = CreationMetadata.from_bytes(data)
            status = verify_creation(unit)
        except MMLError as exc:
            status, unit = Verification.MALFORMED, None
            detail = f"{endpoint}: {exc.message}"
        if status is Verification.OK and unit.identifier == identifier:
            return unit, endpoint, None, ""
        error = VERIFY_FAILED
        reason = "for another identifier" if status is Verification.OK else status.value
        detail = f"{endpoint}: unit is {reason}"
    return None, None, error, detail


def freshness_of(unit: CreationMetadata, ledger: LatestLookup) -> tuple[str, Identifier | None, str | None, str]:
    """Returns (freshness, superseded_by, error, detail)."""
    try:
        latest = ledger.latest_registration(unit.identifier)
    except MMLError as exc:
        return UNREGISTERED, None, LEDGER_FAILED, exc.message
    if latest is None:
        return UNREGISTERED, None, None, ""
    if latest.status == BROKEN_CHAIN:
        return BROKEN_CHAIN, None, None, f"dangling prev_txid {latest.dangling_txid.hex()}"
    if latest.identifier != unit.identifier:
        return SUPERSEDED, latest.identifier, None, ""
    if verify_registry_pair(latest.registration, unit) is not PairCheck.OK:
        return LATEST, None, REGISTRY_MISMATCH, "stored unit differs from the notarized one"
    return LATEST, None, None, ""


def lookup(
    query: str,
    dbs: Sequence[Searchable],
    resolver: Resolves,
    connect: Callable[[str], Exports],
    ledger: LatestLookup,
    *,
    max_in_flight: int = 8,
) -> list[LookupResult]:
    """Search, then resolve, fetch, verify and date every hit.

    Failures are reported per result. Output keeps the search ranking
    regardless of which fetch finishes first.
    """
    matches = search(query, dbs)

    def one(match: SearchResult) -> LookupResult:
        try:
            endpoints = resolver.resolve(match.identifier)
        except MMLError as exc:
            return LookupResult(match, error=RESOLVE_FAILED, detail=exc.message)
        unit, source, error, detail = fetch_verified(match.identifier, endpoints, connect)
        if unit is None:
            return LookupResult(match, error=error, detail=detail)
        fresh, newer, error, detail = freshness_of(unit, ledger)
        return LookupResult(match, unit, fresh, newer, source, error, detail)

    if not matches:
        return []
    with ThreadPoolExecutor(max_workers=max(1, min(max_in_flight, len(matches)))) as pool:
        return list(pool.map(one, matches))
