"""HTTP clients for the four services. Each mirrors its in-process counterpart.

Server error bodies are turned back into the matching exception; connection
failures become :class:`TransportError`.
"""
from __future__ import annotations

import time
from collections.abc import Sequence
from fractions import Fraction
from typing import Any

import httpx

from mml import canonical
from mml.errors import NotFound, TransportError, error_from_dict
from mml.ledger.model import LedgerTransaction, Validators
from mml.ledger.node import LatestRegistration, Registration
from mml.metadata import CreationMetadata, Identifier, RegistryMetadata
from mml.repository import InventoryEntry, Receipt
from mml.search import Scores

# Tests swap this for an in-process transport; None means real sockets.
TRANSPORT: httpx.BaseTransport | None = None
DEFAULT_TIMEOUT = 10.0


def _path(identifier: Identifier) -> str:
    return f"{identifier.prefix}/{identifier.suffix}"


class ServiceClient:
    def __init__(self, base_url: str, timeout: float = DEFAULT_TIMEOUT) -> None:
        self.base_url = base_url.rstrip("/")
        self.name = self.base_url
        kwargs: dict[str, Any] = {"base_url": self.base_url, "timeout": timeout}
        if TRANSPORT is not None:
            kwargs["transport"] = TRANSPORT
        self._http = httpx.Client(**kwargs)

    def close(self) -> None:
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _request(self, method: str, path: str, **kwargs: Any) -> httpx.Response:
        try:
            resp = self._http.request(method, path, **kwargs)
        except httpx.HTTPError as exc:
            raise TransportError(f"{self.base_url}{path}: {exc or type(exc).__name__}") from None
        if resp.is_success:
            return resp
        try:
            body = resp.json()
        except ValueError:
            body = None
        if isinstance(body, dict) and "error" in body:
            raise error_from_dict(body)
        if resp.status_code == 404:
            raise NotFound(f"{self.base_url}{path}: not found")
        raise TransportError(f"{self.base_url}{path}: HTTP {resp.status_code}")


class ResolverClient(ServiceClient):
    def mint(self, prefix: str) -> Identifier:
        return Identifier.parse(self._request("POST", "/mint", json={"prefix": prefix}).json()["identifier"])

    def bind(self, identifier: Identifier, endpoint: str) -> dict:
        return self._request("POST", "/bind", json={"identifier": str(identifier), "endpoint": endpoint}).json()

    def unbind(self, identifier: Identifier, endpoint: str) -> dict:
        return self._request("POST", "/unbind", json={"identifier": str(identifier), "endpoint": endpoint}).json()

    def resolve(self, identifier: Identifier) -> list[str]:
        return self._request("GET", f"/resolve/{_path(identifier)}").json()


class RepositoryClient(ServiceClient):
    def put(self, unit: CreationMetadata) -> Receipt:
        resp = self._request("PUT", "/metadata", content=unit.signed_bytes(), headers={"content-type": "application/json"})
        return Receipt.from_dict(resp.json())

    def put_bytes(self, data: bytes) -> Receipt:
        resp = self._request("PUT", "/metadata", content=data, headers={"content-type": "application/json"})
        return Receipt.from_dict(resp.json())

    def export(self, identifier: Identifier) -> bytes:
        return self._request("GET", f"/export/{_path(identifier)}").content

    def get(self, identifier: Identifier) -> tuple[CreationMetadata, Identifier | None]:
        """The unit plus the identifier of its newer revision, if this repository knows one."""
        resp = self._request("GET", f"/metadata/{_path(identifier)}")
        newer = resp.headers.get("x-superseded-by")
        return CreationMetadata.from_dict(resp.json()), Identifier.parse(newer) if newer else None

    def inventory(self) -> list[InventoryEntry]:
        return [InventoryEntry.from_dict(e) for e in self._request("GET", "/inventory").json()]

    def sync(self, peer: str | None = None) -> list[dict]:
        body = {} if peer is None else {"peer": peer}
        return self._request("POST", "/sync", json=body).json()


class LedgerClient(ServiceClient):
    def submit(self, tx: LedgerTransaction) -> bytes:
        return bytes.fromhex(self._request("POST", "/ledger/tx", json=tx.to_dict()).json()["txid"])

    def status(self, txid: bytes) -> dict | None:
        try:
            return self._request("GET", f"/ledger/tx/{txid.hex()}").json()
        except NotFound:
            return None

    def wait_confirmed(self, txid: bytes, timeout: float = 30.0, poll: float = 0.05) -> dict:
        deadline = time.monotonic() + timeout
        while True:
            status = self.status(txid)
            if status is not None and status["height"] is not None:
                return status
            if time.monotonic() >= deadline:
                raise TransportError(f"transaction {txid.hex()} not confirmed within {timeout:g}s")
            time.sleep(poll)

    def lookup_by_identifier(self, identifier: Identifier) -> list[Registration]:
        docs = self._request("GET", f"/ledger/doi/{_path(identifier)}").json()
        return [
            Registration(bytes.fromhex(d["txid"]), d["height"], d["index"], RegistryMetadata.from_dict(d["registration"]))
            for d in docs
        ]

    def latest_registration(self, identifier: Identifier) -> LatestRegistration | None:
        try:
            d = self._request("GET", f"/ledger/doi/{_path(identifier)}/latest").json()
        except NotFound:
            return None
        return LatestRegistration(
            txid=bytes.fromhex(d["txid"]),
            height=d["height"],
            index=d["index"],
            registration=RegistryMetadata.from_dict(d["registration"]),
            status=d["status"],
            dangling_txid=bytes.fromhex(d["dangling_txid"]) if d["dangling_txid"] else None,
        )

    def chain(self, start: int = 0) -> list[bytes]:
        """Serialized blocks from height ``start`` upward, exactly as the node holds them."""
        doc = self._request("GET", "/ledger/chain", params={"from": start}).json()
        return [canonical.dumps(b) for b in doc["blocks"]]

    def validators(self) -> Validators:
        return Validators.from_dict(self._request("GET", "/ledger/validators").json())


class SearchClient(ServiceClient):
    """A remote keyword database; usable wherever a local one is."""

    @property
    def db_id(self) -> str:
        return self.base_url

    def score(self, terms: Sequence[str]) -> Scores:
        docs = self._request("POST", "/search", json={"terms": list(terms)}).json()
        return {Identifier.parse(d["identifier"]): (Fraction(d["score"]), tuple(d["matched_terms"])) for d in docs}

    def search(self, query: str) -> list[dict]:
        return self._request("POST", "/search", json={"query": query}).json()

    def associate(self, identifier: Identifier, terms: Sequence[str], origin: str = "user", author: str = "") -> dict:
        body = {"identifier": str(identifier), "terms": list(terms), "origin": origin, "author": author}
        return self._request("POST", "/associate", json=body).json()
