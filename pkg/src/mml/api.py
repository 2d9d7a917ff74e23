"""REST front ends for the four services.

Each ``*_app`` factory wraps an in-process service object. Errors leave as
``{"error": kind, "detail": ...}`` with the error's HTTP status, and every
request is logged to stderr as one JSON line.
"""
from __future__ import annotations

import json
import logging
import sys
import threading
import time
from typing import Any

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse, Response

from mml.errors import MMLError, NotFound, ValidationError
from mml.ledger.model import LedgerTransaction
from mml.ledger.sim import SimNetwork
from mml.metadata import Identifier
from mml.repository import Repository
from mml.resolver import Resolver
from mml.search import KeywordDB, search

access_log = logging.getLogger("mml.access")


def _configure_access_log() -> None:
    if not access_log.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(message)s"))
        access_log.addHandler(handler)
        access_log.setLevel(logging.INFO)
        access_log.propagate = False


def _base_app(role: str) -> FastAPI:
    _configure_access_log()
    app = FastAPI(title=f"mml {role}")

    @app.exception_handler(MMLError)
    async def mml_error(request: Request, exc: MMLError) -> JSONResponse:
        return JSONResponse(exc.to_dict(), status_code=exc.http_status)

    @app.middleware("http")
    async def log_requests(request: Request, call_next):
        start = time.perf_counter()
        response = await call_next(request)
        access_log.info(
            json.dumps(
                {
                    "role": role,
                    "method": request.method,
                    "path": request.url.path,
                    "status": response.status_code,
                    "ms": round((time.perf_counter() - start) * 1000, 2),
                }
            )
        )
        return response

    @app.get("/health")
    def health() -> dict:
        return {"role": role, "ok": True}

    return app


def _ident(prefix: str, suffix: str) -> Identifier:
    return Identifier.parse(f"{prefix}/{suffix}")


def _field(body: Any, name: str, kind: type = str) -> Any:
    if not isinstance(body, dict) or not isinstance(body.get(name), kind):
        raise ValidationError(f"body field {name!r} must be a {kind.__name__}", field=name)
    return body[name]


def resolver_app(resolver: Resolver | None = None) -> FastAPI:
    resolver = resolver or Resolver()
    app = _base_app("resolver")
    app.state.resolver = resolver

    @app.post("/mint")
    def mint(body: Any = Body(...)) -> dict:
        return {"identifier": str(resolver.mint(_field(body, "prefix")))}

    @app.post("/bind", status_code=201)
    def bind(body: Any = Body(...)) -> dict:
        record = resolver.bind(Identifier.parse(_field(body, "identifier")), _field(body, "endpoint"))
        return record.to_dict()

    @app.post("/unbind")
    def unbind(body: Any = Body(...)) -> dict:
        ident = Identifier.parse(_field(body, "identifier"))
        record = resolver.unbind(ident, _field(body, "endpoint"))
        return {"identifier": str(ident), "locations": [] if record is None else record.active()}

    @app.get("/resolve/{prefix}/{suffix}")
    def resolve(prefix: str, suffix: str) -> list[str]:
        return resolver.resolve(_ident(prefix, suffix))

    return app


def repository_app(repo: Repository | None = None) -> FastAPI:
    repo = repo or Repository()
    app = _base_app("repository")
    app.state.repository = repo

    @app.put("/metadata", status_code=201)
    async def put(request: Request) -> dict:
        return repo.import_unit(await request.body()).to_dict()

    @app.get("/metadata/{prefix}/{suffix}")
    def get(prefix: str, suffix: str) -> JSONResponse:
        stored = repo.get(_ident(prefix, suffix))
        headers = {"x-superseded-by": str(stored.superseded_by)} if stored.superseded_by else {}
        return JSONResponse(stored.unit.to_dict(), headers=headers)

    @app.get("/export/{prefix}/{suffix}")
    def export(prefix: str, suffix: str) -> Response:
        return Response(repo.export(_ident(prefix, suffix)), media_type="application/json")

    @app.get("/inventory")
    def inventory() -> list[dict]:
        return [e.to_dict() for e in repo.inventory()]

    @app.post("/sync")
    def sync(body: Any = Body(default=None)) -> list[dict]:
        peer = body.get("peer") if isinstance(body, dict) else None
        peers = [peer] if peer else list(repo.peers)
        if not peers:
            raise ValidationError("no peer given and none configured", field="peer")
        return [repo.sync_pull(p).to_dict() for p in peers]

    return app


class LedgerService:
    """A simulated ledger network hosted in one process, advanced by a ticker thread.

    Queries are answered from the view of ``node`` (the first node by default).
    With ``tick_interval=None`` the network only advances through :meth:`advance`.
    """

    def __init__(self, net: SimNetwork, node: str | None = None, tick_interval: float | None = 0.05) -> None:
        self.net = net
        self.node_id = node or net.ids[0]
        self.lock = threading.Lock()
        self.tick_interval = tick_interval
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    @property
    def node(self):
        return self.net.nodes[self.node_id]

    def advance(self, ticks: int = 1) -> None:
        with self.lock:
            for _ in range(ticks):
                self.net.step()

    def start(self) -> None:
        if self.tick_interval is None or self._thread is not None:
            return
        self._thread = threading.Thread(target=self._run, name="ledger-ticker", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def _run(self) -> None:
        while not self._stop.wait(self.tick_interval):
            self.advance()


def ledger_app(service: LedgerService | None = None) -> FastAPI:
    service = service or LedgerService(SimNetwork(3))
    app = _base_app("ledger-node")
    app.state.ledger = service
    service.start()
    app.router.on_shutdown.append(service.stop)

    @app.post("/ledger/tx", status_code=202)
    def submit(body: Any = Body(...)) -> dict:
        tx = LedgerTransaction.from_dict(body)
        with service.lock:
            txid = service.net.submit_transaction(tx, service.node_id)
        return {"txid": txid.hex()}

    @app.get("/ledger/tx/{txid}")
    def status(txid: str) -> dict:
        try:
            key = bytes.fromhex(txid)
        except ValueError:
            raise ValidationError("txid must be hex", field="txid") from None
        with service.lock:
            node = service.node
            tx = node.transaction(key)
            if tx is None:
                raise NotFound(f"unknown transaction {txid}")
            where = node.confirmation(key)
            final = where is not None and where[0] <= node.finalized_height()
        return {
            "transaction": tx.to_dict(),
            "status": "pending" if where is None else ("final" if final else "confirmed"),
            "height": None if where is None else where[0],
            "index": None if where is None else where[1],
            "final": final,
        }

    @app.get("/ledger/doi/{prefix}/{suffix}")
    def by_identifier(prefix: str, suffix: str) -> list[dict]:
        ident = _ident(prefix, suffix)
        with service.lock:
            return [r.to_dict() for r in service.node.lookup_by_identifier(ident)]

    @app.get("/ledger/doi/{prefix}/{suffix}/latest")
    def latest(prefix: str, suffix: str) -> dict:
        ident = _ident(prefix, suffix)
        with service.lock:
            found = service.node.latest_registration(ident)
        if found is None:
            raise NotFound(f"no registration for {ident}")
        return found.to_dict()

    @app.get("/ledger/chain")
    def chain(request: Request) -> dict:
        raw = request.query_params.get("from", "0")
        if not raw.isdigit():
            raise ValidationError("from must be a non-negative integer", field="from")
        with service.lock:
            node = service.node
            blocks = [b.to_dict() for b in node.chain[int(raw):]]
            return {"height": node.height, "finalized_height": node.finalized_height(), "blocks": blocks}

    @app.get("/ledger/validators")
    def validators() -> dict:
        return service.net.validators.to_dict()

    return app


def search_app(db: KeywordDB | None = None) -> FastAPI:
    db = db or KeywordDB()
    app = _base_app("search")
    app.state.db = db

    @app.post("/search")
    def run_search(body: Any = Body(...)) -> list[dict]:
        if isinstance(body, dict) and isinstance(body.get("terms"), list):
            # raw per-database scores, used when this db is one of several in a federated search
            scores = db.score([t for t in body["terms"] if isinstance(t, str)])
            return [
                {"identifier": str(i), "score": str(s), "matched_terms": list(m)}
                for i, (s, m) in sorted(scores.items(), key=lambda kv: str(kv[0]))
            ]
        return [r.to_dict() for r in search(_field(body, "query"), [db])]

    @app.post("/associate", status_code=201)
    def associate(body: Any = Body(...)) -> dict:
        terms = _field(body, "terms", list)
        material = db.associate(
            Identifier.parse(_field(body, "identifier")),
            terms,
            body.get("origin", "user"),
            body.get("author", "") if isinstance(body.get("author", ""), str) else "",
        )
        return material.to_dict()

    return app
