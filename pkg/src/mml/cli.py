"""``mml``: author, publish, revise, verify and look up music metadata; run the services.

Every command prints one JSON document with ``--json`` (always carrying
``command`` and ``ok``), and exits with 1 for validation errors, 2 for
transport errors, 3 when something is not found and 4 on integrity failures.
"""
from __future__ import annotations

import functools
import json
import os
import socket
import sys
import time
from collections.abc import Callable
from pathlib import Path
from typing import Any

import click

from mml import canonical
from mml.clients import LedgerClient, RepositoryClient, ResolverClient, SearchClient
from mml.config import Config, load_config
from mml.errors import (
    DuplicateIdentifier,
    FileError,
    InvariantViolation,
    MMLError,
    NotFound,
    ParseError,
    ProvenanceError,
    SigningKeyError,
    TamperedUnit,
    ValidationError,
)
from mml.ledger.model import RECIPIENT_SELF, build_transaction, verify_chain_bytes
from mml.ledger.scenario import load_scenario
from mml.ledger.sim import run_scenario
from mml.lookup import FETCH_FAILED, fetch_verified, freshness_of, lookup
from mml.metadata import (
    DEFAULT_DENYLIST,
    CreationMetadata,
    Identifier,
    RegistryMetadata,
    WorksPayload,
    check_payload_policy,
    load_document,
)
from mml.search import KeywordDB, search
from mml.signing import (
    PairCheck,
    Verification,
    derive_registry,
    generate_key,
    hash_work,
    load_signing_key,
    new_revision,
    private_key_bytes,
    public_key_bytes,
    sign_creation,
    verify_creation,
    verify_registry,
    verify_registry_pair,
    walk_revision_chain,
)

ROLES = ("repository", "resolver", "ledger-node", "search")
DEFAULT_PORTS = {"resolver": 8701, "repository": 8702, "ledger-node": 8703, "search": 8704}


class Session:
    def __init__(self, config_path: str | None, as_json: bool, flags: dict[str, Any]) -> None:
        self.config_path = config_path
        self.as_json = as_json
        self.flags = flags
        self._config: Config | None = None
        self._repos: dict[str, RepositoryClient] = {}

    @property
    def config(self) -> Config:
        if self._config is None:
            self._config = load_config(self.config_path, overrides=self.flags)
        return self._config

    def override(self, **values: Any) -> None:
        self.flags.update({k: v for k, v in values.items() if v is not None})
        self._config = None

    def signing_key(self):
        path = self.config.key
        if not path:
            raise SigningKeyError("no signing key: pass --key or set key in the config")
        try:
            text = Path(path).read_text().strip()
        except OSError as exc:
            raise FileError(f"cannot read key file {path}: {exc.strerror}") from None
        try:
            return load_signing_key(bytes.fromhex(text))
        except ValueError:
            raise SigningKeyError(f"{path} does not hold a hex ed25519 key") from None

    def resolver(self) -> ResolverClient:
        return ResolverClient(self.config.resolver, self.config.timeout)

    def ledger(self) -> LedgerClient:
        return LedgerClient(self.config.ledger, self.config.timeout)

    def repository(self, endpoint: str) -> RepositoryClient:
        if endpoint not in self._repos:
            self._repos[endpoint] = RepositoryClient(endpoint, self.config.timeout)
        return self._repos[endpoint]

    def first_repository(self) -> str:
        if not self.config.repositories:
            raise ValidationError("no repository configured", field="repositories")
        return self.config.repositories[0]


def emit(session: Session, command: str, data: dict[str, Any], text: str) -> None:
    if session.as_json:
        click.echo(json.dumps({"command": command, "ok": True, **data}, sort_keys=True, ensure_ascii=False))
    elif text:
        click.echo(text)


def fail(session: Session, command: str, exc: MMLError) -> None:
    if session.as_json:
        doc = {"command": command, "ok": False, "exit_code": exc.exit_code, **exc.to_dict()}
        click.echo(json.dumps(doc, sort_keys=True, ensure_ascii=False, default=str))
    else:
        stage = exc.extra.get("stage")
        click.echo(f"error: {exc.kind}{f' at {stage}' if stage else ''}: {exc.message}", err=True)
    sys.exit(exc.exit_code)


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON config file.")
@click.option("--json", "as_json", is_flag=True, help="Print one JSON document.")
@click.option("--key", "key", help="Signing key file (hex).")
@click.option("--prefix", help="Registrant prefix for new identifiers.")
@click.option("--signer", help="Signer id recorded in signatures.")
@click.pass_context
def cli(ctx: click.Context, config_path, as_json, key, prefix, signer) -> None:
    ctx.obj = Session(config_path, as_json, {"key": key, "prefix": prefix, "signer": signer})


def command(name: str, **kwargs: Any) -> Callable:
    """Register a subcommand returning (data, text); errors become exit codes."""

    def wrap(fn: Callable) -> Callable:
        @cli.command(name, **kwargs)
        @click.option("--json", "as_json", is_flag=True, help="Print one JSON document.")
        @click.pass_obj
        @functools.wraps(fn)
        def run(session: Session, as_json: bool, **params: Any) -> None:
            session.as_json = session.as_json or as_json
            try:
                data, text = fn(session, **params)
            except MMLError as exc:
                fail(session, name, exc)
            except OSError as exc:
                fail(session, name, FileError(f"{exc.filename or ''}: {exc.strerror}".strip(": ")))
            else:
                emit(session, name, data, text)

        return run

    return wrap


# files


def _read(path: str | Path, what: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise FileError(f"{what} not found: {path}") from None
    except OSError as exc:
        raise FileError(f"cannot read {what} {path}: {exc.strerror}") from None


def parse_payload(text: str) -> dict[str, str]:
    """``key = value`` lines; blank lines and ``#`` comments are ignored."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ParseError(f"payload line {lineno}: expected key = value", field="payload")
        if key in entries:
            raise ParseError(f"payload line {lineno}: duplicate key {key!r}", field=key)
        entries[key] = value.strip()
    if not entries:
        raise ParseError("payload has no entries", field="payload")
    return entries


def load_unit(path: str | Path) -> CreationMetadata:
    doc = load_document(_read(path, "metadata file"))
    if not isinstance(doc, CreationMetadata):
        raise ValidationError(f"{path} is registry metadata, not a creation unit")
    return doc


def _write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def _out_path(out: str | None, identifier: Identifier) -> Path:
    return Path(out) if out else Path(f"{identifier.suffix}.cmeta")


def _policy(session: Session, payload: WorksPayload) -> None:
    check_payload_policy(payload, frozenset(session.config.denylist) | DEFAULT_DENYLIST)


# keys and authoring


@command("keygen")
@click.argument("out", type=click.Path(dir_okay=False))
@click.option("--force", is_flag=True, help="Overwrite an existing key file.")
def keygen(session: Session, out: str, force: bool):
    """Write a new Ed25519 signing key as hex."""
    path = Path(out)
    if path.exists() and not force:
        raise ValidationError(f"{out} exists; pass --force to overwrite")
    key = generate_key()
    path.parent.mkdir(parents=True, exist_ok=True)
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "w") as fh:
        fh.write(private_key_bytes(key).hex() + "\n")
    os.chmod(path, 0o600)
    public = public_key_bytes(key).hex()
    return {"key_file": str(path), "public_key": public}, f"wrote {path}\npublic key {public}"


@command("author")
@click.argument("payload_file", type=click.Path(dir_okay=False))
@click.argument("work_file", type=click.Path(dir_okay=False))
@click.option("-o", "--out", help="Output .cmeta path (default: <suffix>.cmeta).")
def author(session: Session, payload_file: str, work_file: str, out: str | None):
    """Sign a payload and work file into a new creation-metadata unit."""
    payload = WorksPayload.from_mapping(parse_payload(_read(payload_file, "payload file").decode("utf-8")))
    payload.validate()
    _policy(session, payload)
    work_hash = hash_work(_read(work_file, "work file"))
    key = session.signing_key()
    with session.resolver() as resolver:
        identifier = resolver.mint(session.config.prefix)
    unit = sign_creation(CreationMetadata(identifier, payload, work_hash), key, session.config.signer, int(time.time()))
    path = _out_path(out, identifier)
    _write(path, unit.signed_bytes())
    data = {
        "identifier": str(identifier),
        "file": str(path),
        "work_hash": work_hash.value.hex(),
        "unit_hash": unit.unit_hash().hex(),
    }
    return data, f"{identifier}\nwrote {path}"


@command("revise")
@click.argument("cmeta", type=click.Path(dir_okay=False))
@click.option("--set", "sets", multiple=True, metavar="KEY=VALUE", help="Change or add a payload entry.")
@click.option("--payload", "payload_file", type=click.Path(dir_okay=False), help="Replace the whole payload.")
@click.option("--work", "work_file", type=click.Path(dir_okay=False), help="New work file to hash.")
@click.option("-o", "--out", help="Output .cmeta path (default: <suffix>.cmeta).")
def revise(session: Session, cmeta: str, sets: tuple[str, ...], payload_file: str | None, work_file: str | None, out: str | None):
    """Derive a signed revision of a unit under a fresh identifier."""
    old = load_unit(cmeta)
    if payload_file:
        entries = parse_payload(_read(payload_file, "payload file").decode("utf-8"))
    else:
        entries = old.payload.as_dict()
    for item in sets:
        k, sep, v = item.partition("=")
        if not sep or not k.strip():
            raise ValidationError(f"--set expects KEY=VALUE, got {item!r}", field="set")
        entries[k.strip()] = v.strip()
    payload = old.payload.with_entries(entries)
    payload.validate()
    _policy(session, payload)
    work_hash = hash_work(_read(work_file, "work file")) if work_file else old.work_hash
    key = session.signing_key()
    status = verify_creation(old)
    if status is not Verification.OK:
        raise TamperedUnit(f"{cmeta} does not verify ({status.value})", reason=status.value)
    with session.resolver() as resolver:
        identifier = resolver.mint(session.config.prefix)
    unit = new_revision(old, payload, work_hash, identifier, key, session.config.signer, int(time.time()))
    path = _out_path(out, identifier)
    _write(path, unit.signed_bytes())
    data = {
        "identifier": str(identifier),
        "previous": str(old.identifier),
        "file": str(path),
        "unit_hash": unit.unit_hash().hex(),
    }
    return data, f"{identifier} (revises {old.identifier})\nwrote {path}"


# publication


def _notarized(ledger: LedgerClient, identifier: Identifier, unit_hash: bytes):
    for reg in ledger.lookup_by_identifier(identifier):
        if reg.registration.full_metadata_hash == unit_hash:
            return reg
    return None


@command("publish")
@click.argument("cmeta", type=click.Path(dir_okay=False))
@click.option("--works-id", help="ISRC/ISWC-style works identifier to record on the ledger.")
@click.option("--repository", "repo_url", help="Repository endpoint (default: first configured).")
@click.option("--no-wait", is_flag=True, help="Return once submitted instead of waiting for confirmation.")
def publish(session: Session, cmeta: str, works_id: str | None, repo_url: str | None, no_wait: bool):
    """Store, bind and notarize a unit. Safe to re-run: finished stages are skipped."""
    stages: dict[str, str] = {}
    stage = "verify"
    try:
        unit = load_unit(cmeta)
        status = verify_creation(unit)
        if status is not Verification.OK:
            raise TamperedUnit(f"{cmeta} does not verify ({status.value})", reason=status.value)
        key = session.signing_key()
        endpoint = repo_url or session.first_repository()
        stages[stage] = "ok"

        stage = "store"
        try:
            session.repository(endpoint).put(unit)
            stages[stage] = "stored"
        except DuplicateIdentifier as exc:
            if not exc.identical:
                raise
            stages[stage] = "already-stored"

        stage = "bind"
        with session.resolver() as resolver:
            resolver.bind(unit.identifier, endpoint)
        stages[stage] = "bound"

        stage = "notarize"
        unit_hash = unit.unit_hash()
        with session.ledger() as ledger:
            existing = _notarized(ledger, unit.identifier, unit_hash)
            if existing is not None:
                txid, height, prev_txid = existing.txid, existing.height, existing.registration.prev_txid
                stages[stage] = "already-notarized"
            else:
                prev_txid = None
                if unit.prev_revision is not None:
                    prev = _notarized(ledger, unit.prev_revision.identifier, unit.prev_revision.unit_hash)
                    if prev is None:
                        raise ProvenanceError(f"previous revision {unit.prev_revision.identifier} is not notarized yet")
                    prev_txid = prev.txid
                # timestamp taken from the unit so a retried submission has the same txid
                stamp = unit.signature.timestamp
                rm = derive_registry(unit, works_id, prev_txid, key, session.config.signer, stamp)
                txid = ledger.submit(build_transaction(rm, key, RECIPIENT_SELF))
                height = None
                stages[stage] = "submitted"
                if not no_wait:
                    height = ledger.wait_confirmed(txid, session.config.confirm_timeout)["height"]
                    stages[stage] = "confirmed"
    except MMLError as exc:
        exc.extra.update(stage=stage, stages=stages)
        raise
    data = {
        "identifier": str(unit.identifier),
        "unit_hash": unit_hash.hex(),
        "txid": txid.hex(),
        "height": height,
        "prev_txid": prev_txid.hex() if prev_txid else None,
        "repository": endpoint,
        "stages": stages,
    }
    return data, f"{unit.identifier}\nunit_hash {unit_hash.hex()}\ntxid {txid.hex()}"


# inspection


@command("verify")
@click.argument("file", required=False, type=click.Path(dir_okay=False))
@click.option("--ledger", "check_ledger", is_flag=True, help="Also verify the ledger chain and the unit's notarization.")
def verify(session: Session, file: str | None, check_ledger: bool):
    """Check a unit's signature; with --ledger also the chain and the unit's notarization."""
    if file is None and not check_ledger:
        raise ValidationError("give a file, --ledger, or both")
    data: dict[str, Any] = {}
    lines = []
    if file is not None:
        try:
            doc = load_document(_read(file, "metadata file"))
        except ValidationError as exc:
            raise TamperedUnit(f"{file}: {exc.message}", reason=Verification.MALFORMED.value) from None
        kind = "registry" if isinstance(doc, RegistryMetadata) else "creation"
        status = verify_registry(doc) if kind == "registry" else verify_creation(doc)
        data.update(file=file, kind=kind, identifier=str(doc.identifier), status=status.value)
        if status is not Verification.OK:
            raise TamperedUnit(f"{file} is {status.value}", reason=status.value, file=file)
        lines.append(f"{file}: ok")
    if check_ledger:
        with session.ledger() as ledger:
            bad = verify_chain_bytes(ledger.chain(0), ledger.validators())
            data["chain"] = "ok" if bad is None else {"first_bad_height": bad}
            if bad is not None:
                raise TamperedUnit(f"ledger chain fails at height {bad}", reason="bad-chain", first_bad_height=bad)
            lines.append("ledger chain: ok")
            if file is not None and data["kind"] == "creation":
                regs = ledger.lookup_by_identifier(doc.identifier)
                matching = [r for r in regs if verify_registry_pair(r.registration, doc) is PairCheck.OK]
                data["notarized"] = bool(matching)
                if regs and not matching:
                    raise TamperedUnit("ledger registration does not match this unit", reason="registry-mismatch")
                lines.append("notarized" if matching else "not notarized")
    return data, "\n".join(lines)


@command("resolve")
@click.argument("identifier")
def resolve(session: Session, identifier: str):
    """List the repository locations bound to an identifier."""
    ident = Identifier.parse(identifier)
    with session.resolver() as resolver:
        endpoints = resolver.resolve(ident)
    return {"identifier": str(ident), "endpoints": endpoints}, "\n".join(endpoints)


def _fetch(session: Session, ident: Identifier) -> tuple[CreationMetadata, str]:
    with session.resolver() as resolver:
        endpoints = resolver.resolve(ident)
    unit, source, error, detail = fetch_verified(ident, endpoints, session.repository)
    if unit is None:
        if error == FETCH_FAILED:
            raise NotFound(f"{ident}: {detail}")
        raise TamperedUnit(f"{ident}: {detail}", reason=error)
    return unit, source


@command("fetch")
@click.argument("identifier")
@click.option("-o", "--out", help="Also write the unit to this path.")
def fetch(session: Session, identifier: str, out: str | None):
    """Download a unit, verify it and report whether it is the latest revision."""
    ident = Identifier.parse(identifier)
    unit, source = _fetch(session, ident)
    with session.ledger() as ledger:
        fresh, newer, error, detail = freshness_of(unit, ledger)
    if out:
        _write(Path(out), unit.signed_bytes())
    data = {
        "identifier": str(ident),
        "unit": unit.to_dict(),
        "source": source,
        "freshness": fresh,
        "superseded_by": str(newer) if newer else None,
        "warning": error,
        "detail": detail,
    }
    lines = [canonical.dumps(unit.to_dict()).decode()]
    lines.append(f"superseded-by {newer}" if newer else fresh)
    if error:
        lines.append(f"warning: {error}: {detail}")
    return data, "\n".join(lines)


def _dbs(session: Session, db_files: tuple[str, ...], remote: bool) -> list:
    dbs: list = [SearchClient(url, session.config.timeout) for url in session.config.search] if remote else []
    for path in db_files:
        db = KeywordDB.from_cache(_read(path, "keyword cache"))
        db.db_id = str(path)
        dbs.append(db)
    if not dbs:
        raise ValidationError("no keyword database to search")
    return dbs


@command("search")
@click.argument("query")
@click.option("--db", "db_files", multiple=True, type=click.Path(dir_okay=False), help="Local .kwcache file.")
@click.option("--local-only", is_flag=True, help="Skip the configured remote keyword databases.")
@click.option("--plain", is_flag=True, help="Rank identifiers only; skip fetch and freshness checks.")
def search_cmd(session: Session, query: str, db_files: tuple[str, ...], local_only: bool, plain: bool):
    """Keyword search across local caches and search services."""
    dbs = _dbs(session, db_files, not local_only)
    if plain:
        results = search(query, dbs)
        docs = [r.to_dict() for r in results]
        return {"query": query, "results": docs}, "\n".join(f"{r.score}\t{r.identifier}" for r in results)
    with session.resolver() as resolver, session.ledger() as ledger:
        results = lookup(query, dbs, resolver, session.repository, ledger)
    docs = [r.to_dict() for r in results]
    lines = []
    for r in results:
        state = r.error or (f"superseded-by {r.superseded_by}" if r.superseded_by else r.freshness)
        title = r.unit.payload.get("title", "") if r.unit else ""
        lines.append(f"{r.match.score}\t{r.identifier}\t{state}\t{title}")
    return {"query": query, "results": docs}, "\n".join(lines)


@command("tag")
@click.argument("identifier")
@click.argument("terms", nargs=-1, required=True)
@click.option("--origin", type=click.Choice(["creator", "user"]), default="user")
@click.option("--author", default="", help="Label of whoever is tagging.")
@click.option("--db", "db_file", type=click.Path(dir_okay=False), help="Write to a local .kwcache instead of the search service.")
def tag(session: Session, identifier: str, terms: tuple[str, ...], origin: str, author: str, db_file: str | None):
    """Associate search terms with an identifier."""
    ident = Identifier.parse(identifier)
    if db_file:
        material = KeywordDB(Path(db_file).stem, path=db_file).associate(ident, terms, origin, author).to_dict()
        where = db_file
    else:
        if not session.config.search:
            raise ValidationError("no search service configured", field="search")
        where = session.config.search[0]
        with SearchClient(where, session.config.timeout) as db:
            material = db.associate(ident, terms, origin, author)
    return {"identifier": str(ident), "db": where, "material": material}, f"{ident}: {', '.join(material['terms'])}"


@command("history")
@click.argument("identifier")
def history(session: Session, identifier: str):
    """Every revision of a work, newest first, starting from the latest one on the ledger."""
    ident = Identifier.parse(identifier)
    with session.ledger() as ledger:
        latest = ledger.latest_registration(ident)
    head_id = latest.identifier if latest is not None else ident
    head, _ = _fetch(session, head_id)

    def fetch_one(i: Identifier) -> CreationMetadata | None:
        try:
            return _fetch(session, i)[0]
        except (NotFound, TamperedUnit):
            return None

    chain = walk_revision_chain(head, fetch_one)
    entries = [
        {
            "identifier": str(u.identifier),
            "unit_hash": u.unit_hash().hex(),
            "title": u.payload.get("title"),
            "signed_at": u.signature.timestamp,
        }
        for u in chain.units
    ]
    data = {
        "identifier": str(ident),
        "latest": str(head_id),
        "entries": entries,
        "complete": chain.complete,
        "missing": str(chain.missing) if chain.missing else None,
    }
    lines = [f"{e['identifier']}\t{e['title'] or ''}" for e in entries]
    if not chain.complete:
        lines.append(f"chain broken at {chain.missing} ({chain.break_reason})")
    return data, "\n".join(lines)


# operations


def _port_free(host: str, port: int) -> None:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            s.bind((host, port))
        except OSError as exc:
            raise ValidationError(f"cannot listen on {host}:{port}: {exc.strerror}", field="port") from None


def build_app(role: str, config: Config):
    from mml import api
    from mml.ledger.sim import SimNetwork
    from mml.repository import Repository
    from mml.resolver import Resolver

    data_dir = Path(config.data_dir) if config.data_dir else None
    if role == "resolver":
        return api.resolver_app(Resolver(data_dir / "resolver.json" if data_dir else None))
    if role == "repository":
        return api.repository_app(Repository(data_dir, denylist=config.denylist, peers=config.peers))
    if role == "search":
        return api.search_app(KeywordDB(config.db_id, path=data_dir / f"{config.db_id}.kwcache" if data_dir else None))
    service = api.LedgerService(SimNetwork(config.nodes, seed=config.seed), tick_interval=config.tick_interval)
    return api.ledger_app(service)


@command("serve")
@click.argument("role", type=click.Choice(ROLES))
@click.option("--host")
@click.option("--port", type=int)
@click.option("--data-dir", type=click.Path(file_okay=False))
@click.option("--peer", "peers", multiple=True, help="Repository peer to sync from (repeatable).")
@click.option("--seed", type=int, help="Ledger simulation seed.")
def serve(session: Session, role: str, host, port, data_dir, peers, seed):
    """Run one service role over HTTP."""
    session.override(host=host, port=port, data_dir=data_dir, peers=list(peers) or None, seed=seed)
    config = session.config
    if config.data_dir:
        Path(config.data_dir).mkdir(parents=True, exist_ok=True)
    if config.nodes < 1:
        raise ValidationError("nodes must be at least 1", field="nodes")
    port = config.port or DEFAULT_PORTS[role]
    _port_free(config.host, port)
    app = build_app(role, config)
    import uvicorn

    click.echo(json.dumps({"event": "listening", "role": role, "host": config.host, "port": port}), err=True)
    uvicorn.run(app, host=config.host, port=port, log_level="warning", access_log=False)
    return {"role": role, "host": config.host, "port": port, "stopped": True}, ""


@command("sim")
@click.argument("scenario", type=click.Path(dir_okay=False))
@click.option("--seed", type=int, help="Override the scenario's seed.")
@click.option("-o", "--out", help="Also write the report to this path.")
def sim(session: Session, scenario: str, seed: int | None, out: str | None):
    """Play a ledger scenario file and print the report."""
    net = run_scenario(load_scenario(scenario), seed)
    report = net.report()
    if out:
        _write(Path(out), net.report_bytes())
    inv = report["invariants"]
    healthy = (
        report["converged"]
        and report["liveness"]["within_bound"]
        and inv["safety_violations"] == 0
        and all(v == "ok" for v in inv["verify_chain"].values())
        and all(inv["index_consistent"].values())
        and all(inv["monotonic_time"].values())
    )
    if not healthy:
        raise InvariantViolation("simulation invariant failed", report=report)
    text = "\n".join(f"{n}: height {v['height']} tip {v['tip'][:16]}" for n, v in report["nodes"].items())
    return {"report": report}, f"{text}\nconverged at tick {report['convergence_tick']}"


def main(argv: list[str] | None = None) -> None:
    try:
        cli.main(args=argv, prog_name="mml", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        sys.exit(1)
    except click.ClickException as exc:
        # usage errors are validation failures, not transport errors
        exc.show()
        sys.exit(1)


if __name__ == "__main__":
    main()
