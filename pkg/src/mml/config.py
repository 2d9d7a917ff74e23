"""Workspace configuration: a JSON file, then ``MML_*`` environment variables, then flags.

Later sources win. Unknown keys and values of the wrong type are rejected
so a typo never silently falls back to a default.
"""
from __future__ import annotations

import json
import os
from collections.abc import Mapping
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from mml.errors import FileError, ValidationError
from mml.metadata import DEFAULT_DENYLIST

ENV_PREFIX = "MML_"


@dataclass
class Config:
    prefix: str = "10.5555"
    key: str | None = None
    signer: str = "creator"
    resolver: str = "http://127.0.0.1:8701"
    repositories: list[str] = field(default_factory=lambda: ["http://127.0.0.1:8702"])
    ledger: str = "http://127.0.0.1:8703"
    search: list[str] = field(default_factory=lambda: ["http://127.0.0.1:8704"])
    timeout: float = 10.0
    confirm_timeout: float = 30.0
    # serve
    host: str = "127.0.0.1"
    port: int | None = None
    data_dir: str | None = None
    peers: list[str] = field(default_factory=list)
    denylist: list[str] = field(default_factory=lambda: sorted(DEFAULT_DENYLIST))
    nodes: int = 3
    seed: int = 0
    tick_interval: float = 0.05
    db_id: str = "search"


_TYPES: dict[str, type] = {
    "prefix": str,
    "key": str,
    "signer": str,
    "resolver": str,
    "repositories": list,
    "ledger": str,
    "search": list,
    "timeout": float,
    "confirm_timeout": float,
    "host": str,
    "port": int,
    "data_dir": str,
    "peers": list,
    "denylist": list,
    "nodes": int,
    "seed": int,
    "tick_interval": float,
    "db_id": str,
}
_OPTIONAL = {"key", "port", "data_dir"}


def _check(name: str, value: Any, origin: str) -> Any:
    if name not in _TYPES:
        raise ValidationError(f"{origin}: unknown config key {name!r}", field=name)
    kind = _TYPES[name]
    if value is None and name in _OPTIONAL:
        return None
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind is list:
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ValidationError(f"{origin}: {name} must be a list of strings", field=name)
        return list(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ValidationError(f"{origin}: {name} must be {kind.__name__}", field=name)
    return value


def _from_env_text(name: str, text: str, origin: str) -> Any:
    kind = _TYPES[name]
    if kind is list:
        return [v.strip() for v in text.split(",") if v.strip()]
    if kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            raise ValidationError(f"{origin}: {name} must be {kind.__name__}", field=name) from None
    return text


def read_config_file(path: str | Path) -> dict[str, Any]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise FileError(f"cannot read config {p}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {p}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"config {p}: top level must be an object")
    return {k: _check(k, v, str(p)) for k, v in doc.items()}


def env_overrides(environ: Mapping[str, str]) -> dict[str, Any]:
    out = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX) or name == "MML_CONFIG":
            continue
        key = name[len(ENV_PREFIX):].lower()
        if key not in _TYPES:
            raise ValidationError(f"environment: unknown variable {name}", field=key)
        out[key] = _check(key, _from_env_text(key, value, name), name)
    return out


def load_config(
    path: str | Path | None = None,
    environ: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> Config:
    environ = os.environ if environ is None else environ
    path = path or environ.get("MML_CONFIG")
    values: dict[str, Any] = {}
    if path:
        values.update(read_config_file(path))
    values.update(env_overrides(environ))
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = _check(k, v, "flag")
    known = {f.name for f in fields(Config)}
    return Config(**{k: v for k, v in values.items() if k in known})
