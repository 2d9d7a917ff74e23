"""Canonical text encoding shared by metadata files, ledger records and caches.

Documents are built as ordered dicts by the owning type (fixed field order),
string-keyed maps are sorted by the UTF-8 bytes of their keys, and the result
is rendered as compact JSON text in UTF-8. Binary values are lowercase hex.
"""
from __future__ import annotations

import hashlib
import json
import re
from collections.abc import Iterable, Mapping
from typing import Any

from mml.errors import ParseError

_HEX = re.compile(r"[0-9a-f]*")


def dumps(doc: Any) -> bytes:
    return json.dumps(doc, ensure_ascii=False, separators=(",", ":"), allow_nan=False).encode("utf-8")


def loads(data: bytes | str) -> Any:
    try:
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        return json.loads(data)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"not a canonical document: {exc}") from exc


def sorted_map(items: Iterable[tuple[str, Any]]) -> dict[str, Any]:
    return dict(sorted(items, key=lambda kv: kv[0].encode("utf-8", "surrogatepass")))


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def to_hex(value: bytes | None) -> str | None:
    return None if value is None else value.hex()


def from_hex(value: Any, field: str) -> bytes:
    if not isinstance(value, str) or len(value) % 2 or not _HEX.fullmatch(value):
        raise ParseError(f"{field}: expected lowercase hex", field=field)
    return bytes.fromhex(value)


def require(doc: Any, key: str, kind: type | tuple[type, ...], where: str) -> Any:
    if not isinstance(doc, Mapping):
        raise ParseError(f"{where}: expected an object", field=where)
    if key not in doc:
        raise ParseError(f"{where}.{key}: missing", field=f"{where}.{key}")
    value = doc[key]
    if not isinstance(value, kind) or isinstance(value, bool) and bool not in _as_tuple(kind):
        raise ParseError(f"{where}.{key}: wrong type", field=f"{where}.{key}")
    return value


def _as_tuple(kind: type | tuple[type, ...]) -> tuple[type, ...]:
    return kind if isinstance(kind, tuple) else (kind,)
