from __future__ import annotations

import hashlib

import pytest

from mml.metadata import CreationMetadata, Identifier, WorksPayload
from mml.signing import hash_work, load_signing_key, sign_creation

PREFIX = "10.5555"


def key(n: int):
    return load_signing_key(hashlib.sha256(f"test-key-{n}".encode()).digest())


def ident(suffix: str) -> Identifier:
    return Identifier(PREFIX, suffix)


def make_unit(suffix="work-1", entries=None, work=b"song bytes", signer=0, timestamp=1_700_000_000, policy=True, **kw):
    entries = entries if entries is not None else {"title": "Blue Hour", "performer": "A. Person", "instrument": "rhodes"}
    unsigned = CreationMetadata(ident(suffix), WorksPayload.from_mapping(entries), hash_work(work), **kw)
    return sign_creation(unsigned, key(signer), f"signer-{signer}", timestamp, enforce_policy=policy)


@pytest.fixture
def unit():
    return make_unit()
