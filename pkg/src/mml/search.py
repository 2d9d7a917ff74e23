"""Keyword databases and federated search over them.

Ranking: within one database a query term that matches contributes
1 / (number of identifiers carrying that term there), so rare terms weigh
more. Scores from several databases are summed per identifier. Ties go to
the lexically smaller identifier. Scores are exact fractions.
"""
from __future__ import annotations

import threading
import time
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from fractions import Fraction
from typing import Any, Protocol

from mml import canonical
from mml.canonical import require
from mml.errors import EmptyTermsError, ParseError, ValidationError
from mml.metadata import Identifier

ORIGINS = ("creator", "user")
MAX_TERM_CHARS = 64
CACHE_TYPE = "keyword-cache"


def normalize(term: str) -> str:
    return " ".join(term.lower().split())


def normalize_terms(terms: Iterable[str]) -> tuple[str, ...]:
    """Normalize, drop empties, dedupe, sort. Over-long terms are an error."""
    out = set()
    for raw in terms:
        if not isinstance(raw, str):
            raise ValidationError("terms must be strings", field="terms")
        term = normalize(raw)
        if not term:
            continue
        if len(term) > MAX_TERM_CHARS:
            raise ValidationError(f"term longer than {MAX_TERM_CHARS} chars: {term[:20]!r}...", field="terms")
        out.add(term)
    return tuple(sorted(out))


def query_terms(query: str) -> tuple[str, ...]:
    """Whitespace-separated words of the query, plus the whole query as one phrase."""
    words = normalize(query).split()
    terms = {w for w in words if len(w) <= MAX_TERM_CHARS}
    phrase = " ".join(words)
    if len(words) > 1 and len(phrase) <= MAX_TERM_CHARS:
        terms.add(phrase)
    return tuple(sorted(terms))


@dataclass(frozen=True)
class SearchMaterial:
    identifier: Identifier
    terms: tuple[str, ...]
    origin: str
    author_label: str
    added_at: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "identifier": str(self.identifier),
            "terms": list(self.terms),
            "origin": self.origin,
            "author_label": self.author_label,
            "added_at": self.added_at,
        }

    @classmethod
    def from_dict(cls, doc: Any) -> SearchMaterial:
        terms = require(doc, "terms", list, "material")
        normalized = normalize_terms(terms)
        if not normalized or list(normalized) != terms:
            raise ParseError("material terms are not normalized", field="terms")
        origin = require(doc, "origin", str, "material")
        if origin not in ORIGINS:
            raise ParseError(f"unknown origin {origin!r}", field="origin")
        return cls(
            identifier=Identifier.parse(require(doc, "identifier", str, "material")),
            terms=normalized,
            origin=origin,
            author_label=require(doc, "author_label", str, "material"),
            added_at=require(doc, "added_at", int, "material"),
        )


@dataclass(frozen=True)
class SearchResult:
    identifier: Identifier
    score: Fraction
    matched_terms: tuple[str, ...]
    source_dbs: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "identifier": str(self.identifier),
            "score": str(self.score),
            "matched_terms": list(self.matched_terms),
            "source_dbs": list(self.source_dbs),
        }


# per-identifier (score, matched terms) for one database
Scores = dict[Identifier, tuple[Fraction, tuple[str, ...]]]


class Searchable(Protocol):
    db_id: str

    def score(self, terms: Sequence[str]) -> Scores: ...


def build_postings(materials: Iterable[SearchMaterial]) -> dict[str, set[Identifier]]:
    postings: dict[str, set[Identifier]] = {}
    for m in materials:
        for term in m.terms:
            postings.setdefault(term, set()).add(m.identifier)
    return postings


class KeywordDB:
    """Append-only log of search material with an inverted index over it.

    With ``path`` the log is loaded from that ``.kwcache`` file if it exists
    and rewritten after every append.
    """

    def __init__(
        self,
        db_id: str = "local",
        clock: Callable[[], float] = time.time,
        path: str | Path | None = None,
    ) -> None:
        self.db_id = db_id
        self._clock = clock
        self._lock = threading.Lock()
        self._materials: list[SearchMaterial] = []
        # copy-on-write sets: readers never see a set being mutated
        self.postings: dict[str, frozenset[Identifier]] = {}
        self.path = Path(path) if path else None
        if self.path and self.path.exists():
            self.import_cache(self.path.read_bytes())

    @property
    def materials(self) -> tuple[SearchMaterial, ...]:
        return tuple(self._materials)

    def associate(
        self,
        identifier: Identifier,
        terms: Iterable[str],
        origin: str = "user",
        author_label: str = "",
    ) -> SearchMaterial:
        identifier.validate()
        if origin not in ORIGINS:
            raise ValidationError(f"origin must be one of {ORIGINS}", field="origin")
        normalized = normalize_terms(terms)
        if not normalized:
            raise EmptyTermsError("no terms left after normalization", field="terms")
        material = SearchMaterial(identifier, normalized, origin, author_label, int(self._clock()))
        self._append([material])
        return material

    def _append(self, materials: Sequence[SearchMaterial]) -> None:
        with self._lock:
            for m in materials:
                self._materials.append(m)
                for term in m.terms:
                    self.postings[term] = self.postings.get(term, frozenset()) | {m.identifier}
            if self.path:
                tmp = self.path.with_suffix(".tmp")
                tmp.write_bytes(self.export_cache())
                tmp.replace(self.path)

    def rebuild(self) -> dict[str, frozenset[Identifier]]:
        return {t: frozenset(ids) for t, ids in build_postings(self._materials).items()}

    def score(self, terms: Sequence[str]) -> Scores:
        found: dict[Identifier, tuple[Fraction, list[str]]] = {}
        for term in terms:
            ids = self.postings.get(term)
            if not ids:
                continue
            weight = Fraction(1, len(ids))
            for ident in ids:
                score, matched = found.get(ident, (Fraction(0), []))
                found[ident] = (score + weight, matched + [term])
        return {i: (s, tuple(sorted(m))) for i, (s, m) in found.items()}

    def identifiers(self) -> list[Identifier]:
        return sorted({m.identifier for m in self._materials}, key=str)

    # cache files

    def export_cache(self) -> bytes:
        return canonical.dumps(
            {
                "type": CACHE_TYPE,
                "version": 1,
                "db_id": self.db_id,
                "materials": [m.to_dict() for m in self._materials],
            }
        )

    def import_cache(self, data: bytes) -> int:
        """Append every material from a cache file. Returns how many were added."""
        doc = canonical.loads(data)
        if require(doc, "type", str, "cache") != CACHE_TYPE:
            raise ParseError("not a keyword cache", field="type")
        if require(doc, "version", int, "cache") != 1:
            raise ParseError("unsupported keyword cache version", field="version")
        require(doc, "db_id", str, "cache")
        try:
            materials = [SearchMaterial.from_dict(m) for m in require(doc, "materials", list, "cache")]
        except ValidationError as exc:
            raise ParseError(exc.message, field=exc.field) from None
        self._append(materials)
        return len(materials)

    @classmethod
    def from_cache(cls, data: bytes, db_id: str | None = None) -> KeywordDB:
        doc_id = require(canonical.loads(data), "db_id", str, "cache")
        db = cls(db_id or doc_id)
        db.import_cache(data)
        return db


def search(query: str, dbs: Sequence[Searchable]) -> list[SearchResult]:
    terms = query_terms(query)
    if not terms:
        return []
    merged: dict[Identifier, tuple[Fraction, set[str], set[str]]] = {}
    for db in dbs:
        for ident, (score, matched) in db.score(terms).items():
            total, terms_seen, sources = merged.get(ident, (Fraction(0), set(), set()))
            merged[ident] = (total + score, terms_seen | set(matched), sources | {db.db_id})
    results = [
        SearchResult(ident, score, tuple(sorted(matched)), tuple(sorted(sources)))
        for ident, (score, matched, sources) in merged.items()
        if score > 0
    ]
    results.sort(key=lambda r: (-r.score, str(r.identifier)))
    return results
