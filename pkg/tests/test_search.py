from __future__ import annotations

import threading
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mml.errors import EmptyTermsError, ParseError, ValidationError
from mml.ledger.sim import SimNetwork
from mml.lookup import lookup
from mml.repository import Repository
from mml.resolver import Resolver
from mml.search import KeywordDB, normalize, query_terms, search
from mml.signing import derive_registry, new_revision

from conftest import ident, key, make_unit

X, Y = ident("x"), ident("y")


def worked_db(db_id="db1"):
    db = KeywordDB(db_id, clock=lambda: 0)
    db.associate(X, ["jazz", "piano"], "creator", "artist")
    db.associate(Y, ["jazz"], "user", "fan")
    return db


def test_normalization_collapse():
    db = KeywordDB()
    db.associate(X, ["Lo-Fi", "  lo-fi "])
    assert db.postings == {"lo-fi": frozenset({X})}


def test_two_authors_both_searchable():
    db = KeywordDB()
    db.associate(X, ["ambient"], "user", "a")
    db.associate(X, ["drone"], "user", "b")
    assert [r.identifier for r in search("ambient", [db])] == [X]
    assert [r.identifier for r in search("drone", [db])] == [X]


def test_empty_terms():
    with pytest.raises(EmptyTermsError):
        KeywordDB().associate(X, ["", "   "])


def test_overlong_term_and_bad_origin():
    with pytest.raises(ValidationError):
        KeywordDB().associate(X, ["a" * 65])
    with pytest.raises(ValidationError):
        KeywordDB().associate(X, ["a"], origin="label")


def test_worked_example_scores():
    # jazz is shared by 2 ids (1/2 each); piano by 1 (1/1)
    results = search("jazz piano", [worked_db()])
    assert [(r.identifier, r.score) for r in results] == [(X, Fraction(3, 2)), (Y, Fraction(1, 2))]
    assert results[0].matched_terms == ("jazz", "piano")


def test_no_match():
    assert search("polka", [worked_db()]) == []
    assert search("   ", [worked_db()]) == []


def test_duplicate_corpora_double_scores():
    single = search("jazz piano", [worked_db()])
    double = search("jazz piano", [worked_db("db1"), worked_db("db2")])
    assert [r.identifier for r in double] == [r.identifier for r in single]
    assert [r.score for r in double] == [2 * r.score for r in single]
    assert double[0].source_dbs == ("db1", "db2")


def test_tie_break_lexical():
    db = KeywordDB()
    for s in ("c", "a", "b"):
        db.associate(ident(s), ["same"])
    assert [r.identifier.suffix for r in search("same", [db])] == ["a", "b", "c"]
    assert all(r.score == Fraction(1, 3) for r in search("same", [db]))


def test_phrase_terms_match_whole_query():
    db = KeywordDB()
    db.associate(X, ["late night"])
    db.associate(Y, ["night"])
    assert query_terms("Late  NIGHT") == ("late", "late night", "night")
    results = search("late night", [db])
    assert [(r.identifier, r.score) for r in results] == [(X, 1), (Y, 1)]


def test_cache_round_trip():
    db = worked_db()
    db.associate(ident("z"), ["piano", "solo"])
    again = KeywordDB.from_cache(db.export_cache())
    assert again.materials == db.materials and again.db_id == "db1"
    for q in ("jazz", "piano", "jazz piano", "solo", "nothing"):
        assert search(q, [again]) == search(q, [db])


def test_cache_truncated():
    with pytest.raises(ParseError):
        KeywordDB().import_cache(worked_db().export_cache()[:-5])


def test_cache_unnormalized_terms():
    data = worked_db().export_cache().replace(b'"jazz"', b'"JAZZ"', 1)
    with pytest.raises(ParseError):
        KeywordDB().import_cache(data)


def test_cache_import_unions():
    db = KeywordDB()
    db.associate(ident("z"), ["solo"])
    db.import_cache(worked_db().export_cache())
    assert len(db.materials) == 3
    assert {r.identifier for r in search("jazz solo", [db])} == {X, Y, ident("z")}


def test_concurrent_appends_and_reads():
    db = KeywordDB()
    errors = []

    def write(n):
        for i in range(200):
            db.associate(ident(f"w{n}-{i}"), ["shared", f"t{i}"])

    def read():
        try:
            for _ in range(200):
                search("shared t1", [db])
        except Exception as exc:  # pragma: no cover - failure path
            errors.append(exc)

    threads = [threading.Thread(target=write, args=(n,)) for n in range(3)] + [threading.Thread(target=read)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors and len(db.materials) == 600
    assert db.rebuild() == db.postings


suffixes = st.text("abcdef", min_size=1, max_size=3)
term_lists = st.lists(st.text("ab ", min_size=0, max_size=6), min_size=1, max_size=4)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(suffixes, term_lists), max_size=15))
def test_rebuild_equivalence(ops):
    db = KeywordDB()
    for suffix, terms in ops:
        try:
            db.associate(ident(suffix), terms)
        except EmptyTermsError:
            pass
    assert db.rebuild() == db.postings


@given(st.text(max_size=30))
def test_normalize_idempotent(text):
    assert normalize(normalize(text)) == normalize(text)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(suffixes, term_lists), max_size=12), suffixes, st.text("cd", min_size=1, max_size=4), st.text("ab ", max_size=8))
def test_adding_unrelated_terms_never_lowers_scores(ops, new_suffix, new_term, query):
    db = KeywordDB()
    for suffix, terms in ops:
        try:
            db.associate(ident(suffix), terms)
        except EmptyTermsError:
            pass
    before = {r.identifier: r.score for r in search(query, [db])}
    db.associate(ident(new_suffix), [new_term])
    after = {r.identifier: r.score for r in search(query, [db])}
    assert all(after.get(i, 0) >= s for i, s in before.items())


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(suffixes, term_lists), max_size=12), st.text("ab ", max_size=8))
def test_search_deterministic(ops, query):
    db = KeywordDB()
    for suffix, terms in ops:
        try:
            db.associate(ident(suffix), terms)
        except EmptyTermsError:
            pass
    assert search(query, [db]) == search(query, [db])
    assert all(r.score > 0 and r.matched_terms for r in search(query, [db]))


# lookup pipeline


class Fixture:
    """Two repositories, a resolver and a three-node ledger wired in-process."""

    def __init__(self):
        self.repos = {"http://repo-a": Repository(name="a"), "http://repo-b": Repository(name="b")}
        self.resolver = Resolver()
        self.net = SimNetwork(3)
        self.db = KeywordDB("tags")

    def connect(self, endpoint):
        return self.repos[endpoint]

    def publish(self, unit, endpoint="http://repo-a", prev_txid=None):
        self.repos[endpoint].put(unit)
        self.resolver.bind(unit.identifier, endpoint)
        rm = derive_registry(unit, None, prev_txid, key(0), "signer-0", 10)
        txid = self.net.submit(rm, key(0), node="n0")
        for _ in range(4):
            self.net.step()
        return txid

    def run(self, query):
        return lookup(query, [self.db], self.resolver, self.connect, self.net.nodes["n1"])


def test_lookup_latest():
    f = Fixture()
    unit = make_unit("song")
    f.publish(unit)
    f.db.associate(unit.identifier, ["ballad"])
    [res] = f.run("ballad")
    assert res.unit == unit and res.freshness == "latest" and res.error is None


def test_lookup_superseded():
    f = Fixture()
    old = make_unit("song")
    txid = f.publish(old)
    new = new_revision(old, old.payload.with_entries({"title": "Blue Hour (remaster)"}), old.work_hash, ident("song-2"), key(0), "signer-0", 20)
    f.publish(new, "http://repo-b", prev_txid=txid)
    f.db.associate(old.identifier, ["ballad"])
    [res] = f.run("ballad")
    assert res.unit == old and res.freshness == "superseded-by" and res.superseded_by == new.identifier


def test_lookup_unregistered_and_missing():
    f = Fixture()
    unit = make_unit("song")
    f.repos["http://repo-a"].put(unit)
    f.resolver.bind(unit.identifier, "http://repo-a")
    f.db.associate(unit.identifier, ["ballad"])
    f.db.associate(ident("ghost"), ["ballad"])
    results = f.run("ballad")
    by_id = {r.identifier: r for r in results}
    assert by_id[unit.identifier].freshness == "unregistered"
    assert by_id[ident("ghost")].error == "fetch-failed" and by_id[ident("ghost")].unit is None


def test_lookup_skips_tampered_copy():
    f = Fixture()
    unit = make_unit("song")

    class Liar:
        def export(self, identifier):
            return unit.signed_bytes().replace(b"Blue Hour", b"Blue Hous")

    f.repos["http://repo-a"] = Liar()
    f.resolver.bind(unit.identifier, "http://repo-a")  # tried first
    f.publish(unit, "http://repo-b")
    f.db.associate(unit.identifier, ["ballad"])
    [res] = f.run("ballad")
    assert res.unit == unit and res.source == "http://repo-b" and res.freshness == "latest"
    f.resolver.unbind(unit.identifier, "http://repo-b")
    [only_liar] = f.run("ballad")
    assert only_liar.unit is None and only_liar.error == "verify-failed"


def test_lookup_keeps_rank_order():
    f = Fixture()
    for i in range(12):
        u = make_unit(f"s{i:02d}")
        f.publish(u) if i % 3 == 0 else f.repos["http://repo-a"].put(u)
        f.resolver.bind(u.identifier, "http://repo-a")
        f.db.associate(u.identifier, ["common"] + (["rare"] if i == 7 else []))
    results = f.run("common rare")
    assert [r.identifier for r in results] == [r.identifier for r in search("common rare", [f.db])]
    assert results[0].identifier == ident("s07")
    assert all(r.unit is not None for r in results)


def test_db_file_persistence(tmp_path):
    path = tmp_path / "tags.kwcache"
    db = KeywordDB("tags", path=path)
    db.associate(X, ["jazz"])
    again = KeywordDB("tags", path=path)
    assert again.materials == db.materials
    assert search("jazz", [again]) == search("jazz", [db])
