from __future__ import annotations

import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mml.errors import InvalidTransaction, ParseError, RecipientRuleViolation, RejectedPayload
from mml.ledger.model import (
    MAX_REGISTRY_BYTES,
    RECIPIENT_NULL,
    Block,
    build_transaction,
    genesis_block,
    validate_transaction,
    verify_chain,
    verify_chain_bytes,
)
from mml.ledger.node import ChainIndex
from mml.ledger.scenario import parse_scenario
from mml.ledger.sim import SimNetwork, run_scenario
from mml.signing import derive_registry

from conftest import ident, key, make_unit


def registration(suffix="work-1", signer=0, prev_txid=None, works_id=None):
    return derive_registry(make_unit(suffix, signer=signer), works_id, prev_txid, key(signer), f"signer-{signer}", 5)


def settle(net, ticks=4):
    for _ in range(ticks):
        net.step()


# submit


def test_submit_returns_pending_txid():
    net = SimNetwork(3)
    txid = net.submit(registration(), key(0), node="n0")
    assert txid in net.nodes["n0"].mempool


def test_submit_self_with_other_key():
    with pytest.raises(RecipientRuleViolation):
        SimNetwork(3).submit(registration(signer=0), key(1), node="n0")


def test_submit_null_recipient_any_sender():
    net = SimNetwork(3)
    txid = net.submit(registration(signer=0), key(1), RECIPIENT_NULL, "n0")
    assert net.nodes["n0"].transaction(txid).recipient == "null"


def test_submit_unknown_recipient():
    with pytest.raises(RecipientRuleViolation):
        build_transaction(registration(), key(0), "someone-else")


def test_submit_bad_signature():
    rm = registration()
    with pytest.raises(RejectedPayload):
        SimNetwork(3).submit(replace(rm, works_id="ISRC-TAMPER"), key(0), node="n0")


def test_submit_duplicate_deduplicated():
    net, rm = SimNetwork(3), registration()
    first = net.submit(rm, key(0), node="n0")
    second = net.submit(rm, key(0), node="n0")
    assert first == second and len(net.nodes["n0"].mempool) == 1


def test_oversized_registration_rejected():
    rm = derive_registry(make_unit(), None, None, key(0), "s" * MAX_REGISTRY_BYTES, 5)
    with pytest.raises(RejectedPayload):
        build_transaction(rm, key(0))


def test_forged_txid_rejected():
    tx = build_transaction(registration(), key(0))
    with pytest.raises(InvalidTransaction):
        validate_transaction(replace(tx, txid=bytes(32)))


def test_transaction_round_trip():
    tx = build_transaction(registration(), key(0))
    assert type(tx).from_dict(tx.to_dict()) == tx


# block production


def test_one_tx_reaches_height_one_everywhere():
    net = SimNetwork(3)
    txid = net.submit(registration(), key(0), node="n0")
    net.step()  # tick 1: tx delivered, n1 proposes
    net.step()  # tick 2: block delivered
    for node in net.nodes.values():
        assert node.height == 1
        assert [t.txid for t in node.tip.transactions] == [txid]


def test_empty_mempool_no_block():
    net = SimNetwork(3)
    assert net.produce_block(1) is None
    assert all(n.height == 0 for n in net.nodes.values())


def test_capacity_and_txid_order():
    net = SimNetwork(3, capacity=2)
    txids = [net.submit(registration(f"w{i}"), key(0), node="n1") for i in range(3)]
    block = net.produce_block(1)
    assert [t.txid for t in block.transactions] == sorted(txids)[:2]


SCENARIO_2_BLOCK = """
nodes 3
seed 1
at 1 partition n0 | n1 n2
at 1 submit n0    # a: only n0 has it
at 1 submit n1    # b1
at 2 submit n2    # b2
at 6 heal
"""


def test_partition_heal_hand_replay():
    # Replay (proposer = tick mod 3, every link delay 1):
    #  t1  n1 proposes [b1]; t2 n2 has b1's block, proposes [b2]; t3 n0 proposes [a]
    #  t6  heal; t7 n0 adopts the longer {n1,n2} chain, a re-enters its mempool
    #  t8  a reaches n2, which proposes [a]; t9 everyone holds g, [b1], [b2], [a]
    net = run_scenario(parse_scenario(SCENARIO_2_BLOCK))
    a, b1, b2 = (s.txid for s in net.submissions)
    for node in net.nodes.values():
        shape = [([t.txid for t in b.transactions], b.proposer, b.block_time) for b in node.chain[1:]]
        assert shape == [([b1], "n1", 1), ([b2], "n2", 2), ([a], "n2", 8)]
        assert not node.mempool
    assert net.convergence_tick == 9
    assert net.partition_ticks == 5


def test_minority_block_orphaned():
    net = SimNetwork(3)
    net.partition([["n0"], ["n1", "n2"]])
    a = net.submit(registration("a"), key(0), node="n0")
    settle(net, 3)
    orphan = net.nodes["n0"].chain[1]
    assert [t.txid for t in orphan.transactions] == [a]
    net.submit(registration("b1"), key(0), node="n1")
    net.submit(registration("b2"), key(0), node="n1")
    net.step()
    net.submit(registration("b3"), key(0), node="n2")
    settle(net, 2)
    net.heal()
    assert net.run_until_quiescent(60)
    assert all(orphan.block_hash not in {b.block_hash for b in n.chain} for n in net.nodes.values())
    assert net.confirmed_everywhere(a)


# lookup


def confirmed_net(*rms):
    net = SimNetwork(3)
    txids = [net.submit(rm, key(int(rm.signature.signer_id.split("-")[1])), node="n0") for rm in rms]
    settle(net)
    return net, txids


def test_lookup_single():
    net, [txid] = confirmed_net(registration())
    regs = net.nodes["n2"].lookup_by_identifier(ident("work-1"))
    assert [(r.txid, r.height) for r in regs] == [(txid, 1)]


def test_lookup_unknown():
    net, _ = confirmed_net(registration())
    assert net.nodes["n0"].lookup_by_identifier(ident("nope")) == []


def test_lookup_separates_identifiers():
    net, (ta, tb) = confirmed_net(registration("a"), registration("b"))
    node = net.nodes["n1"]
    assert [r.txid for r in node.lookup_by_identifier(ident("a"))] == [ta]
    assert [r.txid for r in node.lookup_by_identifier(ident("b"))] == [tb]


def test_latest_single():
    net, [txid] = confirmed_net(registration())
    latest = net.nodes["n0"].latest_registration(ident("work-1"))
    assert latest.txid == txid and latest.status == "ok"


def test_latest_follows_revision():
    net, [r1] = confirmed_net(registration("a"))
    r2 = net.submit(registration("b", prev_txid=r1), key(0), node="n2")
    settle(net)
    for node in net.nodes.values():
        latest = node.latest_registration(ident("a"))
        assert latest.txid == r2 and latest.identifier == ident("b")
        assert node.latest_registration(ident("b")).txid == r2


def test_latest_three_deep():
    net, [r1] = confirmed_net(registration("a"))
    r2 = net.submit(registration("b", prev_txid=r1), key(0), node="n0")
    settle(net)
    r3 = net.submit(registration("c", prev_txid=r2), key(0), node="n0")
    settle(net)
    assert net.nodes["n1"].latest_registration(ident("a")).txid == r3


def test_latest_dangling_prev():
    ghost = bytes.fromhex("ab" * 32)
    net, [txid] = confirmed_net(registration("b", prev_txid=ghost))
    latest = net.nodes["n0"].latest_registration(ident("b"))
    assert latest.status == "broken-chain" and latest.dangling_txid == ghost and latest.txid == txid


def test_latest_unknown():
    assert SimNetwork(3).nodes["n0"].latest_registration(ident("a")) is None


# verify_chain


def five_block_net():
    net = SimNetwork(3)
    for i in range(5):
        net.submit(registration(f"w{i}"), key(0), node=net.validators.proposer_for(i + 1))
        net.step()
    settle(net)
    return net


def test_verify_untouched():
    net = five_block_net()
    assert all(n.height == 5 and n.verify_chain() is None for n in net.nodes.values())


def test_verify_flip_in_block_3_payload():
    node = five_block_net().nodes["n0"]
    blocks = [b.to_bytes() for b in node.chain]
    at = blocks[3].index(b'"full_metadata_hash":"') + 30
    blocks[3] = blocks[3][:at] + bytes([blocks[3][at] ^ 1]) + blocks[3][at + 1:]
    assert verify_chain_bytes(blocks, node.validators) == 3
    parsed = [Block.from_bytes(b) for b in blocks]
    assert verify_chain(parsed, node.validators) == 3


def test_verify_genesis_nonzero_prev():
    node = five_block_net().nodes["n0"]
    chain = [replace(genesis_block(), prev_block_hash=b"\x01" * 32)] + node.chain[1:]
    assert verify_chain(chain, node.validators) == 0


def test_verify_reordered_blocks():
    node = five_block_net().nodes["n0"]
    chain = list(node.chain)
    chain[2], chain[3] = chain[3], chain[2]
    assert verify_chain(chain, node.validators) == 2


def test_verify_unparseable_block():
    node = five_block_net().nodes["n0"]
    blocks = [b.to_bytes() for b in node.chain]
    blocks[4] = blocks[4][:-3]
    assert verify_chain_bytes(blocks, node.validators) == 4
    with pytest.raises(ParseError):
        Block.from_bytes(blocks[4])


def test_block_round_trip():
    node = five_block_net().nodes["n0"]
    assert all(Block.from_bytes(b.to_bytes()) == b for b in node.chain)


# scenario parsing


def test_scenario_defaults_and_comments():
    sc = parse_scenario("# nothing\nnodes 4\n\nat 2 submit n3 5  # five\n")
    assert (sc.nodes, sc.seed, sc.finality, sc.capacity) == (4, 0, 2, 100)
    assert sc.actions[0].node == "n3" and sc.actions[0].count == 5


@pytest.mark.parametrize(
    "text, line",
    [
        ("nodes x", 1),
        ("nodes 3\nat 1 submit n9", 2),
        ("at 1 partition n0", 1),
        ("bogus 3", 1),
        ("nodes 2\n\nat 1 partition n0 | n0", 3),
        ("at 0 heal", 1),
        ("at 1 fly n0", 1),
    ],
)
def test_scenario_errors_name_line(text, line):
    with pytest.raises(ParseError, match=f"line {line}:"):
        parse_scenario(text)


# properties

PARTITION_SCENARIO = """
nodes 5
latency 1
jitter 2
at 1 submit n0 3
at 2 submit n3 2
at 3 partition n0 n1 | n2 n3 n4
at 4 submit n1 2
at 5 submit n4 3
at 9 heal
at 10 revise n2 2
"""


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_determinism(seed):
    runs = [run_scenario(parse_scenario(PARTITION_SCENARIO), seed=seed) for _ in range(2)]
    assert runs[0].report_bytes() == runs[1].report_bytes()
    chains = {n.chain_bytes() for r in runs for n in r.nodes.values()}
    assert len(chains) == 1


def test_index_matches_rebuild_after_reorg():
    net = run_scenario(parse_scenario(PARTITION_SCENARIO), seed=3)
    for node in net.nodes.values():
        assert node.index_consistent()
        assert ChainIndex.build(node.chain).doi_index == node.index.doi_index


@st.composite
def scenarios(draw):
    n = draw(st.integers(2, 5))
    ids = [f"n{i}" for i in range(n)]
    lines = [f"nodes {n}", f"latency {draw(st.integers(1, 2))}", f"jitter {draw(st.integers(0, 2))}", "max_ticks 400"]
    for _ in range(draw(st.integers(1, 6))):
        lines.append(f"at {draw(st.integers(1, 12))} submit {draw(st.sampled_from(ids))} {draw(st.integers(1, 3))}")
    tick = 1
    for _ in range(draw(st.integers(0, 3))):
        # partitions may replace each other without an intervening heal
        tick += draw(st.integers(0, 5))
        cut = draw(st.integers(1, n - 1))
        shuffled = draw(st.permutations(ids))
        lines.append(f"at {tick} partition {' '.join(shuffled[:cut])} | {' '.join(shuffled[cut:])}")
        if draw(st.booleans()):
            tick += draw(st.integers(1, 8))
            lines.append(f"at {tick} heal")
    lines.append(f"at {tick + 1} heal")
    return "\n".join(lines), draw(st.integers(0, 2**16))


@settings(max_examples=40, deadline=None)
@given(scenarios())
def test_sim_invariants(case):
    text, seed = case
    net = run_scenario(parse_scenario(text), seed=seed)
    report = net.report()
    inv = report["invariants"]
    assert set(inv["verify_chain"].values()) == {"ok"}
    assert all(inv["index_consistent"].values())
    assert all(inv["monotonic_time"].values())
    assert inv["safety_violations"] == 0
    assert report["converged"]
    assert report["confirmed_everywhere"] == report["submitted"]
    assert report["liveness"]["within_bound"]


def test_flip_localization_sampled():
    rng = random.Random(11)
    net = run_scenario(parse_scenario(PARTITION_SCENARIO), seed=5)
    node = net.nodes["n2"]
    blocks = [b.to_bytes() for b in node.chain]
    for _ in range(20):
        h = rng.randrange(len(blocks))
        pos = rng.randrange(len(blocks[h]))
        bad = list(blocks)
        bad[h] = bad[h][:pos] + bytes([bad[h][pos] ^ (1 << rng.randrange(8))]) + bad[h][pos + 1:]
        assert verify_chain_bytes(bad, node.validators) == h


def test_regression_fork_switching_voters():
    # five nodes, two-tick links: proposers switch forks often
    text = "nodes 5\nlatency 2\nat 1 submit n2 1\nat 5 submit n0 1\nat 1 submit n0 1\nat 4 submit n1 1"
    net = run_scenario(parse_scenario(text), seed=0)
    assert net.safety_violations == []
    assert net.converged()


def test_honest_votes_obey_rules():
    net = run_scenario(parse_scenario(PARTITION_SCENARIO), seed=7)
    log = net.nodes["n0"].vote_log
    by_voter = {}
    for v in log:
        by_voter.setdefault(v.voter, []).append(v)
    assert set(by_voter) == set(net.ids)
    for votes in by_voter.values():
        targets = [v.target_height for v in votes]
        assert len(targets) == len(set(targets))
        for a in votes:
            for b in votes:
                assert not (a.source_height < b.source_height and b.target_height < a.target_height)


def test_finality_advances_under_load():
    text = "nodes 4\n" + "\n".join(f"at {t} submit n{t % 4} 1" for t in range(1, 21))
    net = run_scenario(parse_scenario(text), seed=2)
    for node in net.nodes.values():
        assert node.height >= 10
        assert node.finalized_height() >= node.height - node.finality_depth - 2


def test_minority_never_finalizes_alone():
    net = SimNetwork(5)
    net.partition([["n0", "n1"], ["n2", "n3", "n4"]])
    for i in range(12):
        net.submit(registration(f"m{i}"), key(0), node="n0")
        net.submit(registration(f"x{i}"), key(0), node="n2")
        net.step()
    assert net.nodes["n0"].height > 0 and net.nodes["n0"].finalized_height() == 0
    assert net.nodes["n2"].finalized_height() > 0
