"""Deterministic tick-driven network of ledger nodes.

Every tick runs in the same order: scenario actions, message delivery,
block production by the scheduled proposer, voting, then a heartbeat in
which each node announces its chain, pending transactions and vote log to
its peers. Messages
travel over links with a fixed per-link delay drawn once from the seed, and
a message is lost if its link is cut when it is sent or when it arrives.
Nothing reads the wall clock, so a seed plus a schedule fixes every byte.
"""
from __future__ import annotations

import hashlib
import heapq
import random
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

from mml import canonical
from mml.errors import MMLError
from mml.ledger.model import RECIPIENT_SELF, Block, LedgerTransaction, Validators, Vote, build_transaction
from mml.ledger.node import DEFAULT_CAPACITY, DEFAULT_FINALITY_DEPTH, Node
from mml.ledger.scenario import Scenario
from mml.metadata import CreationMetadata, Identifier, RegistryMetadata, WorksPayload
from mml.signing import SigningKeyLike, derive_registry, hash_work, load_signing_key, public_key_bytes, sign_creation

SIM_PREFIX = "10.5555"


def node_key(seed: int, node_id: str) -> bytes:
    return hashlib.sha256(f"mml-sim:{seed}:{node_id}".encode()).digest()


@dataclass(order=True)
class _Message:
    deliver_at: int
    seq: int
    src: str = field(compare=False)
    dst: str = field(compare=False)
    chain: tuple[Block, ...] | None = field(compare=False, default=None)
    txs: tuple[LedgerTransaction, ...] = field(compare=False, default=())
    votes: tuple[Vote, ...] = field(compare=False, default=())


@dataclass
class _Submission:
    txid: bytes
    tick: int
    node: str
    identifier: Identifier
    revised: bool = False


class SimNetwork:
    def __init__(
        self,
        nodes: int | Sequence[str] = 3,
        *,
        seed: int = 0,
        latency: int = 1,
        jitter: int = 0,
        capacity: int = DEFAULT_CAPACITY,
        finality_depth: int = DEFAULT_FINALITY_DEPTH,
    ) -> None:
        ids = [f"n{i}" for i in range(nodes)] if isinstance(nodes, int) else list(nodes)
        if not ids or len(set(ids)) != len(ids):
            raise ValueError("node ids must be non-empty and distinct")
        if latency < 1 or jitter < 0:
            raise ValueError("latency must be >= 1 and jitter >= 0")
        self.seed = seed
        self.rng = random.Random(seed)
        keys = [node_key(seed, i) for i in ids]
        self.validators = Validators(tuple(ids), tuple(public_key_bytes(k) for k in keys))
        self.nodes: dict[str, Node] = {
            i: Node(i, k, self.validators, capacity=capacity, finality_depth=finality_depth) for i, k in zip(ids, keys)
        }
        self.delay = {(a, b): latency + self.rng.randint(0, jitter) for a in ids for b in ids if a != b}
        self.now = 0
        self._queue: list[_Message] = []
        self._seq = 0
        self._group: dict[str, int] | None = None
        self._partition_started: int | None = None
        self.partition_ticks = 0
        self.last_heal: int | None = None
        self.submissions: list[_Submission] = []
        self._counter = 0
        # safety monitor: height -> block hash once any node considers it final
        self._final: dict[int, bytes] = {}
        self._final_seen = {i: 0 for i in ids}
        self.safety_violations: list[dict[str, Any]] = []
        self.convergence_tick: int | None = None

    @property
    def ids(self) -> list[str]:
        return list(self.nodes)

    # links

    def linked(self, a: str, b: str) -> bool:
        return self._group is None or self._group[a] == self._group[b]

    def partition(self, groups: Sequence[Sequence[str]]) -> None:
        """Cut every link between groups; nodes not listed form one more group."""
        group = {n: len(groups) for n in self.nodes}
        for g, members in enumerate(groups):
            for n in members:
                if n not in self.nodes:
                    raise ValueError(f"unknown node {n!r}")
                group[n] = g
        if self._group is None:
            self._partition_started = self.now
        self._group = group

    def heal(self) -> None:
        if self._group is not None:
            self.partition_ticks += self.now - self._partition_started
            self.last_heal = self.now
        self._group = None
        self._partition_started = None

    def _send(self, src: str, dst: str, *, chain=None, txs=(), votes=()) -> None:
        if not self.linked(src, dst):
            return
        self._seq += 1
        msg = _Message(self.now + self.delay[(src, dst)], self._seq, src, dst, chain, tuple(txs), votes)
        heapq.heappush(self._queue, msg)

    def _broadcast(self, src: str, *, chain=None, txs=(), votes=()) -> None:
        for dst in self.nodes:
            if dst != src:
                self._send(src, dst, chain=chain, txs=txs, votes=votes)

    def _deliver_due(self) -> None:
        while self._queue and self._queue[0].deliver_at <= self.now:
            msg = heapq.heappop(self._queue)
            if not self.linked(msg.src, msg.dst):
                continue
            node = self.nodes[msg.dst]
            if msg.votes:
                node.receive_votes(msg.src, msg.votes)
            if msg.chain is not None:
                node.receive_chain(msg.chain)
            for tx in msg.txs:
                try:
                    node.accept_transaction(tx)
                except MMLError:
                    pass

    # transactions

    def submit(
        self,
        rm: RegistryMetadata,
        sender_key: SigningKeyLike,
        recipient: str = RECIPIENT_SELF,
        node: str | None = None,
    ) -> bytes:
        return self.submit_transaction(build_transaction(rm, sender_key, recipient), node)

    def submit_transaction(self, tx: LedgerTransaction, node: str | None = None) -> bytes:
        node_id = node or self.ids[0]
        txid = self.nodes[node_id].accept_transaction(tx)
        self._broadcast(node_id, txs=(tx,))
        if all(s.txid != txid for s in self.submissions):
            self.submissions.append(_Submission(txid, self.now, node_id, tx.payload.identifier))
        return txid

    def synthetic_registration(self, node: str, prev_txid: bytes | None = None) -> RegistryMetadata:
        """A deterministic signed registration issued by ``node``'s key."""
        self._counter += 1
        n = self._counter
        key = load_signing_key(node_key(self.seed, node))
        unit = sign_creation(
            CreationMetadata(
                Identifier(SIM_PREFIX, f"sim-{self.seed}-{n}"),
                WorksPayload.from_mapping({"title": f"synthetic work {n}", "issuer": node}),
                hash_work(f"{self.seed}:{n}".encode()),
            ),
            key,
            node,
            self.now,
        )
        return derive_registry(unit, None, prev_txid, key, node, self.now)

    def submit_synthetic(self, node: str, count: int = 1) -> list[bytes]:
        key = node_key(self.seed, node)
        return [self.submit(self.synthetic_registration(node), key, RECIPIENT_SELF, node) for _ in range(count)]

    def revise_synthetic(self, node: str, count: int = 1) -> list[bytes]:
        """Register revisions pointing at the oldest not-yet-revised submissions."""
        out = []
        for _ in range(count):
            target = next((s for s in self.submissions if not s.revised), None)
            if target is None:
                break
            target.revised = True
            rm = self.synthetic_registration(node, prev_txid=target.txid)
            out.append(self.submit(rm, node_key(self.seed, node), RECIPIENT_SELF, node))
        return out

    # time

    def produce_block(self, tick: int | None = None) -> Block | None:
        tick = self.now if tick is None else tick
        proposer = self.nodes[self.validators.proposer_for(tick)]
        block = proposer.propose(tick)
        if block is not None:
            self._broadcast(proposer.node_id, chain=proposer.snapshot())
        return block

    def step(self, actions: Sequence[Callable[[], Any]] = ()) -> Block | None:
        self.now += 1
        for act in actions:
            act()
        self._deliver_due()
        block = self.produce_block(self.now)
        for node in self.nodes.values():
            node.maybe_vote()
        for node_id, node in self.nodes.items():
            self._broadcast(node_id, chain=node.snapshot(), txs=node.pending(), votes=node.vote_snapshot())
        self._monitor()
        return block

    def run_until_quiescent(self, max_ticks: int = 500) -> bool:
        while self.now < max_ticks:
            if self.converged():
                return True
            self.step()
        return self.converged()

    def converged(self) -> bool:
        tips = {n.tip.block_hash for n in self.nodes.values()}
        return len(tips) == 1 and not any(n.mempool for n in self.nodes.values())

    def _monitor(self) -> None:
        for node_id, node in self.nodes.items():
            fin = node.finalized_height()
            for h in range(self._final_seen[node_id] + 1, fin + 1):
                seen = self._final.setdefault(h, node.chain[h].block_hash)
                if seen != node.chain[h].block_hash:
                    self.safety_violations.append({"node": node_id, "height": h, "tick": self.now})
            self._final_seen[node_id] = max(self._final_seen[node_id], fin)
        if self.converged():
            if self.convergence_tick is None:
                self.convergence_tick = self.now
        else:
            self.convergence_tick = None

    # reporting

    def confirmed_everywhere(self, txid: bytes) -> bool:
        return all(n.confirmation(txid) is not None for n in self.nodes.values())

    @property
    def max_delay(self) -> int:
        return max(self.delay.values(), default=1)

    def liveness_bound(self) -> int:
        """Ticks from the last submission or heal until every node holds every transaction.

        N + D message rounds plus the time spent partitioned; a round is the
        slowest link's delay, so with unit delays this is N + P + D.
        """
        depth = self.nodes[self.ids[0]].finality_depth
        return self.max_delay * (len(self.nodes) + depth) + self.partition_ticks

    def report(self) -> dict[str, Any]:
        last_submit = max((s.tick for s in self.submissions), default=0)
        reference = max(last_submit, self.last_heal or 0)
        confirmed = sum(self.confirmed_everywhere(s.txid) for s in self.submissions)
        within = (
            self.convergence_tick is not None
            and confirmed == len(self.submissions)
            and self.convergence_tick - reference <= self.liveness_bound()
        )
        return {
            "seed": self.seed,
            "ticks": self.now,
            "nodes": {
                node_id: {
                    "height": node.height,
                    "tip": node.tip.block_hash.hex(),
                    "finalized_height": node.finalized_height(),
                    "mempool": len(node.mempool),
                    "chain_sha256": canonical.sha256(node.chain_bytes()).hex(),
                }
                for node_id, node in self.nodes.items()
            },
            "converged": self.convergence_tick is not None,
            "convergence_tick": self.convergence_tick,
            "submitted": len(self.submissions),
            "confirmed_everywhere": confirmed,
            "liveness": {
                "bound": self.liveness_bound(),
                "max_delay": self.max_delay,
                "partition_ticks": self.partition_ticks,
                "reference_tick": reference,
                "within_bound": within,
            },
            "invariants": {
                "verify_chain": {i: ("ok" if n.verify_chain() is None else n.verify_chain()) for i, n in self.nodes.items()},
                "index_consistent": {i: n.index_consistent() for i, n in self.nodes.items()},
                "monotonic_time": {
                    i: all(a.block_time < b.block_time for a, b in zip(n.chain, n.chain[1:])) for i, n in self.nodes.items()
                },
                "safety_violations": len(self.safety_violations),
            },
        }

    def report_bytes(self) -> bytes:
        return canonical.dumps(self.report())


def run_scenario(scenario: Scenario, seed: int | None = None) -> SimNetwork:
    """Play a scenario to quiescence (or ``max_ticks``) and return the network."""
    net = SimNetwork(
        scenario.nodes,
        seed=scenario.seed if seed is None else seed,
        latency=scenario.latency,
        jitter=scenario.jitter,
        capacity=scenario.capacity,
        finality_depth=scenario.finality,
    )
    actions = list(scenario.actions)
    last_action = max((a.tick for a in actions), default=0)
    handlers = {
        "submit": lambda a: net.submit_synthetic(a.node, a.count),
        "revise": lambda a: net.revise_synthetic(a.node, a.count),
        "partition": lambda a: net.partition(a.groups),
        "heal": lambda a: net.heal(),
    }
    while net.now < scenario.max_ticks:
        due = []
        while actions and actions[0].tick <= net.now + 1:
            act = actions.pop(0)
            due.append(lambda act=act: handlers[act.kind](act))
        net.step(due)
        if net.now >= last_action and net.converged():
            break
    return net
