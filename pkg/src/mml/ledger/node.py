"""A single ledger node: mempool, chain, fork choice and the identifier index."""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

from mml.ledger.model import (
    RECIPIENT_SELF,
    Block,
    LedgerTransaction,
    Validators,
    Vote,
    build_transaction,
    check_block,
    check_vote,
    genesis_block,
    make_block,
    make_vote,
    validate_transaction,
    verify_chain,
)
from mml.metadata import Identifier, RegistryMetadata
from mml.signing import SigningKeyLike

DEFAULT_CAPACITY = 100
DEFAULT_FINALITY_DEPTH = 2


@dataclass(frozen=True)
class Registration:
    txid: bytes
    height: int
    index: int
    registration: RegistryMetadata

    def to_dict(self) -> dict:
        return {
            "txid": self.txid.hex(),
            "height": self.height,
            "index": self.index,
            "registration": self.registration.to_dict(),
        }


@dataclass(frozen=True)
class LatestRegistration:
    """Outcome of following revision pointers forward from an identifier.

    ``status`` is ``"ok"`` or ``"broken-chain"``; in the latter case
    ``dangling_txid`` names a prev_txid that is not confirmed on this node.
    """

    txid: bytes
    height: int
    index: int
    registration: RegistryMetadata
    status: str = "ok"
    dangling_txid: bytes | None = None

    @property
    def identifier(self) -> Identifier:
        return self.registration.identifier

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "txid": self.txid.hex(),
            "height": self.height,
            "index": self.index,
            "identifier": str(self.identifier),
            "registration": self.registration.to_dict(),
            "dangling_txid": None if self.dangling_txid is None else self.dangling_txid.hex(),
        }


@dataclass
class ChainIndex:
    doi_index: dict[Identifier, list[tuple[bytes, int]]] = field(default_factory=dict)
    positions: dict[bytes, tuple[int, int]] = field(default_factory=dict)
    # prev_txid -> txids of registrations that point back at it
    successors: dict[bytes, list[bytes]] = field(default_factory=dict)
    transactions: dict[bytes, LedgerTransaction] = field(default_factory=dict)

    def add_block(self, block: Block) -> None:
        for i, tx in enumerate(block.transactions):
            rm = tx.payload
            self.doi_index.setdefault(rm.identifier, []).append((tx.txid, block.height))
            self.positions[tx.txid] = (block.height, i)
            self.transactions[tx.txid] = tx
            if rm.prev_txid is not None:
                self.successors.setdefault(rm.prev_txid, []).append(tx.txid)

    @classmethod
    def build(cls, chain: Sequence[Block]) -> ChainIndex:
        index = cls()
        for block in chain:
            index.add_block(block)
        return index


class Node:
    """One validator.

    Fork choice: the chain containing the highest block this node knows to be
    justified, then the longer chain, then the smaller tip hash. A block is
    justified when a quorum of validators voted for it from a justified
    source. A justified block is finalized when a quorum voted for the link
    from it to its direct child. Honest voting never casts two votes for the
    same target height, and never lets one vote's span enclose another's, so
    two conflicting blocks can never both be finalized. A height counts as
    final once it is covered by a finalized block and is at least
    ``finality_depth`` blocks deep.
    """

    def __init__(
        self,
        node_id: str,
        key: SigningKeyLike,
        validators: Validators,
        *,
        capacity: int = DEFAULT_CAPACITY,
        finality_depth: int = DEFAULT_FINALITY_DEPTH,
    ) -> None:
        self.node_id = node_id
        self.key = key
        self.validators = validators
        self.capacity = capacity
        self.finality_depth = finality_depth
        self.chain: list[Block] = [genesis_block()]
        self.mempool: dict[bytes, LedgerTransaction] = {}
        self.index = ChainIndex.build(self.chain)
        self._valid: set[bytes] = {self.chain[0].block_hash}
        self._snapshot: tuple[Block, ...] | None = None
        g = self.chain[0].block_hash
        self.votes: dict[tuple[str, bytes], Vote] = {}
        self.vote_log: list[Vote] = []
        self._vote_snapshot: tuple[Vote, ...] | None = None
        self._peer_mark: dict[str, int] = {}
        self.justified: dict[bytes, int] = {g: 0}
        self.finalized: dict[bytes, int] = {g: 0}
        self._support: dict[bytes, set[str]] = {}
        self._link_support: dict[tuple[bytes, bytes], set[str]] = {}
        self._by_source: dict[bytes, list[Vote]] = {}
        self._last_vote = (0, 0)  # (source height, target height)

    # transactions

    def submit(
        self,
        rm: RegistryMetadata,
        sender_key: SigningKeyLike,
        recipient: str = RECIPIENT_SELF,
    ) -> bytes:
        return self.accept_transaction(build_transaction(rm, sender_key, recipient))

    def accept_transaction(self, tx: LedgerTransaction) -> bytes:
        """Validate and queue a transaction; duplicates and confirmed txs are no-ops."""
        if tx.txid in self.mempool or tx.txid in self.index.positions:
            return tx.txid
        validate_transaction(tx)
        self.mempool[tx.txid] = tx
        return tx.txid

    def pending(self) -> list[LedgerTransaction]:
        return [self.mempool[t] for t in sorted(self.mempool)]

    # blocks

    @property
    def tip(self) -> Block:
        return self.chain[-1]

    @property
    def height(self) -> int:
        return self.tip.height

    def snapshot(self) -> tuple[Block, ...]:
        if self._snapshot is None:
            self._snapshot = tuple(self.chain)
        return self._snapshot

    def propose(self, tick: int) -> Block | None:
        if self.validators.proposer_for(tick) != self.node_id or self.tip.block_time >= tick:
            return None
        batch = self.pending()[: self.capacity]
        if not batch:
            return None
        block = make_block(self.tip, batch, self.node_id, tick, self.key)
        self._valid.add(block.block_hash)
        self._append(block)
        return block

    def _append(self, block: Block) -> None:
        self.chain.append(block)
        self._snapshot = None
        self.index.add_block(block)
        for tx in block.transactions:
            self.mempool.pop(tx.txid, None)

    def _highest_in(self, chain: Sequence[Block], marks: dict[bytes, int]) -> int:
        for i in range(len(chain) - 1, -1, -1):
            if chain[i].block_hash in marks:
                return i
        return 0

    def justified_height(self, chain: Sequence[Block] | None = None) -> int:
        return self._highest_in(self.chain if chain is None else chain, self.justified)

    def checkpoint_height(self) -> int:
        """Height of the highest finalized block on this node's chain."""
        return self._highest_in(self.chain, self.finalized)

    def finalized_height(self) -> int:
        return max(0, min(self.checkpoint_height(), self.height - self.finality_depth))

    def _validate_candidate(self, candidate: Sequence[Block]) -> bool:
        # a cached hash vouches for the block and, through prev hashes, all its ancestors
        start = 0
        for i in range(len(candidate) - 1, -1, -1):
            if candidate[i].block_hash in self._valid and candidate[i].height == i:
                start = i + 1
                break
        if start == 0:
            return False  # genesis must always match
        seen = {tx.txid for b in candidate[:start] for tx in b.transactions}
        for i in range(start, len(candidate)):
            if check_block(candidate[i], i, candidate[i - 1], self.validators, seen, self.capacity) is not None:
                return False
        self._valid.update(b.block_hash for b in candidate[start:])
        return True

    def _prefers(self, candidate: Sequence[Block]) -> bool:
        ours = (self.justified_height(), len(self.chain))
        theirs = (self.justified_height(candidate), len(candidate))
        if theirs != ours:
            return theirs > ours
        return candidate[-1].block_hash < self.tip.block_hash

    def receive_chain(self, candidate: Sequence[Block]) -> bool:
        """Apply fork choice to a chain announced by a peer. Returns True if adopted.

        A chain that does not contain this node's highest finalized block is
        never adopted.
        """
        if not candidate or candidate[-1].block_hash == self.tip.block_hash:
            return False
        fin = self.checkpoint_height()
        if len(candidate) <= fin or candidate[fin].block_hash != self.chain[fin].block_hash:
            return False
        if not self._prefers(candidate) or not self._validate_candidate(candidate):
            return False
        self._adopt(candidate)
        return True

    def _adopt(self, candidate: Sequence[Block]) -> None:
        fork = 0
        while fork < min(len(candidate), len(self.chain)) and candidate[fork].block_hash == self.chain[fork].block_hash:
            fork += 1
        orphaned = [tx for b in self.chain[fork:] for tx in b.transactions]
        self.chain = list(candidate)
        self._snapshot = None
        self.index = ChainIndex.build(self.chain)
        for tx in orphaned:
            if tx.txid not in self.index.positions:
                self.mempool[tx.txid] = tx
        for txid in [t for t in self.mempool if t in self.index.positions]:
            del self.mempool[txid]

    # votes

    def vote_snapshot(self) -> tuple[Vote, ...]:
        if self._vote_snapshot is None:
            self._vote_snapshot = tuple(self.vote_log)
        return self._vote_snapshot

    def maybe_vote(self) -> Vote | None:
        """Vote for the link from the highest justified block on this chain to its child.

        Nodes that share a view cast identical link votes, which is what
        lets justification and finality advance one height per round.
        """
        last_source, last_target = self._last_vote
        src = self.justified_height()
        target = max(src + 1, last_target + 1)
        if target > self.height or src < last_source:
            return None
        vote = make_vote(self.node_id, self.key, self.chain[src], self.chain[target])
        self._last_vote = (src, target)
        self.accept_vote(vote)
        return vote

    def receive_votes(self, peer: str, log: Sequence[Vote]) -> None:
        """Take in a peer's append-only vote log; entries already seen are skipped."""
        mark = self._peer_mark.get(peer, 0)
        for vote in log[mark:]:
            self.accept_vote(vote)
        self._peer_mark[peer] = max(mark, len(log))

    def accept_vote(self, vote: Vote) -> bool:
        if vote.key in self.votes:
            return False
        if vote.voter != self.node_id and not check_vote(vote, self.validators):
            return False
        self.votes[vote.key] = vote
        self.vote_log.append(vote)
        self._vote_snapshot = None
        self._by_source.setdefault(vote.source_hash, []).append(vote)
        if vote.source_hash in self.justified:
            self._count([vote])
        return True

    def _count(self, votes: list[Vote]) -> None:
        # votes whose source is justified; newly justified targets release their dependants
        pending = list(votes)
        while pending:
            vote = pending.pop()
            support = self._support.setdefault(vote.target_hash, set())
            support.add(vote.voter)
            if vote.target_height == vote.source_height + 1:
                link = self._link_support.setdefault((vote.source_hash, vote.target_hash), set())
                link.add(vote.voter)
                if len(link) >= self.validators.quorum:
                    self.finalized[vote.source_hash] = vote.source_height
            if vote.target_hash not in self.justified and len(support) >= self.validators.quorum:
                self.justified[vote.target_hash] = vote.target_height
                pending.extend(self._by_source.get(vote.target_hash, []))

    # queries

    def confirmation(self, txid: bytes) -> tuple[int, int] | None:
        return self.index.positions.get(txid)

    def transaction(self, txid: bytes) -> LedgerTransaction | None:
        return self.index.transactions.get(txid) or self.mempool.get(txid)

    def _registration(self, txid: bytes) -> Registration:
        height, i = self.index.positions[txid]
        return Registration(txid, height, i, self.index.transactions[txid].payload)

    def lookup_by_identifier(self, identifier: Identifier) -> list[Registration]:
        return [self._registration(txid) for txid, _ in self.index.doi_index.get(identifier, [])]

    def latest_registration(self, identifier: Identifier) -> LatestRegistration | None:
        """Follow prev_txid back-references forward from ``identifier``'s registrations.

        The answer is the confirmed registration reachable from them that no
        other confirmed registration points to, latest by (height, position).
        """
        start = [txid for txid, _ in self.index.doi_index.get(identifier, [])]
        if not start:
            return None
        seen: set[bytes] = set()
        queue = list(start)
        leaves: list[bytes] = []
        dangling: bytes | None = None
        while queue:
            txid = queue.pop(0)
            if txid in seen:
                continue
            seen.add(txid)
            prev = self.index.transactions[txid].payload.prev_txid
            if prev is not None and prev not in self.index.positions and dangling is None:
                dangling = prev
            nxt = self.index.successors.get(txid, [])
            if nxt:
                queue.extend(nxt)
            else:
                leaves.append(txid)
        best = max(leaves, key=lambda t: self.index.positions[t])
        reg = self._registration(best)
        return LatestRegistration(
            reg.txid,
            reg.height,
            reg.index,
            reg.registration,
            status="ok" if dangling is None else "broken-chain",
            dangling_txid=dangling,
        )

    def verify_chain(self) -> int | None:
        return verify_chain(self.chain, self.validators)

    def index_consistent(self) -> bool:
        rebuilt = ChainIndex.build(self.chain)
        return (
            rebuilt.doi_index == self.index.doi_index
            and rebuilt.positions == self.index.positions
            and rebuilt.successors == self.index.successors
        )

    def chain_bytes(self) -> bytes:
        return b"\n".join(b.to_bytes() for b in self.chain)

