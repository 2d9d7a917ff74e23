"""Scenario files for the ledger simulator.

One directive per line, ``#`` starts a comment::

    nodes 3             # number of validators (n0 .. n2)
    seed 7              # overridden by --seed on the command line
    latency 1           # base per-link delivery delay in ticks
    jitter 0            # extra 0..jitter ticks per link, drawn from the seed
    capacity 100        # max transactions per block
    finality 2          # finality depth in blocks
    max_ticks 500       # hard stop

    at 1 submit n0 4            # submit 4 synthetic registrations at node n0
    at 2 revise n1              # register a revision of the oldest unrevised work
    at 3 partition n0 | n1 n2   # cut every link between the groups
    at 8 heal                   # restore all links
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from mml.errors import ParseError

_PARAMS = {"nodes": 3, "seed": 0, "latency": 1, "jitter": 0, "capacity": 100, "finality": 2, "max_ticks": 500}


@dataclass(frozen=True)
class Action:
    tick: int
    kind: str  # submit | revise | partition | heal
    node: str | None = None
    count: int = 1
    groups: tuple[tuple[str, ...], ...] = ()


@dataclass
class Scenario:
    nodes: int = 3
    seed: int = 0
    latency: int = 1
    jitter: int = 0
    capacity: int = 100
    finality: int = 2
    max_ticks: int = 500
    actions: list[Action] = field(default_factory=list)

    @property
    def node_ids(self) -> list[str]:
        return [f"n{i}" for i in range(self.nodes)]


def _int(token: str, lineno: int, what: str, minimum: int = 0) -> int:
    try:
        value = int(token)
    except ValueError:
        raise ParseError(f"line {lineno}: {what} must be an integer, got {token!r}") from None
    if value < minimum:
        raise ParseError(f"line {lineno}: {what} must be >= {minimum}")
    return value


def parse_scenario(text: str) -> Scenario:
    params = dict(_PARAMS)
    raw_actions: list[tuple[int, list[str]]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        tokens = line.split("#", 1)[0].split()
        if not tokens:
            continue
        head = tokens[0]
        if head in params:
            if len(tokens) != 2:
                raise ParseError(f"line {lineno}: expected '{head} <int>'")
            params[head] = _int(tokens[1], lineno, head, 1 if head in ("nodes", "latency", "capacity", "max_ticks") else 0)
        elif head == "at":
            if len(tokens) < 3:
                raise ParseError(f"line {lineno}: expected 'at <tick> <action> ...'")
            raw_actions.append((lineno, tokens[1:]))
        else:
            raise ParseError(f"line {lineno}: unknown directive {head!r}")

    scenario = Scenario(**params)
    ids = set(scenario.node_ids)
    for lineno, (tick_tok, kind, *args) in raw_actions:
        tick = _int(tick_tok, lineno, "tick", 1)
        if kind in ("submit", "revise"):
            if not args or args[0] not in ids:
                raise ParseError(f"line {lineno}: {kind} needs a known node id")
            count = _int(args[1], lineno, "count", 1) if len(args) > 1 else 1
            if len(args) > 2:
                raise ParseError(f"line {lineno}: too many arguments")
            scenario.actions.append(Action(tick, kind, node=args[0], count=count))
        elif kind == "partition":
            groups = tuple(tuple(g.split()) for g in " ".join(args).split("|"))
            members = [n for g in groups for n in g]
            if any(not g for g in groups) or len(groups) < 2:
                raise ParseError(f"line {lineno}: partition needs at least two non-empty groups")
            if any(n not in ids for n in members) or len(set(members)) != len(members):
                raise ParseError(f"line {lineno}: partition groups must be distinct known node ids")
            scenario.actions.append(Action(tick, "partition", groups=groups))
        elif kind == "heal":
            if args:
                raise ParseError(f"line {lineno}: heal takes no arguments")
            scenario.actions.append(Action(tick, "heal"))
        else:
            raise ParseError(f"line {lineno}: unknown action {kind!r}")
    scenario.actions.sort(key=lambda a: a.tick)
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text())
