"""Synchronous in-process transport and binary aggregation trees.

Trees are built by pairing leaves round by round; a value flows up a tree
by having, at every internal node, the aggregator of one child send its
subtree sum to the aggregator of the other. The receiving side is the child
that contains the designated sink (or the left child), so the sink ends up
holding the total after ``ceil(log2 n)`` rounds and ``n - 1`` messages.
"""

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ProtocolError

BYTES_PER_SCALAR = 8


@dataclass(frozen=True, eq=False)
class Node:
    leaves: frozenset
    order: tuple
    left: "Node | None" = None
    right: "Node | None" = None
    height: int = 0

    @classmethod
    def leaf(cls, w):
        return cls(frozenset([w]), (w,))

    @classmethod
    def join(cls, a, b):
        return cls(a.leaves | b.leaves, a.order + b.order, a, b, 1 + max(a.height, b.height))

    @property
    def is_leaf(self):
        return self.left is None

    def internal(self):
        if self.is_leaf:
            return
        yield self
        yield from self.left.internal()
        yield from self.right.internal()

    def shape(self):
        if self.is_leaf:
            return self.order[0]
        return (self.left.shape(), self.right.shape())


@dataclass(frozen=True, eq=False)
class AggregationTree:
    participants: tuple
    root: Node
    seed: "int | None" = None

    @property
    def depth(self):
        return self.root.height

    def internal_leafsets(self):
        return {n.leaves for n in self.root.internal()}

    def shape(self):
        return self.root.shape()

    def __repr__(self):
        return f"AggregationTree({self.shape()!r})"


def _pairing_tree(order):
    level = [Node.leaf(w) for w in order]
    while len(level) > 1:
        nxt = [Node.join(level[k], level[k + 1]) for k in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def build_tree(participants, seed=None):
    """Balanced pairing tree; ``seed`` shuffles the leaf order, ``None`` keeps it."""
    order = list(participants)
    if not order:
        raise ValueError("an aggregation tree needs at least one participant")
    if len(set(order)) != len(order):
        raise ValueError("duplicate participants")
    if seed is not None:
        order = [order[k] for k in np.random.default_rng(seed).permutation(len(order))]
    return AggregationTree(tuple(sorted(participants)), _pairing_tree(order), seed)


def tree_from_shape(shape):
    """Build a tree from nested 2-tuples, e.g. ``((1, 2), (3, 4))``."""

    def rec(s):
        if isinstance(s, tuple):
            a, b = s
            return Node.join(rec(a), rec(b))
        return Node.leaf(s)

    root = rec(shape)
    return AggregationTree(tuple(sorted(root.leaves)), root)


def totally_different(t1, t2):
    """No internal node of ``t1`` has the same (multi-leaf) leaf set as one of ``t2``."""
    return not (t1.internal_leafsets() & t2.internal_leafsets())


def all_trees(participants):
    """Every full binary tree over ``participants`` (unordered children)."""
    items = tuple(sorted(participants))

    def rec(items):
        if len(items) == 1:
            yield Node.leaf(items[0])
            return
        first, rest = items[0], items[1:]
        for r in range(0, len(rest)):
            for extra in itertools.combinations(rest, r):
                left = (first,) + extra
                right = tuple(w for w in rest if w not in extra)
                for a in rec(left):
                    for b in rec(right):
                        yield Node.join(a, b)

    for root in rec(items):
        yield AggregationTree(items, root)


def build_disjoint_tree(reference, participants, seed=None, accept=None, attempts=64):
    """A tree over ``participants`` that is totally different from ``reference``.

    Seeded rejection sampling over pairing trees; for six or fewer
    participants an exhaustive search over all binary trees backs it up.
    ``accept`` adds an extra predicate a candidate must satisfy.
    """
    participants = tuple(participants)
    if not participants:
        raise ValueError("an aggregation tree needs at least one participant")
    if len(participants) == 1:
        return build_tree(participants)

    def ok(t):
        return totally_different(reference, t) and (accept is None or accept(t))

    rng = np.random.default_rng(seed)
    for _ in range(attempts):
        t = build_tree(participants, int(rng.integers(2**63)))
        if ok(t):
            return t
    if len(participants) <= 6:
        good = [t for t in all_trees(participants) if ok(t)]
        if good:
            best = min(t.depth for t in good)
            good = [t for t in good if t.depth == best]
            return good[int(rng.integers(len(good)))]
    raise ProtocolError(
        f"no tree over {sorted(participants)} is totally different from {reference.shape()!r}"
    )


def aggregators(tree, sink=None):
    """For each internal node: (receiver, sender, sender subtree leaf set, height)."""
    out = []

    def rec(node):
        if node.is_leaf:
            return node.order[0]
        a = rec(node.left)
        b = rec(node.right)
        if sink in node.right.leaves:
            a, b, sent = b, a, node.left.leaves
        else:
            sent = node.right.leaves
        out.append((a, b, sent, node.height))
        return a

    top = rec(tree.root)
    return top, out


@dataclass(frozen=True, slots=True)
class Message:
    round: int
    sender: int
    receiver: int
    tag: str
    payload: object
    leaves: frozenset = frozenset()
    context: object = None

    @property
    def n_scalars(self):
        return int(np.size(self.payload))


@dataclass
class CommLedger:
    messages: int = 0
    scalar_payloads: int = 0
    per_round: Counter = field(default_factory=Counter)

    @property
    def bytes(self):
        return BYTES_PER_SCALAR * self.scalar_payloads

    def record(self, msg):
        self.messages += 1
        self.scalar_payloads += msg.n_scalars
        self.per_round[msg.round] += 1

    def rounds(self):
        return sorted(self.per_round.items())

    def snapshot(self):
        return self.messages, self.scalar_payloads


class Network:
    """Round-based synchronous message exchange among a fixed worker set.

    Only the ledger is kept by default. With ``record=True`` every delivered
    message is also appended to its receiver's transcript, which is all a
    semi-honest worker ever gets to see of other parties.
    """

    def __init__(self, workers, record=False):
        self.workers = tuple(workers)
        self.ledger = CommLedger()
        self.round = 0
        self.record = record
        self.transcripts = {w: [] for w in self.workers}
        self.tree_log = []

    def deliver(self, batch):
        """Deliver one synchronous round; ordering is (sender, receiver)."""
        self.round += 1
        for sender, receiver, tag, payload, leaves, context in sorted(batch, key=lambda m: (m[0], m[1])):
            if receiver not in self.transcripts or sender not in self.transcripts:
                raise ValueError(f"unknown endpoint in message {sender}->{receiver}")
            msg = Message(self.round, sender, receiver, tag, payload, leaves, context)
            self.ledger.record(msg)
            if self.record:
                self.transcripts[receiver].append(msg)

    def observed(self, w):
        return self.transcripts[w]


def tree_sum(tree, local_value, net, sink=None, tag="sum", context=None):
    """Sum ``local_value[w]`` over the tree; the total ends at ``sink``.

    Scalars or equal-length vectors both work; vectors travel as one message
    per edge carrying several scalars.
    """
    missing = [w for w in tree.participants if w not in local_value]
    if missing:
        raise ValueError(f"no local value for participants {missing}")
    top, edges = aggregators(tree, sink)
    if sink is not None and top != sink:
        raise ValueError(f"sink {sink} not in tree")
    acc = {w: local_value[w] for w in tree.participants}
    for h in range(1, tree.depth + 1):
        batch = []
        for recv, send, leaves, height in edges:
            if height == h:
                batch.append((send, recv, tag, acc[send], leaves, context))
        for send, recv, _, payload, _, _ in batch:
            acc[recv] = acc[recv] + payload
        net.deliver(batch)
    return acc[top]


def broadcast_reverse(tree, payload, net, source=None, tag="bcast", context=None):
    """Push ``payload`` from ``source`` down the tree (reverse of :func:`tree_sum`)."""
    top, edges = aggregators(tree, source)
    got = {top: payload}
    for h in range(tree.depth, 0, -1):
        batch = [(recv, send, tag, got[recv], frozenset(), context) for recv, send, _, height in edges if height == h]
        for _, dst, _, p, _, _ in batch:
            got[dst] = p
        net.deliver(batch)
    return got


def star_sum(participants, local_value, net, hub=None, tag="star"):
    """Hub receives one message per round from each other worker."""
    participants = list(participants)
    hub = participants[0] if hub is None else hub
    total = local_value[hub]
    for w in participants:
        if w != hub:
            net.deliver([(w, hub, tag, local_value[w], frozenset([w]), None)])
            total = total + local_value[w]
    return total


def ring_sum(participants, local_value, net, tag="ring"):
    """Partial sums travel along a chain; the last worker holds the total."""
    participants = list(participants)
    acc = local_value[participants[0]]
    for a, b in zip(participants, participants[1:]):
        net.deliver([(a, b, tag, acc, frozenset(participants[: participants.index(b)]), None)])
        acc = acc + local_value[b]
    return acc


def tree_rounds(n):
    return math.ceil(math.log2(n)) if n > 1 else 0
