"""Federated computation of ``omega_j^T x + b`` from vertically split ``x``.

Each worker adds a private uniform mask to its local partial inner product.
The masked partials are summed over one tree (T1); the masks of every worker
except a seeded survivor ``l'`` are summed over a second, totally different
tree (T2) and subtracted at the initiator. What remains is the full inner
product plus the survivor's mask, a uniform phase nobody holds in isolation.

Calls are batched: one protocol run may cover many feature indices ``j`` for
the same sample, in which case each tree edge carries one scalar per ``j``.
"""

import functools
import itertools
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import _streams
from .comm import (
    AggregationTree,
    Network,
    Node,
    aggregators,
    build_disjoint_tree,
    build_tree,
    totally_different,
    tree_sum,
)
from .errors import ProtocolError
from .rff import KernelSpec, directions

TWO_PI = 2 * np.pi
MASK_MODES = ("honest", "none", "constant", "reuse")


@dataclass(frozen=True)
class MaskSeedPolicy:
    """Per-worker mask seeds ``sigma_l(i) = mix(secret_l, i)``.

    ``mode`` other than ``"honest"`` is fault injection for the audit:
    ``"none"`` zeroes every mask, ``"constant"`` uses one fixed offset and
    ``"reuse"`` ignores the iteration so a worker repeats the same mask.
    """

    secrets: tuple
    mode: str = "honest"

    def __post_init__(self):
        if self.mode not in MASK_MODES:
            raise ValueError(f"unknown mask mode {self.mode!r}")

    @classmethod
    def from_seed(cls, seed, q, mode="honest"):
        return cls(tuple(_streams.derive_key(seed, _streams.SECRET, ell) for ell in range(q)), mode)

    def seeds(self, worker, iterations):
        its = np.atleast_1d(np.asarray(iterations, dtype=np.int64))
        if self.mode == "reuse":
            its = np.zeros_like(its)
        return _streams.hash64(self.secrets[worker], its)

    def seed(self, worker, iteration):
        return int(self.seeds(worker, [iteration])[0])

    def masks(self, worker, iterations):
        its = np.atleast_1d(np.asarray(iterations, dtype=np.int64))
        if self.mode == "none":
            return np.zeros(its.shape)
        if self.mode == "constant":
            return np.full(its.shape, 1.0)
        return TWO_PI * _streams.to_unit(_streams.hash64(self.seeds(worker, its), _streams.MASK))


def prune(tree, w):
    """Drop leaf ``w`` from ``tree``, splicing its sibling into the parent slot."""

    def rec(node):
        if node.is_leaf:
            return None if node.order[0] == w else node
        a, b = rec(node.left), rec(node.right)
        if a is None:
            return b
        if b is None:
            return a
        return Node.join(a, b)

    root = rec(tree.root)
    return AggregationTree(tuple(p for p in tree.participants if p != w), root)


def receipts(tree, sink):
    """Leaf sets of the subtree sums each worker receives when summing to ``sink``."""
    _, edges = aggregators(tree, sink)
    out = {}
    for recv, _send, leaves, _h in edges:
        out.setdefault(recv, set()).add(leaves)
    return out


def pair_is_safe(t1, t2, sink):
    """T1/T2 totally different, and no worker receives a sum over the same set in both."""
    if not totally_different(t1, t2):
        return False
    r1, r2 = receipts(t1, sink), receipts(t2, sink)
    return not any(r1.get(w, set()) & r2.get(w, set()) for w in r2)


def linear_leaks(t1, t2, sink, q):
    """Workers that can combine what they receive into an unmasked partial sum.

    Worker ``w`` knows its own partial and mask, masked subtree sums from T1
    and mask-only subtree sums from T2. Writing each as a row over
    (partials, masks), a leak is any combination whose mask part vanishes
    while its partial part involves someone other than ``w``.
    """
    r1, r2 = receipts(t1, sink), receipts(t2, sink)
    leaking = []
    for w in range(q):
        rows = []
        for leaves in r1.get(w, ()):
            r = np.zeros(2 * q)
            idx = list(leaves)
            r[idx] = 1.0
            r[[q + k for k in idx]] = 1.0
            rows.append(r)
        for leaves in r2.get(w, ()):
            r = np.zeros(2 * q)
            r[[q + k for k in leaves]] = 1.0
            rows.append(r)
        if not rows:
            continue
        A = np.array(rows)
        # own mask is known, so its column cannot hide anything
        B = np.delete(A[:, q:], w, axis=1)
        _, s, vt = np.linalg.svd(B.T) if B.size else (None, np.zeros(0), np.eye(len(rows)))
        null = vt[int(np.sum(s > 1e-9)) :]
        if len(null) == 0:
            continue
        P = null @ A[:, :q]
        P[:, w] = 0.0
        if np.abs(P).max() > 1e-9:
            leaking.append(w)
    return leaking


@dataclass(frozen=True)
class SecureProjection:
    """The immutable protocol description shared by all workers."""

    kernel: KernelSpec
    seed: int
    groups: tuple
    masks: MaskSeedPolicy
    tree_mode: str = "honest"
    max_tree_attempts: int = 64
    pool_size: int = 8

    @property
    def q(self):
        return len(self.groups)

    @property
    def d(self):
        return sum(len(g) for g in self.groups)

    def survivor(self, initiator, iterations):
        """The worker ``l'`` whose mask survives, fixed per (initiator, j)."""
        its = np.atleast_1d(np.asarray(iterations, dtype=np.int64))
        if self.q == 1:
            return np.full(its.shape, initiator)
        others = np.array([w for w in range(self.q) if w != initiator])
        key = _streams.derive_key(self.seed, _streams.SURVIVOR)
        idx = np.floor(_streams.uniform(key, its) * len(others)).astype(np.int64)
        return others[np.minimum(idx, len(others) - 1)]

    def surviving_mask(self, initiator, iterations):
        """The phase ``b`` of feature ``j`` (harness/oracle side: needs all secrets)."""
        its = np.atleast_1d(np.asarray(iterations, dtype=np.int64))
        surv = self.survivor(initiator, its)
        out = np.empty(its.shape)
        for w in np.unique(surv):
            sel = surv == w
            out[sel] = self.masks.masks(int(w), its[sel])
        return out

    def local_partial(self, worker, iterations, x_slice):
        W = directions(self.kernel, self.seed, iterations, self.d, self.groups[worker])
        return W @ np.asarray(x_slice, dtype=float)

    def tree_pool(self, initiator, survivor):
        """Pre-validated (T1, T2) pairs for this initiator/survivor combination."""
        return _tree_pool(self, initiator, survivor)

    def choose_trees(self, initiator, survivor, call_seed):
        pool = self.tree_pool(initiator, survivor)
        return pool[int(_streams.hash64(call_seed) % np.uint64(len(pool)))]


@functools.lru_cache(maxsize=4096)
def _tree_pool(protocol, initiator, survivor):
    everyone = tuple(range(protocol.q))
    rest = tuple(w for w in everyone if w != survivor)
    rng = np.random.default_rng(_streams.derive_key(protocol.seed, _streams.TREE, initiator, survivor))
    if protocol.tree_mode == "same-tree":
        trees = [build_tree(everyone, int(rng.integers(2**63))) for _ in range(protocol.pool_size)]
        return tuple((t1, prune(t1, survivor)) for t1 in trees)

    def accept(t1):
        return lambda t: pair_is_safe(t1, t, initiator) and not linear_leaks(t1, t, initiator, protocol.q)

    pool = []
    orders = (tuple(rng.permutation(everyone)) for _ in range(protocol.max_tree_attempts))
    if protocol.q <= 6:
        exhaustive = list(itertools.permutations(everyone))
        rng.shuffle(exhaustive)
        orders = itertools.chain(orders, exhaustive)
    for order in orders:
        t1 = build_tree(order)
        try:
            t2 = build_disjoint_tree(t1, rest, int(rng.integers(2**63)), accept=accept(t1))
        except ProtocolError:
            continue
        pool.append((t1, t2))
        if len(pool) == protocol.pool_size:
            break
    if not pool:
        raise ProtocolError(f"no safe mask-removal tree for q={protocol.q}, survivor {survivor}")
    return tuple(pool)


def secure_inner_products(protocol, initiator, iterations, slices, net, context=None):
    """Batched masked projection for one sample and several feature indices.

    ``slices[w]`` is worker ``w``'s own slice of the sample. Returns
    ``omega_j^T x + b_j`` for each ``j`` with ``b_j`` the survivor's mask.
    """
    its = np.atleast_1d(np.asarray(iterations, dtype=np.int64))
    out = np.empty(its.shape)
    if its.size == 0:
        return out
    pol = protocol.masks
    if protocol.q == 1:
        return protocol.local_partial(initiator, its, slices[initiator]) + pol.masks(initiator, its)
    surv = protocol.survivor(initiator, its)
    for sv in np.unique(surv):
        sel = np.flatnonzero(surv == sv)
        js = its[sel]
        masks = {w: pol.masks(w, js) for w in range(protocol.q)}
        masked = {w: protocol.local_partial(w, js, slices[w]) + masks[w] for w in range(protocol.q)}
        call_seed = _streams.derive_key(protocol.seed, _streams.TREE, net.round, int(sv))
        t1, t2 = protocol.choose_trees(initiator, int(sv), call_seed)
        ctx = (context, js)
        xi = tree_sum(t1, masked, net, sink=initiator, tag="T1", context=ctx)
        bbar = tree_sum(t2, {w: masks[w] for w in t2.participants}, net, sink=initiator, tag="T2", context=ctx)
        net.tree_log.append((t1, t2, initiator, int(sv)))
        out[sel] = xi - bbar
    return out


def secure_inner_product(protocol, initiator, iteration, slices, net, context=None):
    return float(secure_inner_products(protocol, initiator, [iteration], slices, net, context)[0])


def random_protocol(q, d=None, seed=0, kernel=None, mask_mode="honest", tree_mode="honest"):
    """Protocol over a contiguous split of ``d`` features (default ``2 q``)."""
    d = 2 * q if d is None else d
    sizes = [d // q + (1 if ell < d % q else 0) for ell in range(q)]
    starts = np.concatenate([[0], np.cumsum(sizes)])
    groups = tuple(tuple(range(starts[k], starts[k + 1])) for k in range(q))
    return SecureProjection(
        kernel or KernelSpec(), seed, groups, MaskSeedPolicy.from_seed(seed, q, mask_mode), tree_mode
    )


def ks_critical(n, alpha=0.01):
    """Asymptotic one-sample KS critical value ``sqrt(-ln(alpha/2)/2)/sqrt(n)`` (1.63/sqrt(n) at 1%)."""
    return np.sqrt(-np.log(alpha / 2) / 2) / np.sqrt(n)


def surviving_mask_distribution_check(n_trials, q=4, seed=0, mask_mode="honest", initiator=0):
    """KS statistic of ``output - omega^T x`` against Uniform[0, 2pi).

    Runs ``n_trials`` protocol calls on fresh random samples, one feature
    index each, and compares against the omniscient inner product.
    """
    if n_trials < 1000:
        raise ValueError("need at least 1000 trials")
    proto = random_protocol(q, seed=seed, mask_mode=mask_mode)
    rng = np.random.default_rng(seed)
    net = Network(range(q))
    X = rng.random((n_trials, proto.d))
    residuals = np.empty(n_trials)
    for j in range(n_trials):
        slices = {w: X[j, list(proto.groups[w])] for w in range(q)}
        got = secure_inner_product(proto, initiator, j + 1, slices, net)
        true = directions(proto.kernel, proto.seed, [j + 1], proto.d)[0] @ X[j]
        residuals[j] = got - true
    res = stats.kstest(residuals, stats.uniform(loc=0, scale=TWO_PI).cdf)
    return res.statistic
