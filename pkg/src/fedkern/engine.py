"""Federated doubly stochastic kernel training and its centralized twin.

The model after ``t`` steps is ``f(x) = sum_j alpha_j * sqrt(2) cos(omega_j^T x + b_j)``
with one random feature per step. Coefficients live in per-worker shards;
the federated loop only ever moves indices, masked partial sums, aggregated
``f^l(x)`` values and the scale command between workers.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _streams
from .comm import Network, broadcast_reverse, build_tree, tree_sum
from .errors import ConfigError, ProtocolError
from .loss import LossSpec, loss, loss_derivative
from .protocol import MaskSeedPolicy, SecureProjection, secure_inner_products
from .rff import SQRT2, KernelSpec, directions

_T0 = 0x10
_SCALE_FLOOR = 1e-150


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.5
    lam: float = 1e-3
    iterations: int = 1000
    loss: LossSpec = field(default_factory=LossSpec)
    kernel: KernelSpec = field(default_factory=KernelSpec)
    q: "int | None" = None
    seed: int = 0

    def validate(self, allow_boundary=False):
        if not self.lam > 0:
            raise ConfigError("lambda must be positive")
        gl = self.gamma * self.lam
        if not self.gamma > 0 or gl > 1 or (gl == 1 and not allow_boundary):
            raise ConfigError(f"step size must satisfy 0 < gamma < 1/lambda (gamma*lambda = {gl:g})")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.q is not None and self.q < 1:
            raise ConfigError("need at least one worker")
        return self


class CoefficientShard:
    """Coefficients ``alpha_i`` owned by one worker, keyed by iteration index.

    Rescaling is lazy: values are stored divided by a running scale factor
    and materialized on read, so the per-step ``(1 - gamma*lambda)`` update
    costs O(1).
    """

    def __init__(self, owner):
        self.owner = owner
        self._idx = np.empty(0, dtype=np.int64)
        self._raw = np.empty(0)
        self._n = 0
        self._scale = 1.0

    def __len__(self):
        return self._n

    def add(self, i, alpha):
        if self._n == len(self._idx):
            cap = max(16, 2 * self._n)
            self._idx = np.resize(self._idx, cap)
            self._raw = np.resize(self._raw, cap)
        self._idx[self._n] = i
        self._raw[self._n] = alpha / self._scale
        self._n += 1

    def rescale(self, factor):
        if factor == 0.0:
            self._raw[: self._n] = 0.0
            self._scale = 1.0
            return
        self._scale *= factor
        if abs(self._scale) < _SCALE_FLOOR:
            self._raw[: self._n] *= self._scale
            self._scale = 1.0

    @property
    def indices(self):
        return self._idx[: self._n].copy()

    @property
    def values(self):
        return self._raw[: self._n] * self._scale

    def items(self):
        return dict(zip(self.indices.tolist(), self.values.tolist()))


class FeatureCache:
    """Saved ``omega_j^T x + b`` per (sample key, j) on one worker; NaN means absent."""

    def __init__(self):
        self._rows = {}

    def __len__(self):
        return sum(int(np.count_nonzero(~np.isnan(r))) for r in self._rows.values())

    def get(self, key, js):
        row = self._rows.get(key)
        js = np.asarray(js, dtype=np.int64)
        if row is None:
            return np.full(js.shape, np.nan)
        out = np.full(js.shape, np.nan)
        ok = js < len(row)
        out[ok] = row[js[ok]]
        return out

    def put(self, key, js, values):
        js = np.asarray(js, dtype=np.int64)
        if js.size == 0:
            return
        row = self._rows.get(key)
        need = int(js.max()) + 1
        if row is None or len(row) < need:
            new = np.full(max(need, 2 * (0 if row is None else len(row)), 64), np.nan)
            if row is not None:
                new[: len(row)] = row
            row = self._rows[key] = new
        row[js] = values


@dataclass
class Worker:
    wid: int
    columns: np.ndarray
    views: dict
    labels: "dict | None" = None
    shard: CoefficientShard = None
    cache: FeatureCache = field(default_factory=FeatureCache)

    def __post_init__(self):
        if self.shard is None:
            self.shard = CoefficientShard(self.wid)

    def row(self, key):
        split, r = key
        return self.views[split][r]


@dataclass
class RunMetrics:
    rows: list = field(default_factory=list)
    scalars_per_iteration: list = field(default_factory=list)
    messages_per_iteration: list = field(default_factory=list)
    predictions: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    stopped_early: bool = False

    @property
    def iterations(self):
        return len(self.losses)

    def cumulative_scalars(self):
        return np.cumsum(self.scalars_per_iteration)


def sample_indices(seed, n, iterations):
    """Uniform-with-replacement instance choice for each iteration."""
    key = _streams.derive_key(seed, _streams.INSTANCE)
    u = _streams.uniform(key, np.asarray(iterations, dtype=np.int64))
    return np.minimum((u * n).astype(np.int64), n - 1)


def _protocol_for(kernel, seed, groups, mask_mode="honest", tree_mode="honest"):
    return SecureProjection(kernel, seed, tuple(groups), MaskSeedPolicy.from_seed(seed, len(groups), mask_mode), tree_mode)


class Federation:
    """``q`` simulated workers over one :class:`VerticalDataset`.

    Each worker only touches its own column slice; labels sit with the
    active worker. All cross-worker traffic goes through ``self.net``
    (training) or ``self.eval_net`` (test-set evaluation).
    """

    def __init__(self, data, cfg, record=False, mask_mode="honest", tree_mode="honest"):
        cfg.validate()
        if cfg.q is not None and cfg.q != data.q:
            raise ConfigError(f"config asks for {cfg.q} workers but data is split {data.q} ways")
        self.data = data
        self.cfg = cfg
        self.q = data.q
        self.active = data.label_holder
        self.protocol = _protocol_for(cfg.kernel, cfg.seed, data.partition.groups, mask_mode, tree_mode)
        self.net = Network(range(self.q), record=record)
        self.eval_net = Network(range(self.q), record=record)
        self.workers = []
        for ell in range(self.q):
            views = {"train": data.view(ell, "train")}
            if data.test:
                views["test"] = data.view(ell, "test")
            labels = None
            if ell == self.active:
                labels = {"train": data.labels("train")}
                if data.test:
                    labels["test"] = data.labels("test")
            self.workers.append(Worker(ell, data.partition.columns(ell), views, labels))
        self.t = 0
        self.n_train = len(data.train)

    @property
    def shards(self):
        return [w.shard for w in self.workers]

    def slices(self, key):
        return {w.wid: w.row(key) for w in self.workers}

    def local_evaluate(self, ell, key, net=None):
        """``f^l(x) = sum_{i in shard l} alpha_i phi_i(x)``, using saved projections when present."""
        net = self.net if net is None else net
        worker = self.workers[ell]
        if not len(worker.shard):
            return 0.0
        js = worker.shard.indices
        z = worker.cache.get(key, js)
        miss = np.isnan(z)
        if miss.any():
            fresh = secure_inner_products(self.protocol, ell, js[miss], self.slices(key), net, context=key)
            worker.cache.put(key, js[miss], fresh)
            z[miss] = fresh
        return float(worker.shard.values @ (SQRT2 * np.cos(z)))

    def predict(self, key, net=None, tree=None):
        net = self.net if net is None else net
        if tree is None:
            tree = build_tree(range(self.q), _streams.derive_key(self.cfg.seed, _T0, net.round))
        parts = {ell: self.local_evaluate(ell, key, net) for ell in range(self.q)}
        return float(tree_sum(tree, parts, net, sink=self.active, tag="f", context=key))

    def step(self):
        """One iteration of the federated loop."""
        cfg, net = self.cfg, self.net
        self.t += 1
        t = self.t
        act = self.workers[self.active]
        i = int(sample_indices(cfg.seed, self.n_train, [t])[0])
        t0 = build_tree(range(self.q), _streams.derive_key(cfg.seed, _T0, t))
        broadcast_reverse(t0, i, net, source=self.active, tag="index")
        key = ("train", i)
        z = secure_inner_products(self.protocol, self.active, [t], self.slices(key), net, context=key)
        act.cache.put(key, [t], z)
        f = self.predict(key, tree=t0)
        y = act.labels["train"][i]
        alpha = -cfg.gamma * loss_derivative(cfg.loss, f, y) * SQRT2 * math.cos(z[0])
        factor = 1.0 - cfg.gamma * cfg.lam
        for w, _ in broadcast_reverse(t0, factor, net, source=self.active, tag="scale").items():
            self.workers[w].shard.rescale(factor)
        act.shard.add(t, alpha)
        return f, loss(cfg.loss, f, y)

    def evaluate_test_error(self):
        if not self.data.test:
            raise ValueError("no test samples to evaluate")
        if not self.cfg.loss.classification:
            raise ValueError("test error is defined for classification losses only")
        y = self.workers[self.active].labels["test"]
        wrong = 0
        for r in range(len(y)):
            f = self.predict(("test", r), net=self.eval_net)
            wrong += (1.0 if f >= 0 else -1.0) != y[r]
        return wrong / len(y)

    def train(self, iterations=None, eval_every=0, time_budget=None):
        iterations = self.cfg.iterations if iterations is None else iterations
        metrics = RunMetrics()
        elapsed = 0.0
        window = []
        for _ in range(iterations):
            before = self.net.ledger.snapshot()
            t_start = time.perf_counter()
            try:
                f, ell = self.step()
            except ProtocolError as exc:
                raise ProtocolError(str(exc), iteration=self.t) from exc
            elapsed += time.perf_counter() - t_start
            after = self.net.ledger.snapshot()
            metrics.messages_per_iteration.append(after[0] - before[0])
            metrics.scalars_per_iteration.append(after[1] - before[1])
            metrics.predictions.append(f)
            metrics.losses.append(ell)
            window.append(ell)
            if eval_every and self.t % eval_every == 0:
                err = self.evaluate_test_error() if self.data.test and self.cfg.loss.classification else float("nan")
                metrics.rows.append(
                    {
                        "iter": self.t,
                        "time_ms": 1000.0 * elapsed,
                        "train_loss": float(np.mean(window)),
                        "test_error": err,
                        "messages": self.net.ledger.messages,
                        "bytes": self.net.ledger.bytes,
                    }
                )
                window = []
            if time_budget is not None and elapsed >= time_budget:
                metrics.stopped_early = self.t < iterations
                break
        metrics.train_seconds = elapsed
        return metrics

    def coefficients(self):
        """All coefficients as ``{iteration: alpha}`` (harness view)."""
        out = {}
        for s in self.shards:
            out.update(s.items())
        return out


def train_federated(data, cfg, eval_every=0, time_budget=None, **kw):
    fed = Federation(data, cfg, **kw)
    metrics = fed.train(cfg.iterations, eval_every, time_budget)
    return fed.shards, metrics, fed


def local_evaluate(fed, ell, key):
    return fed.local_evaluate(ell, key)


def predict(fed, key):
    return fed.predict(key)


def evaluate_test_error(fed):
    return fed.evaluate_test_error()


@dataclass
class KernelModel:
    kernel: KernelSpec
    omegas: np.ndarray
    phases: np.ndarray
    alphas: np.ndarray
    iterations: np.ndarray

    def decision_function(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(X.shape[0])
        for s in range(0, len(self.alphas), 4096):
            Z = X @ self.omegas[s : s + 4096].T + self.phases[s : s + 4096]
            out += (SQRT2 * np.cos(Z)) @ self.alphas[s : s + 4096]
        return out

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, 1.0, -1.0)

    def error(self, X, y):
        return float(np.mean(self.predict(X) != np.asarray(y)))

    @property
    def l1_norm(self):
        return float(np.abs(self.alphas).sum())


def train_centralized(data, cfg, iterations=None, snapshots=(), mask_mode="honest", eval_every=0, time_budget=None):
    """Single-process run of the same update rule on the full feature matrix.

    Consumes the federated run's seed streams: ``omega_i`` from seed ``i``,
    the phase ``b_i`` as the surviving worker mask regenerated from worker
    secrets, and the same instance sequence. Predictions on the training set
    (and, when evaluating, the test set) are maintained incrementally, so
    each step costs O(N d).

    Returns a :class:`KernelModel`; with ``snapshots`` also a dict of models
    at those iteration counts. ``model.rows`` holds metric rows in the
    federated layout (no messages are exchanged, so those columns are 0).
    """
    cfg.validate(allow_boundary=True)
    T = cfg.iterations if iterations is None else iterations
    X, y = data.matrix("train")
    n, d = X.shape
    proto = _protocol_for(cfg.kernel, cfg.seed, data.partition.groups, mask_mode)
    its = np.arange(1, T + 1)
    idx = sample_indices(cfg.seed, n, its)
    factor = 1.0 - cfg.gamma * cfg.lam
    shard = CoefficientShard(data.label_holder)
    F = np.zeros(n)
    track_test = bool(eval_every) and bool(data.test) and cfg.loss.classification
    if track_test:
        Xt, yt = data.matrix("test")
        G = np.zeros(len(yt))
    snaps, rows = {}, []
    want = set(snapshots)
    omegas = np.empty((T, d))
    phases = np.empty(T)
    for s in range(0, T, 2048):
        omegas[s : s + 2048] = directions(cfg.kernel, cfg.seed, its[s : s + 2048], d)
        phases[s : s + 2048] = proto.surviving_mask(data.label_holder, its[s : s + 2048])
    preds = np.empty(T)
    window = []
    elapsed = 0.0
    done = T
    for k in range(T):
        t_start = time.perf_counter()
        i = idx[k]
        f = F[i]
        preds[k] = f
        z = omegas[k] @ X[i] + phases[k]
        alpha = -cfg.gamma * loss_derivative(cfg.loss, f, y[i]) * SQRT2 * math.cos(z)
        shard.rescale(factor)
        shard.add(k + 1, alpha)
        F *= factor
        F += alpha * SQRT2 * np.cos(X @ omegas[k] + phases[k])
        if track_test:
            G *= factor
            G += alpha * SQRT2 * np.cos(Xt @ omegas[k] + phases[k])
        elapsed += time.perf_counter() - t_start
        if eval_every:
            window.append(loss(cfg.loss, f, y[i]))
            if (k + 1) % eval_every == 0:
                err = float(np.mean(np.where(G >= 0, 1.0, -1.0) != yt)) if track_test else float("nan")
                rows.append(
                    {"iter": k + 1, "time_ms": 1000.0 * elapsed, "train_loss": float(np.mean(window)),
                     "test_error": err, "messages": 0, "bytes": 0}
                )
                window = []
        if k + 1 in want:
            snaps[k + 1] = KernelModel(cfg.kernel, omegas[: k + 1], phases[: k + 1], shard.values, its[: k + 1])
        if time_budget is not None and elapsed >= time_budget:
            done = k + 1
            break
    model = KernelModel(cfg.kernel, omegas[:done], phases[:done], shard.values, its[:done])
    model.train_predictions = preds[:done]
    model.rows = rows
    model.train_seconds = elapsed
    if snapshots:
        return model, snaps
    return model


def closed_form_coefficients(gamma, lam, derivs, feats):
    """Closed form ``alpha_i^t = -gamma (1 - gamma lam)^(t-i) L'_i phi_i`` for all i <= t."""
    derivs = np.asarray(derivs, dtype=float)
    t = len(derivs)
    powers = np.array([math.prod([1.0 - gamma * lam] * (t - i)) for i in range(1, t + 1)])
    return -gamma * powers * derivs * np.asarray(feats, dtype=float)


@dataclass(frozen=True)
class TheoryConstants:
    kappa: float = 1.0
    phi: float = 2.0
    M: float = 1.0
    L_lip: float = 1.0
    epsilon: float = 0.1
    vartheta: float = 1.0

    def __post_init__(self):
        if not 0 < self.vartheta <= 1:
            raise ValueError("vartheta must lie in (0, 1]")
        if min(self.kappa, self.phi, self.M, self.epsilon) <= 0:
            raise ValueError("theory constants must be positive")


def theory_terms(tc, lam):
    """(B, G1, G2) of the constant-step convergence bound."""
    g1 = 2 * tc.kappa * tc.M**2 / lam
    g2 = math.sqrt(tc.kappa) * tc.M * (math.sqrt(tc.kappa) + math.sqrt(tc.phi)) / (2 * lam**1.5)
    B = (math.sqrt(g2**2 + g1) + g2) ** 2
    return B, g1, g2


def theory_iteration_bound(tc, lam, e1=1.0):
    """Prescribed step size and the smallest ``t`` the bound guarantees.

    ``e1`` stands in for the unknown initial distance to the optimum, so the
    returned ``t_min`` is only an upper-bound estimate.
    """
    if lam <= 0 or e1 <= 0:
        raise ValueError("lambda and e1 must be positive")
    B, _, _ = theory_terms(tc, lam)
    gamma = tc.epsilon * tc.vartheta / (8 * tc.kappa * B)
    t = 8 * tc.kappa * B * math.log(8 * tc.kappa * e1 / tc.epsilon) / (tc.vartheta * tc.epsilon * lam)
    return gamma, max(1, math.ceil(t))


def step_size_ceiling(tc, lam):
    """Upper limit on a constant step for the bound to apply."""
    return min(1 / lam, tc.epsilon * lam / (4 * tc.M**2 * (math.sqrt(tc.kappa) + math.sqrt(tc.phi)) ** 2))
