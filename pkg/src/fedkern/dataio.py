"""Sparse data loading, normalization and vertical feature partitioning."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError


@dataclass(frozen=True)
class Sample:
    index: int
    features: dict
    label: float = 0.0


@dataclass(frozen=True)
class FeatureGroupPartition:
    """Disjoint feature groups ``groups[l]`` held by worker ``l``."""

    groups: tuple
    d: int
    worker_of: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        owner = {}
        for ell, g in enumerate(self.groups):
            for k in g:
                if k in owner:
                    raise ConfigError(f"feature {k} assigned to workers {owner[k]} and {ell}")
                if not 0 <= k < self.d:
                    raise ConfigError(f"feature {k} outside 0..{self.d - 1}")
                owner[k] = ell
        missing = sorted(set(range(self.d)) - set(owner))
        if missing:
            raise ConfigError(f"features {missing[:5]} not assigned to any worker")
        object.__setattr__(self, "worker_of", owner)

    @property
    def q(self):
        return len(self.groups)

    @property
    def sizes(self):
        return [len(g) for g in self.groups]

    def columns(self, ell):
        return np.asarray(self.groups[ell], dtype=np.int64)


@dataclass
class VerticalDataset:
    """Train/test samples plus the feature partition across workers.

    Only ``label_holder`` is meant to read labels; :meth:`view` hands a
    worker its own columns and nothing else.
    """

    train: list
    test: list
    partition: FeatureGroupPartition
    label_holder: int = 0

    def __post_init__(self):
        tr = {s.index for s in self.train}
        if tr & {s.index for s in self.test}:
            raise ConfigError("train and test share sample indices")
        self._dense = {}

    @property
    def q(self):
        return self.partition.q

    @property
    def d(self):
        return self.partition.d

    def matrix(self, split="train"):
        if split not in self._dense:
            samples = self.train if split == "train" else self.test
            self._dense[split] = to_dense(samples, self.d)
        return self._dense[split]

    def view(self, ell, split="train"):
        """Worker ``ell``'s local slice: rows of ``split`` restricted to its group."""
        X, _ = self.matrix(split)
        return np.ascontiguousarray(X[:, self.partition.columns(ell)])

    def labels(self, split="train"):
        return self.matrix(split)[1]


def parse_sparse_file(path):
    """Read ``label idx:val idx:val ...`` lines (1-based, strictly ascending indices)."""
    samples = []
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(f"non-numeric label {tokens[0]!r}", lineno) from None
        feats = {}
        prev = 0
        for tok in tokens[1:]:
            idx, sep, val = tok.partition(":")
            if not sep:
                raise ParseError(f"expected idx:val, got {tok!r}", lineno)
            try:
                k = int(idx)
                v = float(val)
            except ValueError:
                raise ParseError(f"non-numeric entry {tok!r}", lineno) from None
            if k < 1:
                raise ParseError(f"feature index {k} must be >= 1", lineno)
            if k <= prev:
                raise ParseError(f"indices not strictly ascending at {tok!r}", lineno)
            prev = k
            feats[k - 1] = v
        samples.append(Sample(len(samples), feats, label))
    return samples


def n_features(samples):
    return 1 + max((max(s.features) for s in samples if s.features), default=-1)


@dataclass(frozen=True)
class MinMaxStats:
    lo: dict
    hi: dict


def fit_minmax(samples):
    """Per-feature min/max over the entries actually present."""
    lo, hi = {}, {}
    for s in samples:
        for k, v in s.features.items():
            if k not in lo:
                lo[k] = hi[k] = v
            else:
                lo[k] = min(lo[k], v)
                hi[k] = max(hi[k], v)
    return MinMaxStats(lo, hi)


def normalize(samples, stats=None):
    """Min-max scale every present entry into [0, 1].

    Constant features map to 0; missing entries stay missing (i.e. 0). When
    ``stats`` come from another split, out-of-range values are clipped.
    """
    if not samples:
        raise ValueError("normalize needs at least one sample")
    if stats is None:
        stats = fit_minmax(samples)
    out = []
    for s in samples:
        feats = {}
        for k, v in s.features.items():
            lo, hi = stats.lo.get(k), stats.hi.get(k)
            if lo is None or hi <= lo:
                feats[k] = 0.0
            else:
                feats[k] = min(1.0, max(0.0, (v - lo) / (hi - lo)))
        out.append(Sample(s.index, feats, s.label))
    return out


def split_train_test(samples, ratio=0.75, seed=0):
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"ratio must lie in (0, 1), got {ratio}")
    n = len(samples)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(ratio * n + 0.5))
    train = [samples[i] for i in sorted(perm[:n_train])]
    test = [samples[i] for i in sorted(perm[n_train:])]
    return train, test


def partition_features(d, q, scheme="contiguous", groups=None):
    """Split feature ids ``0..d-1`` into ``q`` worker groups.

    ``scheme`` is ``"contiguous"`` (blocks of ceil/floor d/q), ``"round-robin"``
    or ``"explicit"`` (``groups`` given verbatim and validated).
    """
    if not 1 <= q <= d:
        raise ConfigError(f"need 1 <= q <= d, got q={q}, d={d}")
    if scheme == "contiguous":
        sizes = [d // q + (1 if ell < d % q else 0) for ell in range(q)]
        starts = np.concatenate([[0], np.cumsum(sizes)])
        gs = [tuple(range(starts[ell], starts[ell + 1])) for ell in range(q)]
    elif scheme == "round-robin":
        gs = [tuple(range(ell, d, q)) for ell in range(q)]
    elif scheme == "explicit":
        if groups is None or len(groups) != q:
            raise ConfigError("explicit scheme needs exactly q groups")
        gs = [tuple(sorted(int(k) for k in g)) for g in groups]
        if any(not g for g in gs):
            raise ConfigError("explicit groups must be nonempty")
    else:
        raise ConfigError(f"unknown partition scheme {scheme!r}")
    return FeatureGroupPartition(tuple(gs), d)


def to_dense(samples, d):
    X = np.zeros((len(samples), d))
    y = np.empty(len(samples))
    for r, s in enumerate(samples):
        for k, v in s.features.items():
            X[r, k] = v
        y[r] = s.label
    return X, y


def samples_from_arrays(X, y, start=0):
    X = np.asarray(X, dtype=float)
    return [
        Sample(start + r, {int(k): float(X[r, k]) for k in np.flatnonzero(X[r])}, float(y[r]))
        for r in range(X.shape[0])
    ]


def make_vertical(samples, q, ratio=0.75, seed=0, scheme="contiguous", d=None, label_holder=0):
    """Split, normalize with train statistics, and partition across ``q`` workers."""
    d = n_features(samples) if d is None else d
    train, test = split_train_test(samples, ratio, seed)
    stats = fit_minmax(train)
    train = normalize(train, stats)
    test = normalize(test, stats) if test else []
    return VerticalDataset(train, test, partition_features(d, q, scheme), label_holder)


def make_circles(n, d=2, noise=0.08, factor=0.5, seed=0):
    """Two concentric circles (inner +1, outer -1) rotated into ``d`` dimensions.

    Extra dimensions carry small uniform noise; a random rotation spreads the
    signal over every coordinate so each worker's slice matters.
    """
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    theta = rng.uniform(0, 2 * np.pi, n)
    r = np.where(y > 0, factor, 1.0)
    X = np.zeros((n, d))
    X[:, 0] = r * np.cos(theta)
    X[:, 1] = r * np.sin(theta)
    X[:, :2] += noise * rng.standard_normal((n, 2))
    if d > 2:
        X[:, 2:] = rng.uniform(-0.1, 0.1, (n, d - 2))
        Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        X = X @ Q
    return X, y


def make_xor(n, d=2, spread=0.35, seed=0):
    """Four Gaussian blobs at (+-1, +-1); label is the sign of x0*x1."""
    rng = np.random.default_rng(seed)
    centers = rng.choice([-1.0, 1.0], size=(n, 2))
    X = np.zeros((n, d))
    X[:, :2] = centers + spread * rng.standard_normal((n, 2))
    if d > 2:
        X[:, 2:] = spread * rng.standard_normal((n, d - 2))
    y = np.where(centers[:, 0] * centers[:, 1] > 0, 1.0, -1.0)
    return X, y
