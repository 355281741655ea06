"""Random Fourier features drawn from counter-based streams.

A direction ``omega_i`` is a pure function of ``(kernel, seed, i, d)``; its
coordinate ``k`` comes from counter ``(i, k)``. Workers holding only a column
subset regenerate exactly those coordinates.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import _streams

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class KernelSpec:
    family: str = "gaussian-rbf"
    sigma: float = 1.0

    def __post_init__(self):
        fam = {"rbf": "gaussian-rbf", "gaussian": "gaussian-rbf"}.get(self.family, self.family)
        if fam not in ("gaussian-rbf", "laplace"):
            raise ValueError(f"unsupported kernel family {self.family!r}")
        object.__setattr__(self, "family", fam)
        if not self.sigma > 0:
            raise ValueError("kernel bandwidth must be positive")

    def __call__(self, x, xp):
        """Closed-form kernel value(s); rows of ``x`` against rows of ``xp``."""
        diff = np.asarray(x, dtype=float) - np.asarray(xp, dtype=float)
        if self.family == "gaussian-rbf":
            return np.exp(-np.sum(diff**2, axis=-1) / (2 * self.sigma**2))
        # product-Laplace kernel, the one whose spectral measure is i.i.d. Cauchy
        return np.exp(-np.sum(np.abs(diff), axis=-1) / self.sigma)


@dataclass(frozen=True)
class FeatureDirection:
    iteration: int
    omega: np.ndarray


def _coords(spec, key, iterations, columns):
    u = _streams.uniform(key, np.asarray(iterations)[:, None], np.asarray(columns)[None, :])
    if spec.family == "gaussian-rbf":
        z = ndtri(u)
    else:
        z = np.tan(np.pi * (u - 0.5))
    return z / spec.sigma


def directions(spec, seed, iterations, d, columns=None):
    """Rows ``omega_i`` for each ``i`` in ``iterations``, optionally only ``columns``.

    Returns an array of shape ``(len(iterations), len(columns))``.
    """
    key = _streams.derive_key(seed, _streams.OMEGA)
    cols = np.arange(d) if columns is None else np.asarray(columns, dtype=np.int64)
    its = np.atleast_1d(np.asarray(iterations, dtype=np.int64))
    if its.size == 0 or cols.size == 0:
        return np.zeros((its.size, cols.size))
    return _coords(spec, key, its, cols)


def sample_direction(spec, seed, d, iteration=0):
    """The single direction for ``iteration`` under ``seed``."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return FeatureDirection(iteration, directions(spec, seed, [iteration], d)[0])


def phases(seed, iterations):
    """Phase offsets ``b_i`` uniform on [0, 2pi) for a plain feature stream."""
    key = _streams.derive_key(seed, _streams.FEATURE_PHASE)
    return 2 * np.pi * _streams.uniform(key, np.asarray(iterations, dtype=np.int64))


def phi(omega, x, b):
    omega = np.asarray(omega, dtype=float)
    x = np.asarray(x, dtype=float)
    if omega.shape != x.shape:
        raise ValueError(f"dimension mismatch: omega {omega.shape} vs x {x.shape}")
    return SQRT2 * np.cos(omega @ x + b)


def phi_from_projection(z):
    """Feature value from an already-assembled ``omega^T x + b``."""
    return SQRT2 * np.cos(z)


def approx_kernel(spec, x, xp, m, base_seed=0):
    """Monte Carlo kernel estimate ``(1/m) sum_i phi_i(x) phi_i(x')``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    its = np.arange(m)
    W = directions(spec, base_seed, its, x.shape[-1])
    b = phases(base_seed, its)
    return float(np.mean(2.0 * np.cos(W @ x + b) * np.cos(W @ xp + b)))


def feature_map(spec, X, m, base_seed=0):
    """Explicit ``(n, m)`` feature matrix scaled so that ``Z @ Z.T ~ K``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    its = np.arange(m)
    W = directions(spec, base_seed, its, X.shape[1])
    return SQRT2 * np.cos(X @ W.T + phases(base_seed, its)) / np.sqrt(m)


def grid_pairs(d=2, n_points=20, sigma=1.0):
    """``n_points`` pairs ``(0, r u)`` with ``r`` evenly spread over ``[0, 3 sigma]``."""
    u = np.ones(d) / np.sqrt(d)
    r = np.linspace(0.0, 3.0 * sigma, n_points)
    return np.zeros((n_points, d)), r[:, None] * u


def approximation_errors(spec, ms, d=2, n_points=20, seeds=(0,)):
    """Rows ``(m, mean_abs_error, max_abs_error)`` against the closed-form kernel.

    Errors are averaged over ``seeds``; each seed uses the first ``m``
    features of its own stream.
    """
    A, B = grid_pairs(d, n_points, spec.sigma)
    exact = np.array([spec(a, b) for a, b in zip(A, B)])
    rows = []
    for m in ms:
        mean_err = max_err = 0.0
        for s in seeds:
            its = np.arange(m)
            W = directions(spec, s, its, d)
            b = phases(s, its)
            est = np.mean(2.0 * np.cos(A @ W.T + b) * np.cos(B @ W.T + b), axis=1)
            err = np.abs(est - exact)
            mean_err += err.mean() / len(seeds)
            max_err += err.max() / len(seeds)
        rows.append((int(m), float(mean_err), float(max_err)))
    return rows
