import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedkern.rff import (
    SQRT2,
    KernelSpec,
    approx_kernel,
    approximation_errors,
    directions,
    feature_map,
    phases,
    phi,
    sample_direction,
)

RBF = KernelSpec("rbf", 1.0)


def test_kernel_spec_validation():
    assert KernelSpec("gaussian").family == "gaussian-rbf"
    with pytest.raises(ValueError):
        KernelSpec("poly")
    with pytest.raises(ValueError):
        KernelSpec("rbf", 0.0)


def test_direction_is_deterministic():
    a = sample_direction(RBF, 5, 10).omega
    b = sample_direction(RBF, 5, 10).omega
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_direction(RBF, 6, 10).omega)


def test_column_subsets_match_full_direction():
    full = directions(RBF, 3, [1, 2, 3], 9)
    part = directions(RBF, 3, [1, 2, 3], 9, columns=[7, 0, 4])
    assert np.array_equal(part, full[:, [7, 0, 4]])


def test_rbf_coordinate_moments():
    w = sample_direction(RBF, 0, 10**4).omega
    assert abs(w.mean()) < 3 / math.sqrt(10**4)
    w = sample_direction(KernelSpec("rbf", 2.0), 0, 10**5).omega
    assert abs(w.var() - 0.25) < 0.05 * 0.25


def test_laplace_coordinates_are_cauchy():
    w = sample_direction(KernelSpec("laplace", 2.0), 1, 10**5).omega * 2.0
    q25, q50, q75 = np.quantile(w, [0.25, 0.5, 0.75])
    assert abs(q50) < 0.02 and abs(q75 - 1) < 0.03 and abs(q25 + 1) < 0.03


@pytest.mark.parametrize("z, expect", [(0.0, SQRT2), (math.pi, -SQRT2), (math.pi / 2, 0.0)])
def test_phi_examples(z, expect):
    assert abs(phi(np.array([1.0]), np.array([z]), 0.0) - expect) < 1e-12


def test_phi_dimension_mismatch():
    with pytest.raises(ValueError):
        phi(np.ones(3), np.ones(2), 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(0, 1000))
def test_feature_products_bounded(d, seed):
    rng = np.random.default_rng(seed)
    x, xp = rng.normal(size=(2, d)) * 3
    W = directions(RBF, seed, np.arange(50), d)
    b = phases(seed, np.arange(50))
    prod = 2 * np.cos(W @ x + b) * np.cos(W @ xp + b)
    assert np.all(np.abs(prod) <= 2 + 1e-12)


def test_approx_kernel_m1_is_single_product():
    x, xp = np.array([0.1, 0.2]), np.array([0.3, -0.4])
    w = directions(RBF, 4, [0], 2)[0]
    b = phases(4, [0])[0]
    assert approx_kernel(RBF, x, xp, 1, base_seed=4) == pytest.approx(
        phi(w, x, b) * phi(w, xp, b), abs=1e-15
    )


def test_approx_kernel_self_similarity():
    x = np.array([0.3, 0.7, 0.1])
    hits = sum(abs(approx_kernel(RBF, x, x, 4096, base_seed=s) - 1.0) < 0.05 for s in range(100))
    assert hits >= 95


def test_approx_kernel_half_value():
    sigma = 1.0
    x = np.zeros(2)
    xp = np.array([sigma * math.sqrt(2 * math.log(2)), 0.0])
    assert RBF(x, xp) == pytest.approx(0.5)
    assert abs(approx_kernel(RBF, x, xp, 8192, base_seed=1) - 0.5) < 0.05


def test_laplace_estimator_matches_closed_form():
    spec = KernelSpec("laplace", 1.0)
    x, xp = np.array([0.2, 0.5]), np.array([0.6, 0.1])
    assert abs(approx_kernel(spec, x, xp, 16384, base_seed=2) - spec(x, xp)) < 0.03


def test_error_slope_is_half():
    ms = [2**k for k in range(6, 15)]
    rows = approximation_errors(RBF, ms, seeds=range(5))
    slope = np.polyfit(np.log(ms), np.log([r[1] for r in rows]), 1)[0]
    assert -0.6 <= slope <= -0.4


def test_feature_map_gram_approximates_kernel():
    X = np.random.default_rng(0).random((5, 3))
    Z = feature_map(RBF, X, 8192)
    K = RBF(X[:, None, :], X[None, :, :])
    assert np.abs(Z @ Z.T - K).max() < 0.06
