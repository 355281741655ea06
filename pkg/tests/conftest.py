import numpy as np
import pytest

from fedkern.dataio import make_circles, make_vertical, samples_from_arrays


def circles_data(n=400, d=8, q=4, seed=1, **kw):
    X, y = make_circles(n, d=d, seed=seed)
    return make_vertical(samples_from_arrays(X, y), q, seed=seed, **kw)


@pytest.fixture
def small_circles():
    return circles_data(n=200, d=6, q=3)


def write_sparse(path, X, y):
    """Write a dense matrix in the sparse text format via scikit-learn."""
    from sklearn.datasets import dump_svmlight_file

    dump_svmlight_file(np.asarray(X), np.asarray(y), str(path), zero_based=False)
    return path


def breast_cancer_file(path):
    from sklearn.datasets import load_breast_cancer

    X, y = load_breast_cancer(return_X_y=True)
    return write_sparse(path, X, np.where(y == 1, 1, -1))


def digits_file(path):
    """Digits 0-4 vs 5-9 as a binary problem."""
    from sklearn.datasets import load_digits

    X, y = load_digits(return_X_y=True)
    return write_sparse(path, X, np.where(y < 5, 1, -1))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
