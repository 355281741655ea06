"""Smooth convex losses L(u, y) and their derivatives in the prediction u."""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

KINDS = ("square", "logistic", "smooth-hinge")


@dataclass(frozen=True)
class LossSpec:
    kind: str = "logistic"
    # derivative cap reported for square loss, which has no global bound
    square_cap: float = 10.0

    def __post_init__(self):
        kind = self.kind.replace("_", "-")
        if kind == "hinge":
            kind = "smooth-hinge"
        if kind not in KINDS:
            raise ValueError(f"unknown loss {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)

    @property
    def classification(self):
        return self.kind != "square"

    @property
    def derivative_bound(self):
        """M with |L'(u, y)| <= M (a configured cap for square loss)."""
        return self.square_cap if self.kind == "square" else 1.0


def _check_labels(spec, y):
    if spec.classification and not np.all(np.abs(np.asarray(y)) == 1.0):
        raise ValueError(f"{spec.kind} loss needs labels in {{-1, +1}}")


def loss(spec, u, y):
    _check_labels(spec, y)
    u = np.asarray(u, dtype=float)
    if spec.kind == "square":
        out = (u - y) ** 2
    elif spec.kind == "logistic":
        out = np.logaddexp(0.0, -y * u)
    else:
        z = y * u
        out = np.where(z <= 0, 0.5 - z, np.where(z < 1, 0.5 * (1 - z) ** 2, 0.0))
    return out if out.ndim else float(out)


def loss_derivative(spec, u, y):
    """dL/du; the logistic branch uses ``-y * sigmoid(-y u)`` to stay finite."""
    _check_labels(spec, y)
    u = np.asarray(u, dtype=float)
    if spec.kind == "square":
        out = 2.0 * (u - y)
    elif spec.kind == "logistic":
        out = -y * expit(-y * u)
    else:
        z = y * u
        out = np.where(z <= 0, -y, np.where(z < 1, -y * (1 - z), 0.0)) * np.ones_like(u)
    return out if out.ndim else float(out)
