"""Vertically federated kernel learning with random Fourier features.

Workers hold disjoint feature columns of the same samples. Training runs
doubly stochastic functional gradient steps with a constant step size; each
step needs ``omega^T x + b`` across all workers, which the masked two-tree
protocol in :mod:`fedkern.protocol` computes without any worker revealing
its raw partial inner product.
"""

from .comm import AggregationTree, CommLedger, Network, build_tree, totally_different
from .dataio import (
    FeatureGroupPartition,
    Sample,
    VerticalDataset,
    make_circles,
    make_vertical,
    make_xor,
    normalize,
    parse_sparse_file,
    partition_features,
    samples_from_arrays,
    split_train_test,
)
from .engine import (
    CoefficientShard,
    Federation,
    KernelModel,
    TheoryConstants,
    TrainConfig,
    theory_iteration_bound,
    train_centralized,
    train_federated,
)
from .errors import ConfigError, FedkernError, ParseError, ProtocolError
from .loss import LossSpec, loss, loss_derivative
from .protocol import MaskSeedPolicy, SecureProjection, secure_inner_product, secure_inner_products
from .rff import KernelSpec, approx_kernel, phi

__version__ = "0.1.0"
