"""Protein-level interaction network: readout, GIN encoder, pair classifier.

Protein embeddings are produced once by the frozen encoder/codebook
(mean over residues of [code vector || encoder output]) and used as fixed
node features on the interaction graph.  A small GIN stack refines them
and a Hadamard-product classifier scores each protein pair against the
interaction types.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeError
from .tensor import (
    Parameter,
    Tensor,
    gather,
    matmul,
    mean,
    mul,
    relu,
    segment_sum,
    softplus,
    sub,
    tensor_sum,
    tile_rows,
)

N_INTERACTION_TYPES = 7


@dataclass
class PpiGraph:
    """Proteins as nodes; each entry is an unordered pair with a multi-label target."""

    protein_ids: list[str]
    node_features: np.ndarray      # (N, D) frozen embeddings
    edge_index: np.ndarray         # (E, 2) protein indices, one row per unordered pair
    labels: np.ndarray             # (E, C) binary interaction types

    def __post_init__(self):
        self.node_features = np.asarray(self.node_features, dtype=np.float64)
        self.edge_index = np.asarray(self.edge_index, dtype=np.int64).reshape(-1, 2)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        n = len(self.protein_ids)
        if self.node_features.shape[0] != n:
            raise DataError(f"ppi graph: {n} ids but {self.node_features.shape[0]} feature rows")
        if np.any(self.edge_index[:, 0] == self.edge_index[:, 1]):
            raise DataError("ppi graph: self interactions are not allowed")
        if self.edge_index.size and self.edge_index.max() >= n:
            raise DataError("ppi graph: protein index out of range")
        keys = {frozenset(pair) for pair in self.edge_index.tolist()}
        if len(keys) != len(self.edge_index):
            raise DataError("ppi graph: duplicate unordered pair")
        if self.labels.shape != (len(self.edge_index), N_INTERACTION_TYPES):
            raise DataError(f"ppi graph: labels shape {self.labels.shape} does not match "
                            f"({len(self.edge_index)}, {N_INTERACTION_TYPES})")
        if len(self.labels) and self.labels.sum(axis=1).min() < 1:
            raise DataError("ppi graph: every entry needs at least one positive type")

    @property
    def n_proteins(self) -> int:
        return len(self.protein_ids)

    @property
    def n_entries(self) -> int:
        return len(self.edge_index)


def readout(e_codes: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Mean over residues of the concatenated [code vector || encoder output]."""
    e_codes = np.asarray(e_codes, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if e_codes.ndim != 2 or e_codes.shape[0] == 0:
        raise DataError("readout: need at least one residue")
    if e_codes.shape[0] != h.shape[0]:
        raise ShapeError(f"readout: row counts {e_codes.shape[0]} and {h.shape[0]} differ")
    return np.concatenate([e_codes, h], axis=1).mean(axis=0)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class GinLayer:
    """(1 + eps) * self + neighbor sum, then a linear map."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, name: str):
        self.eps = Parameter(np.asarray(0.0), f"{name}.eps")
        self.g = Parameter(_glorot(rng, d_in, d_out), f"{name}.g")

    def parameters(self) -> list[Parameter]:
        return [self.eps, self.g]

    def __call__(self, z: Tensor, src: np.ndarray, dst: np.ndarray, n: int) -> Tensor:
        agg = segment_sum(gather(z, src), dst, n)
        self_term = mul(z, self.eps + 1.0)
        return matmul(self_term + agg, self.g)


class GinStack:
    def __init__(self, d_in: int, d_hidden: int, n_layers: int,
                 rng: np.random.Generator, name: str = "gin"):
        dims = [d_in] + [d_hidden] * n_layers
        self.layers = [GinLayer(dims[i], dims[i + 1], rng, f"{name}.{i}") for i in range(n_layers)]

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, features: Tensor, edge_index: np.ndarray) -> Tensor:
        # interaction edges are undirected: aggregate both directions
        src = np.concatenate([edge_index[:, 0], edge_index[:, 1]])
        dst = np.concatenate([edge_index[:, 1], edge_index[:, 0]])
        n = features.data.shape[0]
        z = features
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            z = layer(z, src, dst, n)
            if i < last:
                z = relu(z)
        return z

    __call__ = forward


class PairClassifier:
    """Hadamard product of the two protein embeddings followed by a dense layer."""

    def __init__(self, d_in: int, n_classes: int, rng: np.random.Generator, name: str = "fc"):
        self.weight = Parameter(_glorot(rng, d_in, n_classes), f"{name}.weight")
        self.bias = Parameter(np.zeros(n_classes), f"{name}.bias")

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]

    def pair_logits(self, z_i: Tensor, z_j: Tensor) -> Tensor:
        if z_i.data.shape != z_j.data.shape:
            raise ShapeError(f"pair_logits: shapes {z_i.data.shape} and {z_j.data.shape} differ")
        had = mul(z_i, z_j)
        return matmul(had, self.weight) + tile_rows(self.bias, had.data.shape[0])


def pair_logits(z: Tensor, pairs: np.ndarray, fc: PairClassifier) -> Tensor:
    """Score each (i, j) row of ``pairs`` against all interaction types."""
    return fc.pair_logits(gather(z, pairs[:, 0]), gather(z, pairs[:, 1]))


def ppi_bce_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy on sigmoid outputs over all entry/type cells.

    Uses the softplus form y*softplus(-x) + (1-y)*softplus(x), which is the
    log-sum-exp stabilization of -[y log s(x) + (1-y) log(1-s(x))].
    """
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != logits.data.shape:
        raise ShapeError(f"bce: labels {y.shape} vs logits {logits.data.shape}")
    pos = mul(Tensor(y), softplus(mul(logits, -1.0)))
    neg = mul(Tensor(1.0 - y), softplus(logits))
    return mean(pos + neg)
