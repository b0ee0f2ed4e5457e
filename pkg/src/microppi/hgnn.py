"""Heterogeneous residue-graph encoder and its mirrored decoder.

Each layer aggregates in-neighbor features separately per edge relation,
applies a relation-specific linear map, sums the relation messages,
applies a shared linear map, then ReLU and batch norm (in that order,
batch norm outermost).  The decoder uses the same message-passing scheme
with mirrored dimensions; its final layer is purely linear so outputs can
take arbitrary real values.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .protein_graph import RELATIONS, HeteroProteinGraph
from .tensor import BatchNorm, Parameter, Tensor, gather, matmul, relu, segment_sum


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class HgnnLayer:
    def __init__(self, f_in: int, f_out: int, rng: np.random.Generator,
                 name: str, with_activation: bool = True):
        self.w_rel = {r: Parameter(_glorot(rng, f_in, f_out), f"{name}.W_{r}") for r in RELATIONS}
        self.w_h = Parameter(_glorot(rng, f_out, f_out), f"{name}.W_h")
        self.bn = BatchNorm(f_out, f"{name}.bn") if with_activation else None
        self.with_activation = with_activation

    def parameters(self) -> list[Parameter]:
        params = [self.w_rel[r] for r in RELATIONS] + [self.w_h]
        if self.bn is not None:
            params += self.bn.parameters()
        return params

    def __call__(self, g: HeteroProteinGraph, h: Tensor, training: bool) -> Tensor:
        m = g.n_nodes
        total = None
        for r in RELATIONS:
            edges = g.edges[r]
            agg = segment_sum(gather(h, edges[:, 0]), edges[:, 1], m)
            msg = matmul(agg, self.w_rel[r])
            total = msg if total is None else total + msg
        pre = matmul(total, self.w_h)
        if not self.with_activation:
            return pre
        return self.bn(relu(pre), training)


class HgnnStack:
    """A chain of message-passing layers, either encoder or decoder."""

    def __init__(self, layers: list[HgnnLayer], direction: str):
        self.layers = layers
        self.direction = direction

    @classmethod
    def encoder(cls, f_in: int, f_hidden: int, n_layers: int,
                rng: np.random.Generator, name: str = "encoder") -> "HgnnStack":
        dims = [f_in] + [f_hidden] * n_layers
        layers = [HgnnLayer(dims[i], dims[i + 1], rng, f"{name}.{i}") for i in range(n_layers)]
        return cls(layers, "encoder")

    @classmethod
    def decoder(cls, f_hidden: int, f_out: int, n_layers: int,
                rng: np.random.Generator, name: str = "decoder") -> "HgnnStack":
        dims = [f_hidden] * n_layers + [f_out]
        layers = [
            HgnnLayer(dims[i], dims[i + 1], rng, f"{name}.{i}",
                      with_activation=(i < n_layers - 1))
            for i in range(n_layers)
        ]
        return cls(layers, "decoder")

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def buffers(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for layer in self.layers:
            if layer.bn is not None:
                out.update(layer.bn.buffers())
        return out

    def forward(self, g: HeteroProteinGraph, x: Tensor, training: bool = False) -> Tensor:
        if x.data.ndim != 2 or x.data.shape[0] != g.n_nodes:
            raise ShapeError(f"hgnn: features {x.data.shape} do not match {g.n_nodes} nodes")
        h = x
        for layer in self.layers:
            h = layer(g, h, training)
        return h

    __call__ = forward


def hgnn_forward(stack: HgnnStack, g: HeteroProteinGraph, x: Tensor,
                 training: bool = False) -> Tensor:
    return stack.forward(g, x, training)


def decode(stack: HgnnStack, g: HeteroProteinGraph, z: Tensor,
           training: bool = False) -> Tensor:
    return stack.forward(g, z, training)
