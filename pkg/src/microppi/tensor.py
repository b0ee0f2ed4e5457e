"""Dense float64 tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy array plus the bookkeeping needed for backprop:
the tensors it was computed from and a closure that scatters the output
adjoint back onto them.  ``backward()`` walks the graph once in reverse
topological order, so adjoints of shared subexpressions accumulate by
summation.

Tensors are treated as immutable after construction.  Only the optimizer
mutates Parameter data in place, between graph constructions.

Broadcasting is deliberately limited to scalar-with-tensor; every other
elementwise operation requires identical shapes.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DegenerateInputError, ShapeError

Array = np.ndarray


def _as_array(data) -> Array:
    return np.asarray(data, dtype=np.float64)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data: Array = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[Array], None] | None = None

    # -- graph construction ------------------------------------------------

    @staticmethod
    def _make(data: Array, parents: Sequence["Tensor"],
              backward: Callable[[Array], None]) -> "Tensor":
        out = Tensor(data)
        tracked = tuple(p for p in parents if p.requires_grad or p._parents)
        if tracked:
            out.requires_grad = True
            out._parents = tracked
            out._backward = backward
        return out

    def _accumulate(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, grad: Array | None = None) -> None:
        """Run reverse-mode differentiation from this tensor.

        ``grad`` seeds the output adjoint and defaults to ones (a plain 1.0
        for scalar losses).  Visits every reachable node exactly once.
        """
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        seed = np.ones_like(self.data) if grad is None else _as_array(grad)
        if seed.shape != self.data.shape:
            raise ShapeError(f"seed gradient shape {seed.shape} != value shape {self.data.shape}")
        self._accumulate(seed)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    # -- conveniences -------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return stop_gradient(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, _lift(-1.0))

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """A named leaf tensor updated by the optimizer; always requires grad."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _is_scalar(t: Tensor) -> bool:
    return t.data.ndim == 0


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} do not match")


# -- elementwise ops ---------------------------------------------------------


def _binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if _is_scalar(a) or _is_scalar(b):
        return
    _check_same_shape(a, b, op)


def _reduce_for(t: Tensor, g: Array) -> Array:
    # scalar operand of a broadcast op collects the full adjoint
    return g.sum() if _is_scalar(t) and g.ndim > 0 else g


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _binary_shapes(a, b, "add")

    def backward(g: Array) -> None:
        if a.requires_grad or a._parents:
            a._accumulate(_reduce_for(a, g))
        if b.requires_grad or b._parents:
            b._accumulate(_reduce_for(b, g))

    return Tensor._make(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _binary_shapes(a, b, "sub")

    def backward(g: Array) -> None:
        if a.requires_grad or a._parents:
            a._accumulate(_reduce_for(a, g))
        if b.requires_grad or b._parents:
            b._accumulate(-_reduce_for(b, g))

    return Tensor._make(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _binary_shapes(a, b, "mul")

    def backward(g: Array) -> None:
        if a.requires_grad or a._parents:
            a._accumulate(_reduce_for(a, g * b.data))
        if b.requires_grad or b._parents:
            b._accumulate(_reduce_for(b, g * a.data))

    return Tensor._make(a.data * b.data, (a, b), backward)


def power(t: Tensor, exponent: float) -> Tensor:
    """Elementwise x**exponent for a fixed scalar exponent."""
    exponent = float(exponent)
    out_data = t.data ** exponent

    def backward(g: Array) -> None:
        t._accumulate(g * exponent * t.data ** (exponent - 1.0))

    return Tensor._make(out_data, (t,), backward)


def relu(t: Tensor) -> Tensor:
    mask = t.data > 0.0

    def backward(g: Array) -> None:
        t._accumulate(g * mask)

    return Tensor._make(np.where(mask, t.data, 0.0), (t,), backward)


def sigmoid_values(x: Array) -> Array:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(t: Tensor) -> Tensor:
    s = sigmoid_values(np.atleast_1d(t.data)).reshape(t.data.shape)

    def backward(g: Array) -> None:
        t._accumulate(g * s * (1.0 - s))

    return Tensor._make(s, (t,), backward)


def softplus(t: Tensor) -> Tensor:
    """log(1 + exp(x)) in the overflow-safe max(x,0) + log1p(exp(-|x|)) form."""
    x = t.data
    out_data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def backward(g: Array) -> None:
        t._accumulate(g * sigmoid_values(np.atleast_1d(x)).reshape(x.shape))

    return Tensor._make(out_data, (t,), backward)


# -- linear algebra ----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: shapes {a.data.shape} and {b.data.shape} are incompatible")

    def backward(g: Array) -> None:
        if a.requires_grad or a._parents:
            a._accumulate(g @ b.data.T)
        if b.requires_grad or b._parents:
            b._accumulate(a.data.T @ g)

    return Tensor._make(a.data @ b.data, (a, b), backward)


# -- reductions --------------------------------------------------------------


def tensor_sum(t: Tensor) -> Tensor:
    def backward(g: Array) -> None:
        t._accumulate(np.full_like(t.data, float(g)))

    return Tensor._make(np.asarray(t.data.sum()), (t,), backward)


def mean(t: Tensor) -> Tensor:
    n = t.data.size

    def backward(g: Array) -> None:
        t._accumulate(np.full_like(t.data, float(g) / n))

    return Tensor._make(np.asarray(t.data.mean()), (t,), backward)


def l2norm(t: Tensor) -> Tensor:
    """Euclidean norm over all elements; gradient is undefined at zero."""
    norm = float(np.sqrt((t.data ** 2).sum()))

    def backward(g: Array) -> None:
        t._accumulate(float(g) * t.data / norm)

    return Tensor._make(np.asarray(norm), (t,), backward)


def cosine_sim(u: Tensor, v: Tensor) -> Tensor:
    """Cosine similarity of two nonzero 1-d vectors."""
    if u.data.ndim != 1 or v.data.ndim != 1 or u.data.shape != v.data.shape:
        raise ShapeError(f"cosine_sim: need equal-length vectors, got {u.data.shape} and {v.data.shape}")
    nu = float(np.sqrt((u.data ** 2).sum()))
    nv = float(np.sqrt((v.data ** 2).sum()))
    if nu == 0.0 or nv == 0.0:
        raise DegenerateInputError("cosine_sim: zero vector")
    dot = float(u.data @ v.data)
    c = dot / (nu * nv)

    def backward(g: Array) -> None:
        gs = float(g)
        if u.requires_grad or u._parents:
            u._accumulate(gs * (v.data / (nu * nv) - c * u.data / (nu * nu)))
        if v.requires_grad or v._parents:
            v._accumulate(gs * (u.data / (nu * nv) - c * v.data / (nv * nv)))

    return Tensor._make(np.asarray(c), (u, v), backward)


def rowwise_cosine(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity of corresponding rows of two n-by-F matrices."""
    _check_same_shape(a, b, "rowwise_cosine")
    na = np.sqrt((a.data ** 2).sum(axis=1))
    nb = np.sqrt((b.data ** 2).sum(axis=1))
    if np.any(na == 0.0) or np.any(nb == 0.0):
        raise DegenerateInputError("rowwise_cosine: zero row")
    dots = (a.data * b.data).sum(axis=1)
    c = dots / (na * nb)

    def backward(g: Array) -> None:
        gcol = g[:, None]
        if a.requires_grad or a._parents:
            a._accumulate(gcol * (b.data / (na * nb)[:, None] - (c / na ** 2)[:, None] * a.data))
        if b.requires_grad or b._parents:
            b._accumulate(gcol * (a.data / (na * nb)[:, None] - (c / nb ** 2)[:, None] * b.data))

    return Tensor._make(c, (a, b), backward)


# -- structured ops ----------------------------------------------------------


def segment_sum(values: Tensor, segments, num_segments: int) -> Tensor:
    """Sum rows of ``values`` into ``num_segments`` buckets; empty buckets are zero."""
    seg = np.asarray(segments, dtype=np.int64)
    if values.data.ndim != 2:
        raise ShapeError(f"segment_sum: values must be 2-d, got {values.data.shape}")
    if seg.ndim != 1 or seg.shape[0] != values.data.shape[0]:
        raise ShapeError(f"segment_sum: {seg.shape[0]} indices for {values.data.shape[0]} rows")
    if seg.size and (seg.min() < 0 or seg.max() >= num_segments):
        raise IndexError(f"segment_sum: segment index out of range [0, {num_segments})")
    out_data = np.zeros((num_segments, values.data.shape[1]))
    np.add.at(out_data, seg, values.data)

    def backward(g: Array) -> None:
        values._accumulate(g[seg])

    return Tensor._make(out_data, (values,), backward)


def gather(t: Tensor, indices) -> Tensor:
    """Select rows of a 2-d tensor; the adjoint scatters back additively."""
    idx = np.asarray(indices, dtype=np.int64)
    if t.data.ndim != 2:
        raise ShapeError(f"gather: tensor must be 2-d, got {t.data.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= t.data.shape[0]):
        raise IndexError(f"gather: row index out of range [0, {t.data.shape[0]})")

    def backward(g: Array) -> None:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        np.add.at(t.grad, idx, g)

    return Tensor._make(t.data[idx], (t,), backward)


def tile_rows(v: Tensor, n: int) -> Tensor:
    """Stack a 1-d vector into n identical rows."""
    if v.data.ndim != 1:
        raise ShapeError(f"tile_rows: need a vector, got {v.data.shape}")

    def backward(g: Array) -> None:
        v._accumulate(g.sum(axis=0))

    return Tensor._make(np.tile(v.data, (n, 1)), (v,), backward)


def stop_gradient(t: Tensor) -> Tensor:
    """Identity forward; contributes exactly zero adjoint upstream."""
    return Tensor(t.data)


# -- batch normalization ------------------------------------------------------


class BatchNorm:
    """Per-feature batch normalization with running statistics.

    Train mode normalizes by the batch mean/variance (biased) and updates
    the running buffers with momentum 0.1; eval mode uses the buffers.
    """

    EPS = 1e-5
    MOMENTUM = 0.1

    def __init__(self, num_features: int, name: str):
        self.gamma = Parameter(np.ones(num_features), f"{name}.gamma")
        self.beta = Parameter(np.zeros(num_features), f"{name}.beta")
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)

    def parameters(self) -> list[Parameter]:
        return [self.gamma, self.beta]

    def buffers(self) -> dict[str, Array]:
        base = self.gamma.name.rsplit(".", 1)[0]
        return {f"{base}.running_mean": self.running_mean,
                f"{base}.running_var": self.running_var}

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        if x.data.ndim != 2 or x.data.shape[1] != self.gamma.data.shape[0]:
            raise ShapeError(f"batch_norm: expected (n, {self.gamma.data.shape[0]}), got {x.data.shape}")
        n = x.data.shape[0]
        if training:
            if n < 2:
                raise ShapeError(f"batch_norm: train mode needs >= 2 rows, got {n}")
            mu = x.data.mean(axis=0)
            var = x.data.var(axis=0)
            self.running_mean = (1.0 - self.MOMENTUM) * self.running_mean + self.MOMENTUM * mu
            self.running_var = (1.0 - self.MOMENTUM) * self.running_var + self.MOMENTUM * var
        else:
            mu = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.EPS)
        xhat = (x.data - mu) * inv_std
        out_data = self.gamma.data * xhat + self.beta.data
        gamma, beta = self.gamma, self.beta

        def backward(g: Array) -> None:
            beta._accumulate(g.sum(axis=0))
            gamma._accumulate((g * xhat).sum(axis=0))
            if x.requires_grad or x._parents:
                if training:
                    gxhat = g * gamma.data
                    x._accumulate(inv_std * (gxhat - gxhat.mean(axis=0)
                                             - xhat * (gxhat * xhat).mean(axis=0)))
                else:
                    x._accumulate(g * gamma.data * inv_std)

        return Tensor._make(out_data, (x, gamma, beta), backward)


def collect_parameters(groups: Iterable) -> list[Parameter]:
    """Flatten parameter lists, enforcing unique names."""
    params: list[Parameter] = []
    seen: set[str] = set()
    for group in groups:
        items = group.parameters() if hasattr(group, "parameters") else group
        for p in items:
            if p.name in seen:
                raise ValueError(f"duplicate parameter name: {p.name}")
            seen.add(p.name)
            params.append(p)
    return params
