"""Finite-difference gradient oracle, independent of the autodiff engine.

Central differences with step 1e-5; agreement threshold is a relative
error below 1e-4, where the error is normalized by the largest gradient
magnitude (floored at 1 so near-zero gradients are compared absolutely).
"""

from __future__ import annotations

import numpy as np

from microppi.tensor import Tensor

FD_STEP = 1e-5
FD_TOL = 1e-4


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.abs(a).max(initial=0.0)), float(np.abs(b).max(initial=0.0)), 1.0)
    return float(np.abs(a - b).max(initial=0.0)) / scale


def autodiff_grads(build, arrays):
    """Build the graph on fresh requires-grad leaves and return their grads."""
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = build(leaves)
    out.backward()
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in leaves]


def fd_grad(build, arrays, wrt: int, h: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of the scalar build() w.r.t. arrays[wrt]."""
    def evaluate(mutated):
        leaves = [Tensor(a.copy()) for a in mutated]
        return float(build(leaves).data)

    work = [a.copy() for a in arrays]
    x = work[wrt]
    grad = np.zeros_like(x)
    flat_x, flat_g = x.reshape(-1), grad.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        fp = evaluate(work)
        flat_x[i] = orig - h
        fm = evaluate(work)
        flat_x[i] = orig
        flat_g[i] = (fp - fm) / (2.0 * h)
    return grad


def assert_grads_match(build, arrays, tol: float = FD_TOL) -> None:
    ad = autodiff_grads(build, arrays)
    for k in range(len(arrays)):
        fd = fd_grad(build, arrays, k)
        err = rel_err(ad[k], fd)
        assert err < tol, f"gradient mismatch on operand {k}: rel err {err:.3e}"


def fd_param_grad(param, evaluate, h: float = FD_STEP) -> np.ndarray:
    """Central differences w.r.t. a Parameter mutated in place; ``evaluate()``
    must rebuild the graph and return the scalar loss value."""
    grad = np.zeros_like(param.data)
    flat_p, flat_g = param.data.reshape(-1), grad.reshape(-1)
    for i in range(flat_p.size):
        orig = flat_p[i]
        flat_p[i] = orig + h
        fp = evaluate()
        flat_p[i] = orig - h
        fm = evaluate()
        flat_p[i] = orig
        flat_g[i] = (fp - fm) / (2.0 * h)
    return grad


def assert_param_grads_match(params, loss_builder, tol: float = FD_TOL) -> None:
    """Check autodiff grads of named Parameters against finite differences."""
    for p in params:
        p.zero_grad()
    loss_builder().backward()
    recorded = [(p, p.grad.copy()) for p in params]
    for p, ad in recorded:
        fd = fd_param_grad(p, lambda: float(loss_builder().data))
        err = rel_err(ad, fd)
        assert err < tol, f"gradient mismatch on {p.name}: rel err {err:.3e}"
