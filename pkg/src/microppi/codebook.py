"""Learnable microenvironment codebook.

Encoder outputs are snapped to their nearest code vector (vector
quantization).  The discrete lookup is made trainable two ways: the
straight-through path copies the decoder's gradient back onto the encoder
output, and the quantization loss pulls codes toward the encoder outputs
assigned to them while committing the encoder to its chosen code.

Masked codebook modeling hides a random subset of *codebook entries*
behind a shared learnable mask vector; residues whose code was hidden
must be reconstructed from the mask vector alone, which is scored by a
scaled cosine error.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .tensor import (
    Parameter,
    Tensor,
    gather,
    mean,
    mul,
    power,
    rowwise_cosine,
    sub,
    tensor_sum,
    tile_rows,
)

logger = logging.getLogger(__name__)


class Codebook:
    """A size-by-dim table of code vectors plus the shared mask vector."""

    def __init__(self, size: int, dim: int, rng: np.random.Generator, name: str = "codebook"):
        if size < 1:
            raise ConfigError(f"codebook size must be >= 1, got {size}")
        scale = 1.0 / size
        self.vectors = Parameter(rng.uniform(-scale, scale, size=(size, dim)), f"{name}.vectors")
        self.mask_vector = Parameter(rng.uniform(-scale, scale, size=dim), f"{name}.mask_vector")

    @property
    def size(self) -> int:
        return self.vectors.data.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.data.shape[1]

    def parameters(self) -> list[Parameter]:
        return [self.vectors, self.mask_vector]


@dataclass
class QuantizationResult:
    codes: np.ndarray            # (M,) int code index per residue
    quantized: Tensor            # (M, F) exact code rows; grads flow to the codebook
    straight_through: Tensor     # (M, F) same values; grads flow to the encoder output


@dataclass
class MaskPlan:
    masked: np.ndarray           # sorted distinct code indices
    ratio: float


def nearest_codes(h: np.ndarray, codes: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Exact argmin over squared Euclidean distances, chunked over rows.

    Ties resolve to the lowest code index (argmin keeps the first minimum).
    """
    out = np.empty(h.shape[0], dtype=np.int64)
    for i in range(0, h.shape[0], chunk):
        block = h[i:i + chunk]
        d2 = ((block[:, None, :] - codes[None, :, :]) ** 2).sum(axis=2)
        out[i:i + chunk] = d2.argmin(axis=1)
    return out


def _straight_through(h: Tensor, quantized: Tensor) -> Tensor:
    # forward takes the quantized values verbatim; backward is the identity
    # onto the encoder output, and contributes nothing to the codebook
    def backward(g):
        h._accumulate(g)

    return Tensor._make(quantized.data, (h,), backward)


def quantize(h: Tensor, cb: Codebook) -> QuantizationResult:
    """Map each row of ``h`` to its nearest code vector."""
    if h.data.ndim != 2 or h.data.shape[1] != cb.dim:
        raise ShapeError(f"quantize: expected (M, {cb.dim}), got {h.data.shape}")
    if np.isnan(h.data).any():
        raise NumericError("quantize: NaN in encoder outputs")
    codes = nearest_codes(h.data, cb.vectors.data)
    quantized = gather(cb.vectors, codes)
    return QuantizationResult(codes=codes, quantized=quantized,
                              straight_through=_straight_through(h, quantized))


class VqLoss(NamedTuple):
    total: Tensor
    reconstruction: float
    codebook: float
    commitment: float


def vq_loss(x: Tensor, x_hat: Tensor, h: Tensor, q: QuantizationResult,
            beta: float) -> VqLoss:
    """Reconstruction + codebook + beta * commitment, averaged over residues.

    Gradient routing: the reconstruction term reaches encoder (through the
    straight-through path inside ``x_hat``) and decoder; the codebook term
    reaches only the code vectors; the commitment term only the encoder.
    """
    m = x.data.shape[0]
    if not (x_hat.data.shape[0] == h.data.shape[0] == m):
        raise ShapeError("vq_loss: row counts disagree")
    inv_m = 1.0 / m

    recon_diff = sub(x, x_hat)
    recon = mul(tensor_sum(mul(recon_diff, recon_diff)), inv_m)

    code_diff = sub(h.detach(), q.quantized)
    code_term = mul(tensor_sum(mul(code_diff, code_diff)), inv_m)

    commit_diff = sub(h, q.quantized.detach())
    commit_term = mul(tensor_sum(mul(commit_diff, commit_diff)), inv_m)

    total = recon + code_term + beta * commit_term
    return VqLoss(total, recon.item(), code_term.item(), commit_term.item())


def sample_mask(cb: Codebook, ratio: float, rng: np.random.Generator) -> MaskPlan:
    """Uniform sample of round(ratio * size) distinct code indices."""
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"mask ratio must be in (0, 1), got {ratio}")
    n = int(round(ratio * cb.size))
    if n == 0:
        raise ConfigError(f"mask ratio {ratio} rounds to zero masked codes for size {cb.size}")
    masked = np.sort(rng.choice(cb.size, size=n, replace=False))
    return MaskPlan(masked=masked, ratio=ratio)


def masked_lookup(codes: np.ndarray, cb: Codebook, plan: MaskPlan) -> tuple[Tensor, np.ndarray]:
    """Look codes up in the masked codebook.

    Rows whose code is in the plan read the mask vector instead of their
    code vector.  Returns the lookup and the masked residue indices.
    """
    codes = np.asarray(codes, dtype=np.int64)
    selected = gather(cb.vectors, codes)
    hidden = np.isin(codes, plan.masked)
    masked_nodes = np.nonzero(hidden)[0]
    if masked_nodes.size == 0:
        return selected, masked_nodes
    ind = np.repeat(hidden[:, None].astype(np.float64), cb.dim, axis=1)
    tiled = tile_rows(cb.mask_vector, codes.shape[0])
    out = mul(selected, Tensor(1.0 - ind)) + mul(tiled, Tensor(ind))
    return out, masked_nodes


def mcm_loss(x: Tensor, x_tilde: Tensor, masked_nodes: np.ndarray, gamma: float) -> Tensor:
    """Scaled cosine reconstruction error, averaged over masked residues only."""
    if len(masked_nodes) == 0:
        logger.warning("mcm_loss: no residue used a masked code this step; loss is 0")
        return Tensor(0.0)
    cos = rowwise_cosine(gather(x, masked_nodes), gather(x_tilde, masked_nodes))
    return mean(power(sub(Tensor(1.0), cos), gamma))


def pretrain_loss(l_vq: Tensor, l_mcm: Tensor, eta: float) -> Tensor:
    if not (np.isfinite(l_vq.data) and np.isfinite(l_mcm.data)):
        raise NumericError("pretrain_loss: non-finite loss component")
    return l_vq + eta * l_mcm


def usage_counts(codes_per_protein, size: int) -> np.ndarray:
    counts = np.zeros(size, dtype=np.int64)
    for codes in codes_per_protein:
        counts += np.bincount(codes, minlength=size)
    return counts


def usage_entropy(counts: np.ndarray) -> float:
    """Shannon entropy (nats) of the code-usage distribution."""
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log(p)).sum())
