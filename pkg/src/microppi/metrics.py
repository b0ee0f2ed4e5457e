"""Evaluation metrics and the coordinate-perturbation harness."""

from __future__ import annotations

import numpy as np

from .errors import DataError, MetricError, ShapeError


def micro_f1(probs: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    """Micro-averaged F1 over all entry/type cells after thresholding.

    Cells with probability >= threshold count as predicted positive.
    Returns 0 when there are no positives in predictions or labels.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.shape != labels.shape:
        raise ShapeError(f"micro_f1: shapes {probs.shape} and {labels.shape} differ")
    preds = probs >= threshold
    truth = labels > 0.5
    tp = int(np.count_nonzero(preds & truth))
    fp = int(np.count_nonzero(preds & ~truth))
    fn = int(np.count_nonzero(~preds & truth))
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2.0 * tp / denom


def aupr(probs: np.ndarray, labels: np.ndarray) -> float:
    """Micro-averaged area under the precision-recall curve.

    All cells are flattened and sorted by score; tied scores form one
    curve point.  The area is the interpolation-free step sum
    sum_k (R_k - R_{k-1}) * P_k.
    """
    scores = np.asarray(probs, dtype=np.float64).ravel()
    truth = (np.asarray(labels) > 0.5).ravel()
    n_pos = int(truth.sum())
    if n_pos == 0:
        raise MetricError("aupr: no positive cells")
    order = np.argsort(-scores, kind="stable")
    scores, truth = scores[order], truth[order]

    area, tp, fp, prev_recall = 0.0, 0, 0, 0.0
    i = 0
    while i < scores.size:
        j = i
        while j < scores.size and scores[j] == scores[i]:
            j += 1
        group_pos = int(truth[i:j].sum())
        tp += group_pos
        fp += (j - i) - group_pos
        precision = tp / (tp + fp)
        recall = tp / n_pos
        area += (recall - prev_recall) * precision
        prev_recall = recall
        i = j
    return area


def rmsd(a: np.ndarray, b: np.ndarray) -> float:
    """Root-mean-square deviation in Angstrom; no superposition is applied."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 3:
        raise ShapeError(f"rmsd: need matching (M, 3) arrays, got {a.shape} and {b.shape}")
    return float(np.sqrt(((a - b) ** 2).sum(axis=1).mean()))


def perturb_to_rmsd(coords: np.ndarray, target: float, seed: int) -> np.ndarray:
    """Gaussian-perturb coordinates, rescaled to hit the target RMSD exactly."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3 or coords.shape[0] == 0:
        raise DataError(f"perturb_to_rmsd: need a nonempty (M, 3) array, got {coords.shape}")
    if target < 0:
        raise DataError(f"perturb_to_rmsd: negative target {target}")
    if target == 0.0:
        return coords.copy()
    noise = np.random.default_rng(seed).standard_normal(coords.shape)
    achieved = np.sqrt((noise ** 2).sum(axis=1).mean())
    return coords + noise * (target / achieved)
