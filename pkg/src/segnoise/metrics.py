"""Soft dice / precision / recall / f-beta scores, losses and gradients.

All scores share one smoothing constant (1.0) added to numerator and
denominator, which keeps every score total (empty masks score 1) and
keeps gradients alive. With t binary the three confusion sums reduce to

    tp = sum(p * t),   sum_p = sum(p),   sum_t = sum(t)

and the whole family is expressed through them:

    soft_dice      = (2*tp + 1) / (sum_p + sum_t + 1)
    soft_precision = (tp + 1) / (sum_p + 1)
    soft_recall    = (tp + 1) / (sum_t + 1)
    f_beta         = ((1+b^2)*tp + 1) / (b^2*sum_t + sum_p + 1)

f_beta carries the smoothing through the generalization so that
f_beta(., ., 1) is exactly soft_dice and f_beta(., ., 0) is exactly
soft_precision; for beta -> inf it converges to recall. Sums run over
every element of the input, so the same functions score 2-D frames and
3-D volumes (volume-wise scoring is the whole-array sum).
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

SMOOTHING = 1.0

# Above this element count, sums switch to chunked compensated
# summation so scores stay bit-stable for very large volumes.
_COMPENSATED_THRESHOLD = 1 << 24
_CHUNK = 1 << 20


class ScoreTriple(NamedTuple):
    dice: float
    precision: float
    recall: float


def stable_sum(values: np.ndarray) -> float:
    """Row-major sum, compensated above the large-volume threshold."""
    flat = np.ascontiguousarray(values).reshape(-1)
    if flat.size <= _COMPENSATED_THRESHOLD:
        return float(np.sum(flat, dtype=np.float64))
    partials = [
        float(np.sum(flat[i : i + _CHUNK], dtype=np.float64))
        for i in range(0, flat.size, _CHUNK)
    ]
    return math.fsum(partials)


def _check_pair(p, t) -> tuple[np.ndarray, np.ndarray]:
    p_arr = np.asarray(p, dtype=np.float64)
    t_arr = np.asarray(t, dtype=np.float64)
    if p_arr.shape != t_arr.shape:
        raise ValueError(f"prediction/target shapes differ: {p_arr.shape} vs {t_arr.shape}")
    if p_arr.size == 0:
        raise ValueError("prediction/target must be non-empty")
    if not np.isfinite(p_arr).all():
        raise ValueError("prediction contains non-finite values")
    if p_arr.min() < 0.0 or p_arr.max() > 1.0:
        raise ValueError("prediction values must lie in [0, 1]")
    if not ((t_arr == 0.0) | (t_arr == 1.0)).all():
        raise ValueError("target values must be exactly 0 or 1")
    return p_arr, t_arr


def _confusion_sums(p_arr: np.ndarray, t_arr: np.ndarray) -> tuple[float, float, float]:
    tp = stable_sum(p_arr * t_arr)
    sum_p = stable_sum(p_arr)
    sum_t = stable_sum(t_arr)
    return tp, sum_p, sum_t


def _check_beta(beta) -> float:
    b = float(beta)
    if not math.isfinite(b) or b < 0.0:
        raise ValueError("beta must be finite and >= 0")
    return b


def soft_dice(p, t) -> float:
    p_arr, t_arr = _check_pair(p, t)
    tp, sum_p, sum_t = _confusion_sums(p_arr, t_arr)
    return (2.0 * tp + SMOOTHING) / (sum_p + sum_t + SMOOTHING)


def soft_precision(p, t) -> float:
    p_arr, t_arr = _check_pair(p, t)
    tp, sum_p, _ = _confusion_sums(p_arr, t_arr)
    return (tp + SMOOTHING) / (sum_p + SMOOTHING)


def soft_recall(p, t) -> float:
    p_arr, t_arr = _check_pair(p, t)
    tp, _, sum_t = _confusion_sums(p_arr, t_arr)
    return (tp + SMOOTHING) / (sum_t + SMOOTHING)


def f_beta(p, t, beta) -> float:
    """Recall/precision trade-off score; beta > 1 weights recall."""
    b = _check_beta(beta)
    p_arr, t_arr = _check_pair(p, t)
    tp, sum_p, sum_t = _confusion_sums(p_arr, t_arr)
    b2 = b * b
    return ((1.0 + b2) * tp + SMOOTHING) / (b2 * sum_t + sum_p + SMOOTHING)


def loss(p, t, beta=1.0) -> float:
    """1 - f_beta; the quantity the toy trainer descends."""
    return 1.0 - f_beta(p, t, beta)


def grad_loss(p, t, beta=1.0) -> np.ndarray:
    """Closed-form d loss / d p_i, same shape as p.

    With N = (1+b^2)*tp + 1 and D = b^2*sum_t + sum_p + 1 the loss is
    1 - N/D, so the partial w.r.t. p_i is (N - (1+b^2)*t_i*D) / D^2.
    """
    b = _check_beta(beta)
    p_arr, t_arr = _check_pair(p, t)
    tp, sum_p, sum_t = _confusion_sums(p_arr, t_arr)
    b2 = b * b
    numer = (1.0 + b2) * tp + SMOOTHING
    denom = b2 * sum_t + sum_p + SMOOTHING
    return (numer - (1.0 + b2) * t_arr * denom) / (denom * denom)


def hard_metrics(p, t, threshold: float = 0.5) -> ScoreTriple:
    """Binarize p at `threshold` (strictly greater), then score."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    p_arr, t_arr = _check_pair(p, t)
    hard = (p_arr > threshold).astype(np.float64)
    tp, sum_p, sum_t = _confusion_sums(hard, t_arr)
    return ScoreTriple(
        dice=(2.0 * tp + SMOOTHING) / (sum_p + sum_t + SMOOTHING),
        precision=(tp + SMOOTHING) / (sum_p + SMOOTHING),
        recall=(tp + SMOOTHING) / (sum_t + SMOOTHING),
    )


def soft_metrics(p, t) -> ScoreTriple:
    """Soft dice/precision/recall from one pass over the sums."""
    p_arr, t_arr = _check_pair(p, t)
    tp, sum_p, sum_t = _confusion_sums(p_arr, t_arr)
    return ScoreTriple(
        dice=(2.0 * tp + SMOOTHING) / (sum_p + sum_t + SMOOTHING),
        precision=(tp + SMOOTHING) / (sum_p + SMOOTHING),
        recall=(tp + SMOOTHING) / (sum_t + SMOOTHING),
    )


def finite_difference_grad_loss(p, t, beta=1.0, eps: float = 1e-4) -> np.ndarray:
    """Central-difference reference gradient of the loss (slow).

    Perturbs one pixel at a time; used to cross-check grad_loss.
    """
    p_arr, t_arr = _check_pair(p, t)
    b = _check_beta(beta)
    grad = np.zeros_like(p_arr)
    flat_grad = grad.reshape(-1)
    flat_p = p_arr.reshape(-1)
    for i in range(flat_p.size):
        bumped = flat_p.copy()
        bumped[i] = flat_p[i] + eps
        up = 1.0 - _f_beta_unchecked(bumped, t_arr.reshape(-1), b)
        bumped[i] = flat_p[i] - eps
        down = 1.0 - _f_beta_unchecked(bumped, t_arr.reshape(-1), b)
        flat_grad[i] = (up - down) / (2.0 * eps)
    return grad


def _f_beta_unchecked(p_arr: np.ndarray, t_arr: np.ndarray, b: float) -> float:
    # Perturbed probes may step slightly outside [0,1]; skip range checks.
    tp, sum_p, sum_t = _confusion_sums(p_arr, t_arr)
    b2 = b * b
    return ((1.0 + b2) * tp + SMOOTHING) / (b2 * sum_t + sum_p + SMOOTHING)


def aggregate_framewise(scores: Sequence[float]) -> float:
    """Arithmetic mean of per-frame scores."""
    if len(scores) == 0:
        raise ValueError("cannot aggregate an empty score list")
    return float(np.mean(np.asarray(scores, dtype=np.float64)))


def score_volumewise(p_vol, t_vol) -> ScoreTriple:
    """Soft scores with sums running over all voxels of the volume."""
    p_arr = np.asarray(p_vol)
    t_arr = np.asarray(t_vol)
    if p_arr.ndim != 3 or t_arr.ndim != 3:
        raise ValueError("volume-wise scoring expects 3-D arrays")
    return soft_metrics(p_arr, t_arr)
