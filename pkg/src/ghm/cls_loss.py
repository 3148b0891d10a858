"""Classification losses: cross entropy, a focal baseline, and the
density-harmonized variants (exact and unit-region approximated).

All per-example functions are vectorized over numpy arrays and also accept
scalars.  Gradients are taken with respect to the model's raw output (the
logit), where cross entropy has the convenient form p - p*.
"""

from __future__ import annotations

import numpy as np

from .core import ClassificationBatch, HarmonizedBatchResult
from .density import (
    UnitRegionHistogram,
    density_for_weighting,
    density_sorted_scan,
    harmonizing_weights,
)

__all__ = [
    "P_MIN",
    "ce_grad_logit",
    "ce_loss",
    "focal_loss",
    "ghm_c_approx",
    "ghm_c_exact",
    "gradient_norm_cls",
]

# Floor for the true-class probability before taking logs.  One-sided on
# purpose: a perfect prediction must yield a loss of exactly zero, while a
# wrong-with-certainty one must stay finite.  Gradients never use the floor.
P_MIN = 1e-12


def _true_class_prob(p, label):
    return np.where(np.asarray(label) == 1, p, 1.0 - np.asarray(p, dtype=np.float64))


def ce_loss(p, label):
    """Binary cross entropy of predicted probability p against label p*."""
    pt = _true_class_prob(p, label)
    out = -np.log(np.maximum(pt, P_MIN))
    return float(out) if out.ndim == 0 else out


def ce_grad_logit(p, label):
    """Gradient of the cross entropy w.r.t. the logit: simply p - p*."""
    out = np.asarray(p, dtype=np.float64) - np.asarray(label)
    return float(out) if out.ndim == 0 else out


def gradient_norm_cls(p, label):
    """|p - p*|, the magnitude of the per-example logit gradient.

    Small values mean easy, well-classified examples; values near one mean
    confidently wrong ones.
    """
    out = np.abs(np.asarray(p, dtype=np.float64) - np.asarray(label))
    return float(out) if out.ndim == 0 else out


def focal_loss(p, label, gamma: float = 2.0, alpha_balance: float = 0.25):
    """Focal loss and its logit gradient; the fixed-shape baseline.

    Down-weights easy examples by the modulating factor (1 - p_t)^gamma.
    With gamma = 0 and alpha_balance = 1 it degenerates to plain cross
    entropy.  Returns ``(loss, grad)`` arrays (or floats for scalar input).
    """
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")
    if not 0.0 < alpha_balance <= 1.0:
        raise ValueError(f"alpha_balance must lie in (0, 1], got {alpha_balance}")
    pt = np.asarray(_true_class_prob(p, label), dtype=np.float64)
    log_pt = np.log(np.maximum(pt, P_MIN))
    loss = -alpha_balance * (1.0 - pt) ** gamma * log_pt
    sign = np.where(np.asarray(label) == 1, 1.0, -1.0)
    # d/dx of the loss via d(pt)/dx = sign * pt * (1 - pt)
    grad = -sign * alpha_balance * (1.0 - pt) ** gamma * (
        (1.0 - pt) - gamma * pt * log_pt
    )
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


def _harmonize(batch: ClassificationBatch, weights: np.ndarray) -> HarmonizedBatchResult:
    raw = ce_loss(batch.p, batch.label)
    n = len(batch)
    # Weights are treated as constants: no derivative flows through the
    # density statistics, only through the cross entropy itself.
    grad = weights * ce_grad_logit(batch.p, batch.label) / n
    total = float(np.mean(weights * raw))
    return HarmonizedBatchResult(
        weights=weights,
        per_example_loss=np.atleast_1d(raw),
        per_example_grad=np.atleast_1d(grad),
        total_loss=total,
    )


def ghm_c_exact(batch: ClassificationBatch, epsilon: float) -> HarmonizedBatchResult:
    """Harmonized cross entropy with the exact sliding-window density.

    Every example is weighted by N over the density at its own gradient
    norm; with a single window covering everything (epsilon = 1) all
    weights are one and the result is the plain mean cross entropy.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    g = gradient_norm_cls(batch.p, batch.label)
    dens = density_sorted_scan(g, epsilon)
    return _harmonize(batch, harmonizing_weights(g, dens))


def ghm_c_approx(
    batch: ClassificationBatch,
    hist: UnitRegionHistogram,
    use_ema: bool = False,
) -> HarmonizedBatchResult:
    """Harmonized cross entropy with the unit-region density approximation.

    ``hist`` carries the per-bin statistics; in raw mode it must have been
    built from this batch (otherwise a bin can come up empty and the
    weights are undefined).  In EMA mode the histogram must have been
    updated at least once and the floored smoothed counts are used.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    g = gradient_norm_cls(batch.p, batch.label)
    dens = density_for_weighting(hist, g, use_ema=use_ema)
    return _harmonize(batch, harmonizing_weights(g, dens))
