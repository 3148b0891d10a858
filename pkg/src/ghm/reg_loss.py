"""Regression losses on scalar residuals: smooth L1, its everywhere-smooth
replacement, and the density-harmonized version of the latter.

The smooth replacement sqrt(d^2 + mu^2) - mu behaves like a scaled L2 loss
for small residuals and like L1 for large ones, but unlike smooth L1 its
gradient d / sqrt(d^2 + mu^2) never saturates at exactly 1, so residuals of
different magnitude remain distinguishable by gradient norm alone.  That
gradient norm also lives in [0, 1), which lets regression share the same
unit-region machinery as classification.
"""

from __future__ import annotations

import numpy as np

from .core import HarmonizedBatchResult, validate_residuals
from .density import (
    UnitRegionHistogram,
    build_histogram,
    density_for_weighting,
    density_from_histogram,
    density_sorted_scan,
    harmonizing_weights,
)

__all__ = [
    "DEFAULT_DELTA",
    "DEFAULT_MU",
    "DEFAULT_REG_BINS",
    "asl1",
    "asl1_grad",
    "ghm_r",
    "gradient_norm_reg",
    "sl1",
    "sl1_grad",
]

DEFAULT_DELTA = 1.0 / 9.0
DEFAULT_MU = 0.02
DEFAULT_REG_BINS = 10


def _check_positive(name, value):
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return float(value)


def sl1(d, delta: float = DEFAULT_DELTA):
    """Smooth L1: quadratic below the division point delta, linear above."""
    delta = _check_positive("delta", delta)
    d = np.asarray(d, dtype=np.float64)
    ad = np.abs(d)
    out = np.where(ad <= delta, d * d / (2.0 * delta), ad - 0.5 * delta)
    return float(out) if out.ndim == 0 else out


def sl1_grad(d, delta: float = DEFAULT_DELTA):
    """Gradient of smooth L1: d/delta inside the quadratic part, sign(d) outside."""
    delta = _check_positive("delta", delta)
    d = np.asarray(d, dtype=np.float64)
    out = np.where(np.abs(d) <= delta, d / delta, np.sign(d))
    return float(out) if out.ndim == 0 else out


def asl1(d, mu: float = DEFAULT_MU):
    """Smooth L1 surrogate sqrt(d^2 + mu^2) - mu with derivatives of all orders."""
    mu = _check_positive("mu", mu)
    d = np.asarray(d, dtype=np.float64)
    out = np.hypot(d, mu) - mu
    return float(out) if out.ndim == 0 else out


def asl1_grad(d, mu: float = DEFAULT_MU):
    """Gradient d / sqrt(d^2 + mu^2), strictly inside (-1, 1).

    Strict in exact arithmetic; in float64 the value rounds to +-1.0 once
    |d| / mu exceeds roughly 1e8.
    """
    mu = _check_positive("mu", mu)
    d = np.asarray(d, dtype=np.float64)
    out = d / np.hypot(d, mu)
    return float(out) if out.ndim == 0 else out


def gradient_norm_reg(d, mu: float = DEFAULT_MU):
    """|d| / sqrt(d^2 + mu^2): regression gradient norm in [0, 1).

    Strictly monotone in |d|, so unlike the saturated smooth-L1 gradient it
    separates large residuals of different magnitude.
    """
    mu = _check_positive("mu", mu)
    d = np.asarray(d, dtype=np.float64)
    out = np.abs(d) / np.hypot(d, mu)
    return float(out) if out.ndim == 0 else out


def ghm_r(
    d,
    mu: float = DEFAULT_MU,
    *,
    epsilon: float | None = None,
    bins: int | None = None,
    hist: UnitRegionHistogram | None = None,
    use_ema: bool = False,
) -> HarmonizedBatchResult:
    """Density-harmonized regression loss over a batch of residuals.

    The density over the regression gradient norms can come from exactly
    one of three routes:

    * ``epsilon=...`` — exact sliding-window density;
    * ``bins=...`` — a unit-region histogram built from this batch;
    * ``hist=...`` — a caller-maintained histogram, e.g. EMA-smoothed
      across training iterations (set ``use_ema=True`` to read the
      smoothed counts).

    With no route given, a fresh per-batch histogram with
    ``DEFAULT_REG_BINS`` regions is used.
    """
    d = validate_residuals(d)
    if d.size == 0:
        raise ValueError("empty residual batch")
    mu = _check_positive("mu", mu)
    chosen = sum(arg is not None for arg in (epsilon, bins, hist))
    if chosen > 1:
        raise ValueError("choose at most one of epsilon=, bins=, hist=")
    if use_ema and hist is None:
        raise ValueError("use_ema requires a caller-maintained hist=")

    gr = gradient_norm_reg(d, mu)
    if epsilon is not None:
        dens = density_sorted_scan(gr, epsilon)
    elif hist is not None:
        dens = density_for_weighting(hist, gr, use_ema=use_ema)
    else:
        own = build_histogram(gr, DEFAULT_REG_BINS if bins is None else bins)
        dens = density_from_histogram(own, gr)
    weights = harmonizing_weights(gr, dens)

    raw = asl1(d, mu)
    n = d.size
    grad = weights * asl1_grad(d, mu) / n
    total = float(np.mean(weights * raw))
    return HarmonizedBatchResult(
        weights=weights,
        per_example_loss=np.atleast_1d(raw),
        per_example_grad=np.atleast_1d(grad),
        total_loss=total,
    )
