"""Shared domain types, input validation and seeded random utilities.

Everything downstream (density estimation, the harmonized losses, the toy
trainer and the CLI) builds on the small value types defined here.  All
types are immutable and safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ClassificationBatch",
    "ClassificationExample",
    "HarmonizedBatchResult",
    "heavy_tailed_gradient_norms",
    "logit",
    "rng_from_seed",
    "sigmoid",
    "validate_batch",
    "validate_residuals",
]

_SEED_LIMIT = 2**64


def sigmoid(x):
    """Map logits to probabilities, numerically stable for large |x|.

    Accepts a scalar or an array and rejects non-finite input.  The result
    lies in (0, 1) for any logit that does not saturate float64 itself
    (beyond |x| of roughly 37 the result rounds to exactly 0.0 or 1.0).
    """
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("sigmoid: input must be finite")
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out) if out.ndim == 0 else out


def logit(p):
    """Inverse of :func:`sigmoid`; defined for probabilities strictly inside (0, 1)."""
    arr = np.asarray(p, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError("logit: input must lie strictly inside (0, 1)")
    out = np.log(arr / (1.0 - arr))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ClassificationExample:
    """Predicted probability and binary ground-truth label for one candidate.

    Validation happens at batch level (see :func:`validate_batch`) so that a
    bad record can be reported with its position.
    """

    p: float
    label: int


@dataclass(frozen=True)
class ClassificationBatch:
    """Column view of a validated batch: probabilities and {0,1} labels."""

    p: np.ndarray
    label: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        label = np.asarray(self.label, dtype=np.int64)
        if p.ndim != 1 or label.ndim != 1:
            raise ValueError("batch fields must be one-dimensional")
        if p.shape != label.shape:
            raise ValueError(
                f"batch fields disagree in length: {p.size} probabilities, "
                f"{label.size} labels"
            )
        bad_p = ~(np.isfinite(p) & (p >= 0.0) & (p <= 1.0))
        if np.any(bad_p):
            i = int(np.argmax(bad_p))
            raise ValueError(f"example {i}: field p must lie in [0, 1], got {p[i]!r}")
        bad_label = (label != 0) & (label != 1)
        if np.any(bad_label):
            i = int(np.argmax(bad_label))
            raise ValueError(f"example {i}: field label must be 0 or 1, got {label[i]!r}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "label", label)

    def __len__(self):
        return self.p.size


def validate_batch(examples) -> ClassificationBatch:
    """Check every example's invariants and return a columnar batch.

    The error message names the index and field of the first violation.
    An empty sequence is a valid (empty) batch.
    """
    p = np.array([ex.p for ex in examples], dtype=np.float64)
    label = np.array([ex.label for ex in examples], dtype=np.int64)
    return ClassificationBatch(p=p, label=label)


def validate_residuals(d) -> np.ndarray:
    """Return regression residuals as a float array, rejecting NaN/Inf entries."""
    arr = np.atleast_1d(np.asarray(d, dtype=np.float64))
    if arr.ndim != 1:
        raise ValueError("residuals must be one-dimensional")
    bad = ~np.isfinite(arr)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValueError(f"residual {i}: field d must be finite, got {arr[i]!r}")
    return arr


@dataclass(frozen=True)
class HarmonizedBatchResult:
    """Outcome of applying density harmonization to one batch.

    Attributes
    ----------
    weights:
        Per-example harmonizing weights, all strictly positive.
    per_example_loss:
        Raw (unweighted) per-example losses.
    per_example_grad:
        Per-example gradient of the total loss w.r.t. the model output
        (logit for classification, residual for regression), i.e. already
        weighted and divided by the batch size.
    total_loss:
        Mean of ``weights * per_example_loss``.
    """

    weights: np.ndarray
    per_example_loss: np.ndarray
    per_example_grad: np.ndarray
    total_loss: float

    def __post_init__(self):
        if np.any(self.weights <= 0.0):
            raise ValueError("harmonizing weights must be strictly positive")


def rng_from_seed(seed: int) -> np.random.Generator:
    """Deterministic generator from an explicit 64-bit seed.

    No ambient global state is used anywhere in this package; every
    randomized utility threads one of these through.
    """
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise ValueError(f"seed must be an integer, got {type(seed).__name__}")
    if not 0 <= int(seed) < _SEED_LIMIT:
        raise ValueError(f"seed must lie in [0, 2**64), got {seed}")
    return np.random.default_rng(int(seed))


def heavy_tailed_gradient_norms(n: int, seed: int) -> np.ndarray:
    """Synthetic gradient-norm sample with a realistic long-run shape.

    85% of the values form a large easy mass near zero, 10% a decaying
    middle band, and 5% a cluster of persistent outliers just below one.
    Deterministic for a given seed; all values lie in [0, 1].
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = rng_from_seed(seed)
    u = rng.random(n)
    g = np.empty(n)
    easy = u < 0.85
    mid = (u >= 0.85) & (u < 0.95)
    hard = u >= 0.95
    g[easy] = rng.beta(0.5, 40.0, int(easy.sum()))
    g[mid] = rng.beta(1.0, 2.5, int(mid.sum()))
    g[hard] = 1.0 - 0.03 * rng.random(int(hard.sum()))
    return np.clip(g, 0.0, 1.0)
