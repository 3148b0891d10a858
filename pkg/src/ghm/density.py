"""Gradient-density estimation over the unit interval.

Three estimators with distinct complexity classes are provided:

* :func:`density_all_naive` — evaluates the sliding-window definition at
  every example by brute force, O(N^2).  The reference implementation.
* :func:`density_sorted_scan` — sorts once and sweeps a two-pointer
  window, O(N log N).  Produces values identical to the naive estimator.
* :func:`density_from_histogram` — unit-region approximation, O(MN) for a
  whole batch.  Optionally smoothed across batches with an exponential
  moving average of per-bin counts.

A density value at a query point g is the number of examples whose
gradient norm falls in the half-open window [g - eps/2, g + eps/2),
normalized by the part of the window that intersects [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import config as _numba_config
from numba import njit, prange

# Skip the TBB/OMP probing (old TBB versions trigger a load-time warning);
# the portable built-in pool is just as fast for this kernel.
if _numba_config.THREADING_LAYER == "default":
    _numba_config.THREADING_LAYER = "workqueue"

__all__ = [
    "UnitRegionHistogram",
    "bin_index",
    "build_histogram",
    "density_all_naive",
    "density_at",
    "density_for_weighting",
    "density_from_histogram",
    "density_sorted_scan",
    "ema_density_floor",
    "ema_update",
    "harmonizing_weights",
]


def _check_norms(gs) -> np.ndarray:
    gs = np.atleast_1d(np.asarray(gs, dtype=np.float64))
    if gs.ndim != 1:
        raise ValueError("gradient norms must be one-dimensional")
    if gs.size and (np.any(~np.isfinite(gs)) or gs.min() < 0.0 or gs.max() > 1.0):
        raise ValueError("gradient norms must lie in [0, 1]")
    return gs


def _check_epsilon(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    return epsilon


def density_at(gs, query: float, epsilon: float) -> float:
    """Window-count density at a single query point.

    Counts the examples inside [query - eps/2, query + eps/2) and divides
    by the edge-clipped window length, so queries near 0 or 1 are not
    diluted by the part of the window that leaves the unit interval.
    """
    gs = _check_norms(gs)
    if gs.size == 0:
        raise ValueError("density undefined for an empty batch")
    epsilon = _check_epsilon(epsilon)
    query = float(query)
    if not 0.0 <= query <= 1.0:
        raise ValueError(f"query must lie in [0, 1], got {query}")
    half = 0.5 * epsilon
    lo = query - half
    hi = query + half
    count = int(np.count_nonzero((gs >= lo) & (gs < hi)))
    window = min(hi, 1.0) - max(lo, 0.0)
    return count / window


@njit(parallel=True, cache=True)
def _naive_kernel(gs, half):  # pragma: no cover - exercised via density_all_naive
    n = gs.size
    out = np.empty(n)
    for i in prange(n):
        lo = gs[i] - half
        hi = gs[i] + half
        count = 0
        for k in range(n):
            if gs[k] >= lo and gs[k] < hi:
                count += 1
        out[i] = count / (min(hi, 1.0) - max(lo, 0.0))
    return out


def density_all_naive(gs, epsilon: float) -> np.ndarray:
    """Density at every example's own gradient norm, by brute force.

    Quadratic in the batch size; kept as the reference against which the
    faster estimators are checked.  The double loop is JIT-compiled, which
    changes nothing about the arithmetic.
    """
    gs = _check_norms(gs)
    if gs.size == 0:
        raise ValueError("density undefined for an empty batch")
    epsilon = _check_epsilon(epsilon)
    return _naive_kernel(gs, 0.5 * epsilon)


def density_sorted_scan(gs, epsilon: float) -> np.ndarray:
    """Exact densities via one sort and a linear two-pointer sweep.

    Returns the same values as :func:`density_all_naive` (same counts, same
    window arithmetic) in O(N log N) instead of O(N^2).  Output order
    matches the input order.
    """
    gs = _check_norms(gs)
    if gs.size == 0:
        raise ValueError("density undefined for an empty batch")
    epsilon = _check_epsilon(epsilon)
    half = 0.5 * epsilon
    order = np.argsort(gs, kind="stable")
    s = gs[order]
    return _sorted_scan_kernel(s, half, order, gs.size)


@njit(cache=True)
def _sorted_scan_kernel(s, half, order, n):  # pragma: no cover
    dens = np.empty(n)
    lo = 0
    hi = 0
    for k in range(n):
        wlo = s[k] - half
        whi = s[k] + half
        while s[lo] < wlo:  # lo never passes k because s[k] >= wlo
            lo += 1
        while hi < n and s[hi] < whi:
            hi += 1
        dens[order[k]] = (hi - lo) / (min(whi, 1.0) - max(wlo, 0.0))
    return dens


def harmonizing_weights(gs, density) -> np.ndarray:
    """Per-example loss weights: batch size over the density at each example.

    Uniformly distributed gradient norms give every example weight 1;
    over-represented regions are weighted down, sparse ones up.
    """
    gs = _check_norms(gs)
    density = np.atleast_1d(np.asarray(density, dtype=np.float64))
    if density.shape != gs.shape:
        raise ValueError(
            f"need one density value per example: {gs.size} examples, "
            f"{density.size} densities"
        )
    bad = density <= 0.0
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValueError(
            f"non-positive density {density[i]!r} at index {i}; weights are "
            f"undefined (was the histogram built from this batch?)"
        )
    return gs.size / density


# --------------------------------------------------------------------------
# Unit-region histogram approximation
# --------------------------------------------------------------------------


def bin_index(g, bins: int):
    """Index of the unit region containing g, with g = 1 clamped to the top bin.

    Regions are the half-open intervals [j/bins, (j+1)/bins) for j in
    0..bins-1; the clamp keeps a perfectly misclassified example (g = 1)
    from falling off the end.
    """
    if bins < 1:
        raise ValueError(f"bins must be a positive integer, got {bins}")
    g = np.asarray(g, dtype=np.float64)
    idx = np.minimum(np.floor(g * bins).astype(np.int64), bins - 1)
    return int(idx) if idx.ndim == 0 else idx


@dataclass(frozen=True)
class UnitRegionHistogram:
    """Per-bin example counts over gradient-norm space, plus EMA state.

    ``raw_counts`` always reflect the most recent batch.  ``ema_counts``
    are only meaningful once ``initialized`` is true, i.e. after the first
    :func:`ema_update`; the first update copies the raw counts instead of
    averaging against the zero start.
    """

    bins: int
    raw_counts: np.ndarray
    ema_counts: np.ndarray
    momentum: float
    initialized: bool

    def __post_init__(self):
        if self.bins < 1:
            raise ValueError(f"bins must be a positive integer, got {self.bins}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        raw = np.asarray(self.raw_counts, dtype=np.int64)
        ema = np.asarray(self.ema_counts, dtype=np.float64)
        if raw.shape != (self.bins,) or ema.shape != (self.bins,):
            raise ValueError("count arrays must have exactly one entry per bin")
        if np.any(raw < 0) or np.any(ema < 0):
            raise ValueError("bin counts cannot be negative")
        object.__setattr__(self, "raw_counts", raw)
        object.__setattr__(self, "ema_counts", ema)

    @classmethod
    def empty(cls, bins: int, momentum: float = 0.75) -> "UnitRegionHistogram":
        """Fresh histogram with no counts; the first EMA update initializes it."""
        return cls(
            bins=bins,
            raw_counts=np.zeros(bins, dtype=np.int64),
            ema_counts=np.zeros(bins, dtype=np.float64),
            momentum=momentum,
            initialized=False,
        )


def build_histogram(gs, bins: int, momentum: float = 0.75) -> UnitRegionHistogram:
    """Bin a batch of gradient norms into raw per-region counts.

    The result is not EMA-initialized; feed counts through
    :func:`ema_update` to maintain smoothed statistics across batches.
    """
    gs = _check_norms(gs)
    counts = np.bincount(bin_index(gs, bins), minlength=bins).astype(np.int64)
    return UnitRegionHistogram(
        bins=bins,
        raw_counts=counts,
        ema_counts=np.zeros(bins, dtype=np.float64),
        momentum=momentum,
        initialized=False,
    )


def ema_update(hist: UnitRegionHistogram, new_counts) -> UnitRegionHistogram:
    """Fold one batch's per-bin counts into the moving average.

    The first update seeds the average with the counts themselves; later
    updates blend ``momentum`` parts old state with ``1 - momentum`` parts
    new counts.  Returns a new histogram; the input is left untouched.
    """
    new_counts = np.asarray(new_counts)
    if new_counts.shape != (hist.bins,):
        raise ValueError(
            f"count vector has length {new_counts.size}, expected {hist.bins}"
        )
    if np.any(new_counts < 0):
        raise ValueError("bin counts cannot be negative")
    raw = new_counts.astype(np.int64)
    if hist.initialized:
        ema = hist.momentum * hist.ema_counts + (1.0 - hist.momentum) * raw
    else:
        ema = raw.astype(np.float64)
    return UnitRegionHistogram(
        bins=hist.bins,
        raw_counts=raw,
        ema_counts=ema,
        momentum=hist.momentum,
        initialized=True,
    )


def density_from_histogram(hist: UnitRegionHistogram, g, use_ema: bool = False):
    """Approximate density at g: the count of g's bin times the bin count M.

    With ``use_ema`` the smoothed counts are used instead of the raw ones,
    which requires the histogram to have seen at least one update.
    """
    if use_ema and not hist.initialized:
        raise ValueError("EMA counts queried before any update")
    counts = hist.ema_counts if use_ema else hist.raw_counts
    idx = bin_index(g, hist.bins)
    out = counts[idx] * float(hist.bins)
    return float(out) if np.ndim(out) == 0 else out


def ema_density_floor(hist: UnitRegionHistogram) -> float:
    """Smallest density the EMA mode is allowed to report for weighting.

    One batch after occupancy, a bin's smoothed count is at least
    ``1 - momentum``; flooring at that level caps the weight any example
    can receive at N / (M * (1 - momentum)) even if its bin's average has
    decayed between occupancy spikes.
    """
    return hist.bins * (1.0 - hist.momentum)


def density_for_weighting(hist: UnitRegionHistogram, g, use_ema: bool = False):
    """Histogram density as used for harmonizing weights.

    Raw mode needs no floor: an example's own membership guarantees its
    bin count is at least one.  EMA mode is floored (see
    :func:`ema_density_floor`) to keep weights bounded.
    """
    dens = density_from_histogram(hist, g, use_ema=use_ema)
    if use_ema:
        dens = np.maximum(dens, ema_density_floor(hist))
        return float(dens) if np.ndim(dens) == 0 else dens
    return dens
