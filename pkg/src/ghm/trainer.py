"""Desk-scale training harness for comparing loss functions side by side.

Synthetic imbalanced datasets, a logistic classifier and a one-parameter
linear regressor, both trained with hand-derived gradients and plain SGD
with momentum.  No autodiff: every gradient in play has a closed form, so
the whole loop stays checkable against finite differences.

Runs are fully deterministic: the dataset seed fixes the data, the train
seed fixes batch shuffling, and all reductions are ordinary numpy sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cls_loss import ce_grad_logit, ce_loss, focal_loss, gradient_norm_cls
from .core import rng_from_seed, sigmoid
from .density import (
    UnitRegionHistogram,
    bin_index,
    density_for_weighting,
    ema_update,
    harmonizing_weights,
)
from .reg_loss import (
    DEFAULT_DELTA,
    DEFAULT_MU,
    DEFAULT_REG_BINS,
    asl1,
    asl1_grad,
    gradient_norm_reg,
    sl1,
    sl1_grad,
)

__all__ = [
    "CLS_LOSSES",
    "REG_LOSSES",
    "ClsDataset",
    "ClsDatasetSpec",
    "GhmConfig",
    "OptimizerConfig",
    "RegDataset",
    "RegDatasetSpec",
    "TrainReport",
    "TrainingDivergedError",
    "gen_cls_dataset",
    "gen_reg_dataset",
    "sgd_momentum_step",
    "train_classifier",
    "train_regressor",
]

CLS_LOSSES = ("ce", "focal", "ghm_c")
REG_LOSSES = ("sl1", "asl1", "ghm_r")


class TrainingDivergedError(RuntimeError):
    """Raised when a run produces a non-finite loss or model output."""


@dataclass(frozen=True)
class ClsDatasetSpec:
    """Two Gaussian clusters plus mislabeled points inside the positive one."""

    n_easy_neg: int
    n_pos: int
    n_outliers: int
    cluster_separation: float = 4.0
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.n_easy_neg, self.n_pos, self.n_outliers) < 0:
            raise ValueError("counts must be non-negative")
        if self.n_easy_neg + self.n_pos + self.n_outliers < 2:
            raise ValueError("dataset needs at least two points")
        if self.noise_scale <= 0:
            raise ValueError("noise_scale must be positive")


@dataclass(frozen=True)
class RegDatasetSpec:
    """Linear data with a fraction of systematically shifted targets."""

    n_inliers: int
    n_outliers: int
    inlier_noise: float = 0.02
    outlier_scale: float = 2.0
    true_weight: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if min(self.n_inliers, self.n_outliers) < 0:
            raise ValueError("counts must be non-negative")
        if self.n_inliers + self.n_outliers < 2:
            raise ValueError("dataset needs at least two points")
        if self.inlier_noise < 0:
            raise ValueError("inlier_noise must be non-negative")


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float
    momentum: float = 0.9
    weight_decay: float = 1e-4
    iterations: int = 100
    batch_size: int = 0  # 0 means full batch

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.batch_size < 0:
            raise ValueError("batch_size must be non-negative")


@dataclass(frozen=True)
class GhmConfig:
    """Unit-region settings for the harmonized training arms."""

    bins: int = 30
    momentum: float = 0.75
    use_ema: bool = True

    def __post_init__(self):
        if self.bins < 1:
            raise ValueError("bins must be a positive integer")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass(frozen=True)
class ClsDataset:
    features: np.ndarray  # (n, 2)
    labels: np.ndarray  # (n,) in {0, 1}


@dataclass(frozen=True)
class RegDataset:
    inputs: np.ndarray  # (n,)
    targets: np.ndarray  # (n,)
    outlier_mask: np.ndarray  # (n,) bool


@dataclass(frozen=True)
class TrainReport:
    """Per-iteration loss curve, fitted parameters and final metrics.

    ``weight_trace`` maps logged iteration indices to per-bin mean
    harmonizing weights (NaN for empty bins); populated only for
    harmonized arms when requested.
    """

    loss_curve: np.ndarray
    params: np.ndarray
    final_metrics: dict[str, float]
    weight_trace: dict[int, np.ndarray] | None = field(default=None)


def gen_cls_dataset(spec: ClsDatasetSpec) -> ClsDataset:
    """Sample the classification toy set: blocks [easy negatives, positives,
    outliers], where outliers sit in the positive cluster but carry label 0."""
    rng = rng_from_seed(spec.seed)
    half = 0.5 * spec.cluster_separation
    neg = rng.normal((-half, 0.0), spec.noise_scale, (spec.n_easy_neg, 2))
    pos = rng.normal((half, 0.0), spec.noise_scale, (spec.n_pos, 2))
    out = rng.normal((half, 0.0), spec.noise_scale, (spec.n_outliers, 2))
    features = np.concatenate([neg, pos, out], axis=0)
    labels = np.concatenate(
        [
            np.zeros(spec.n_easy_neg, dtype=np.int64),
            np.ones(spec.n_pos, dtype=np.int64),
            np.zeros(spec.n_outliers, dtype=np.int64),
        ]
    )
    return ClsDataset(features=features, labels=labels)


def gen_reg_dataset(spec: RegDatasetSpec) -> RegDataset:
    """Sample the regression toy set: y = w*x + noise, with outlier targets
    shifted upward by outlier_scale (a systematic labeling error)."""
    rng = rng_from_seed(spec.seed)
    n = spec.n_inliers + spec.n_outliers
    x = rng.uniform(0.5, 2.0, n)
    y = spec.true_weight * x + rng.normal(0.0, spec.inlier_noise, n)
    mask = np.zeros(n, dtype=bool)
    mask[spec.n_inliers :] = True
    y[mask] += spec.outlier_scale
    return RegDataset(inputs=x, targets=y, outlier_mask=mask)


def sgd_momentum_step(param, velocity, grad, *, learning_rate, momentum, weight_decay):
    """One classical-momentum step: v <- m*v + (grad + wd*param); param <- param - lr*v.

    Returns the updated ``(param, velocity)`` pair.
    """
    velocity = momentum * velocity + (grad + weight_decay * param)
    return param - learning_rate * velocity, velocity


class _BatchSampler:
    """Sequential mini-batches over shuffled epochs, reshuffled per epoch.

    A batch size of zero (or >= n) yields the full dataset in storage order
    every iteration.
    """

    def __init__(self, n: int, batch_size: int, seed: int):
        self.n = n
        self.batch_size = n if batch_size == 0 or batch_size >= n else batch_size
        self.full = self.batch_size == n
        self.rng = rng_from_seed(seed)
        self.order = np.arange(n)
        self.cursor = n  # force a shuffle on first use

    def next_batch(self) -> np.ndarray:
        if self.full:
            return self.order
        if self.cursor + self.batch_size > self.n:
            self.order = self.rng.permutation(self.n)
            self.cursor = 0
        idx = self.order[self.cursor : self.cursor + self.batch_size]
        self.cursor += self.batch_size
        return idx


def _cls_metrics(p: np.ndarray, labels: np.ndarray) -> dict[str, float]:
    pred = p >= 0.5
    actual = labels == 1
    tp = float(np.count_nonzero(pred & actual))
    fp = float(np.count_nonzero(pred & ~actual))
    fn = float(np.count_nonzero(~pred & actual))
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return {"precision": precision, "recall": recall, "f1": f1}


def _bin_mean_weights(g, weights, bins):
    sums = np.zeros(bins)
    counts = np.zeros(bins)
    idx = bin_index(g, bins)
    np.add.at(sums, idx, weights)
    np.add.at(counts, idx, 1.0)
    with np.errstate(invalid="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1.0), np.nan)


def train_classifier(
    dataset: ClsDataset,
    loss_kind: str,
    opt: OptimizerConfig,
    ghm: GhmConfig | None = None,
    *,
    seed: int = 0,
    focal_gamma: float = 2.0,
    focal_alpha_balance: float = 0.25,
    log_weights_every: int = 0,
) -> TrainReport:
    """Fit a logistic model (two weights plus bias) with the chosen loss.

    For the harmonized arm the unit-region histogram is refreshed from the
    current batch before the weights are read (update-then-use), with EMA
    smoothing across iterations unless disabled in ``ghm``.
    """
    if loss_kind not in CLS_LOSSES:
        raise ValueError(f"loss_kind must be one of {CLS_LOSSES}, got {loss_kind!r}")
    x = np.asarray(dataset.features, dtype=np.float64)
    y = np.asarray(dataset.labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != 2 or x.shape[0] < 2:
        raise ValueError("classifier expects an (n, 2) feature matrix with n >= 2")
    if ghm is None:
        ghm = GhmConfig()

    w = np.zeros(2)
    b = 0.0
    vw = np.zeros(2)
    vb = 0.0
    hist = UnitRegionHistogram.empty(ghm.bins, ghm.momentum)
    sampler = _BatchSampler(x.shape[0], opt.batch_size, seed)
    curve = np.empty(opt.iterations)
    trace: dict[int, np.ndarray] = {}

    for it in range(opt.iterations):
        idx = sampler.next_batch()
        xb0 = x[idx, 0]
        xb1 = x[idx, 1]
        yb = y[idx]
        nb = idx.size
        z = xb0 * w[0] + xb1 * w[1] + b
        if not np.all(np.isfinite(z)):
            raise TrainingDivergedError(f"non-finite model output at iteration {it}")
        p = sigmoid(z)

        if loss_kind == "ce":
            loss = float(np.mean(ce_loss(p, yb)))
            dz = ce_grad_logit(p, yb) / nb
        elif loss_kind == "focal":
            raw, grad = focal_loss(p, yb, focal_gamma, focal_alpha_balance)
            loss = float(np.mean(raw))
            dz = grad / nb
        else:  # ghm_c
            g = gradient_norm_cls(p, yb)
            counts = np.bincount(bin_index(g, ghm.bins), minlength=ghm.bins)
            hist = ema_update(hist, counts)
            dens = density_for_weighting(hist, g, use_ema=ghm.use_ema)
            beta = harmonizing_weights(g, dens)
            loss = float(np.mean(beta * ce_loss(p, yb)))
            dz = beta * ce_grad_logit(p, yb) / nb
            if log_weights_every > 0 and it % log_weights_every == 0:
                trace[it] = _bin_mean_weights(g, beta, ghm.bins)

        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at iteration {it}")
        curve[it] = loss

        gw = np.array([np.sum(dz * xb0), np.sum(dz * xb1)])
        gb = float(np.sum(dz))
        w, vw = sgd_momentum_step(
            w,
            vw,
            gw,
            learning_rate=opt.learning_rate,
            momentum=opt.momentum,
            weight_decay=opt.weight_decay,
        )
        b, vb = sgd_momentum_step(
            b,
            vb,
            gb,
            learning_rate=opt.learning_rate,
            momentum=opt.momentum,
            weight_decay=0.0,  # bias is not decayed
        )

    z = x[:, 0] * w[0] + x[:, 1] * w[1] + b
    if not np.all(np.isfinite(z)):
        raise TrainingDivergedError("non-finite model output after training")
    metrics = _cls_metrics(sigmoid(z), y)
    return TrainReport(
        loss_curve=curve,
        params=np.array([w[0], w[1], b]),
        final_metrics=metrics,
        weight_trace=trace or None,
    )


def train_regressor(
    dataset: RegDataset,
    loss_kind: str,
    opt: OptimizerConfig,
    ghm: GhmConfig | None = None,
    *,
    mu: float = DEFAULT_MU,
    delta: float = DEFAULT_DELTA,
    seed: int = 0,
    log_weights_every: int = 0,
) -> TrainReport:
    """Fit the one-parameter model y = w*x on residual losses.

    Residuals are d = w*x - y.  The harmonized arm bins the regression
    gradient norms with update-then-use EMA, mirroring the classifier.
    """
    if loss_kind not in REG_LOSSES:
        raise ValueError(f"loss_kind must be one of {REG_LOSSES}, got {loss_kind!r}")
    x = np.asarray(dataset.inputs, dtype=np.float64)
    y = np.asarray(dataset.targets, dtype=np.float64)
    if x.ndim != 1 or x.size < 2 or x.shape != y.shape:
        raise ValueError("regressor expects matching 1-d inputs/targets, n >= 2")
    if ghm is None:
        ghm = GhmConfig(bins=DEFAULT_REG_BINS)

    w = 0.0
    vw = 0.0
    hist = UnitRegionHistogram.empty(ghm.bins, ghm.momentum)
    sampler = _BatchSampler(x.size, opt.batch_size, seed)
    curve = np.empty(opt.iterations)
    trace: dict[int, np.ndarray] = {}

    for it in range(opt.iterations):
        idx = sampler.next_batch()
        xb = x[idx]
        d = w * xb - y[idx]
        if not np.all(np.isfinite(d)):
            raise TrainingDivergedError(f"non-finite residual at iteration {it}")
        nb = idx.size

        if loss_kind == "sl1":
            loss = float(np.mean(sl1(d, delta)))
            dd = sl1_grad(d, delta) / nb
        elif loss_kind == "asl1":
            loss = float(np.mean(asl1(d, mu)))
            dd = asl1_grad(d, mu) / nb
        else:  # ghm_r
            gr = gradient_norm_reg(d, mu)
            counts = np.bincount(bin_index(gr, ghm.bins), minlength=ghm.bins)
            hist = ema_update(hist, counts)
            dens = density_for_weighting(hist, gr, use_ema=ghm.use_ema)
            beta = harmonizing_weights(gr, dens)
            loss = float(np.mean(beta * asl1(d, mu)))
            dd = beta * asl1_grad(d, mu) / nb
            if log_weights_every > 0 and it % log_weights_every == 0:
                trace[it] = _bin_mean_weights(gr, beta, ghm.bins)

        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at iteration {it}")
        curve[it] = loss

        gw = float(np.sum(dd * xb))
        w, vw = sgd_momentum_step(
            w,
            vw,
            gw,
            learning_rate=opt.learning_rate,
            momentum=opt.momentum,
            weight_decay=opt.weight_decay,
        )

    errors = np.abs(w * x - y)
    metrics = {"median_abs_error": float(np.median(errors))}
    inliers = ~dataset.outlier_mask
    if np.any(inliers):
        metrics["median_abs_error_inliers"] = float(np.median(errors[inliers]))
    return TrainReport(
        loss_curve=curve,
        params=np.array([w]),
        final_metrics=metrics,
        weight_trace=trace or None,
    )
