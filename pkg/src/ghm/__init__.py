"""Gradient harmonizing mechanism: density-aware loss reweighting.

The package measures how training examples distribute over gradient-norm
space, estimates that density exactly or through a unit-region histogram
(optionally EMA-smoothed across batches), and uses it to reweight
classification and regression losses so that neither the flood of easy
examples nor a handful of stubborn outliers dominates the gradient.
"""

from .cls_loss import (
    ce_grad_logit,
    ce_loss,
    focal_loss,
    ghm_c_approx,
    ghm_c_exact,
    gradient_norm_cls,
)
from .core import (
    ClassificationBatch,
    ClassificationExample,
    HarmonizedBatchResult,
    heavy_tailed_gradient_norms,
    logit,
    rng_from_seed,
    sigmoid,
    validate_batch,
    validate_residuals,
)
from .density import (
    UnitRegionHistogram,
    bin_index,
    build_histogram,
    density_all_naive,
    density_at,
    density_for_weighting,
    density_from_histogram,
    density_sorted_scan,
    ema_density_floor,
    ema_update,
    harmonizing_weights,
)
from .reg_loss import (
    asl1,
    asl1_grad,
    ghm_r,
    gradient_norm_reg,
    sl1,
    sl1_grad,
)
from .trainer import (
    ClsDataset,
    ClsDatasetSpec,
    GhmConfig,
    OptimizerConfig,
    RegDataset,
    RegDatasetSpec,
    TrainingDivergedError,
    TrainReport,
    gen_cls_dataset,
    gen_reg_dataset,
    sgd_momentum_step,
    train_classifier,
    train_regressor,
)

__version__ = "0.1.0"
