"""Seeded dermoscopy image augmentation and dataset preparation."""
from .color import (
    ColorPcaModel,
    ColorShift,
    ColorStats,
    apply_color_shift,
    fit_color_pca,
    load_model,
    sample_color_shift,
    save_model,
)
from .committee import MetricsReport, PredictionSet, aggregate_mean, challenge_score, roc_auc
from .dataset import (
    LABELS,
    BalancePlan,
    FoldPlan,
    SampleRecord,
    balance_oversample,
    balance_partition,
    read_manifest,
    stratified_kfold,
    write_manifest,
)
from .geometric import BBox, CropSpec, D4Element, apply_crop, apply_d4, enumerate_d4, lesion_bbox, sample_crop
from .imagecore import ImageBuffer, SegMask, load_image, load_mask, save_image, save_mask
from .pipeline import materialize
from .rng import SeedContext
from .warp import (
    ControlPair,
    Ellipse,
    TpsTransform,
    fit_ellipse,
    make_control_pair,
    solve_tps,
    tps_eval,
    warp_image,
    warp_mask,
)

__version__ = "0.1.0"
